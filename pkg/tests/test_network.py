import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from gneseek.convex_sets import DimensionError
from gneseek.network import CommGraph, GraphError, from_edges, laplacian_apply, laplacian_kron, ring
from oracles import laplacian

vals = st.floats(-100, 100, allow_nan=False)


@st.composite
def connected_graphs(draw):
    N = draw(st.integers(2, 7))
    # random spanning tree plus extra edges
    edges = {}
    for j in range(2, N + 1):
        i = draw(st.integers(1, j - 1))
        edges[(i, j)] = draw(st.floats(0.1, 5))
    for i in range(1, N + 1):
        for j in range(i + 1, N + 1):
            if (i, j) not in edges and draw(st.booleans()):
                edges[(i, j)] = draw(st.floats(0.1, 5))
    return from_edges(N, [(i, j, w) for (i, j), w in edges.items()])


def test_two_node():
    g = from_edges(2, [(1, 2, 1.0)])
    assert np.array_equal(g.L, [[1, -1], [-1, 1]])
    assert g.lambda2 == pytest.approx(2.0) and g.lambda_max == pytest.approx(2.0)


def test_five_cycle_closed_form():
    g = ring(5)
    assert g.lambda2 == pytest.approx(2 - 2 * np.cos(2 * np.pi / 5), rel=1e-12)
    assert g.lambda_max == pytest.approx(2 - 2 * np.cos(4 * np.pi / 5), rel=1e-12)


def test_disconnected():
    with pytest.raises(GraphError, match="disconnected"):
        from_edges(3, [(1, 2, 1.0)])


@pytest.mark.parametrize("edges", [[(1, 1, 1.0)], [(1, 2, 0.0)], [(1, 2, -1.0)], [(1, 3, 1.0)],
                                   [(1, 2, 1.0), (2, 1, 1.0)]])
def test_bad_edges(edges):
    with pytest.raises(GraphError):
        from_edges(2, edges)


def test_bad_adjacency():
    with pytest.raises(GraphError):
        CommGraph([[0, 1], [2, 0]])
    with pytest.raises(GraphError):
        CommGraph([[1, 1], [1, 0]])


def test_edges_round_trip():
    edges = [(1, 2, 1.5), (2, 3, 0.5), (1, 3, 2.0)]
    g = from_edges(3, edges)
    assert sorted(g.edges()) == sorted(edges)
    assert np.array_equal(g.L, laplacian(3, edges))


def test_apply_hand_value():
    g = from_edges(2, [(1, 2, 1.0)])
    assert np.array_equal(laplacian_apply(g, 1, [1, 0]), [1, -1])


def test_apply_dimension():
    with pytest.raises(DimensionError):
        laplacian_apply(ring(3), 2, np.ones(5))


@given(connected_graphs(), st.integers(1, 3), st.data())
def test_apply_matches_kron(g, q, data):
    y = data.draw(arrays(float, g.N * q, elements=vals))
    assert np.allclose(laplacian_apply(g, q, y), laplacian_kron(g, q) @ y, atol=1e-9)


@given(connected_graphs(), st.integers(1, 3), st.data())
def test_null_space(g, q, data):
    v = data.draw(arrays(float, q, elements=vals))
    assert np.linalg.norm(laplacian_apply(g, q, np.tile(v, g.N))) <= 1e-12 * (1 + np.abs(v).max()) * 100
    assert g.lambda2 > 0


@given(connected_graphs(), st.integers(1, 3), st.data())
def test_orthogonal_to_consensus_and_quadratic_bound(g, q, data):
    y = data.draw(arrays(float, g.N * q, elements=vals))
    Ly = laplacian_apply(g, q, y)
    v = data.draw(arrays(float, q, elements=vals))
    assert abs(Ly @ np.tile(v, g.N)) <= 1e-9 * (1 + np.abs(Ly).sum() * np.abs(v).max())
    assert y @ Ly >= (Ly @ Ly) / g.lambda_max - 1e-9 * (1 + abs(y @ Ly))
