"""Weighted undirected communication graphs and their Laplacians."""

from __future__ import annotations

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from .convex_sets import DimensionError

CONNECTIVITY_TOL = 1e-10


class GraphError(ValueError):
    pass


class CommGraph:
    """Connected weighted graph over agents ``0..N-1`` (immutable)."""

    def __init__(self, W):
        W = np.array(W, dtype=float)
        if W.ndim != 2 or W.shape[0] != W.shape[1]:
            raise GraphError(f"adjacency must be square, got shape {W.shape}")
        if not np.allclose(W, W.T, rtol=0, atol=0):
            raise GraphError("adjacency must be symmetric")
        if np.any(W < 0):
            raise GraphError("edge weights must be nonnegative")
        if np.any(np.diag(W) != 0):
            raise GraphError("self-loops are not allowed")
        self.N = W.shape[0]
        self.W = W
        self.L = np.diag(W.sum(axis=1)) - W
        eig = np.linalg.eigvalsh(self.L)
        self.lambda2 = float(eig[1]) if self.N > 1 else 0.0
        self.lambda_max = float(eig[-1])
        ncomp, _ = connected_components(csr_matrix(W > 0), directed=False)
        if ncomp != 1 or (self.N > 1 and self.lambda2 <= CONNECTIVITY_TOL):
            raise GraphError(f"communication graph is disconnected ({ncomp} components, "
                             f"lambda2={self.lambda2:.3e})")
        for a in (self.W, self.L):
            a.setflags(write=False)

    def edges(self):
        """Edges as 1-based ``(i, j, w)`` triples with ``i < j``."""
        iu, ju = np.nonzero(np.triu(self.W))
        return [(int(i) + 1, int(j) + 1, float(self.W[i, j])) for i, j in zip(iu, ju)]

    def __repr__(self):
        return f"CommGraph(N={self.N}, edges={len(self.edges())}, lambda2={self.lambda2:.4g})"


def from_edges(N: int, edges) -> CommGraph:
    """Build a graph from 1-based ``(i, j, w)`` triples."""
    if N < 1:
        raise GraphError("need at least one node")
    W = np.zeros((N, N))
    for e in edges:
        i, j, w = e if len(e) == 3 else (*e, 1.0)
        i, j, w = int(i), int(j), float(w)
        if not (1 <= i <= N and 1 <= j <= N):
            raise GraphError(f"edge ({i}, {j}) references a node outside 1..{N}")
        if i == j:
            raise GraphError(f"self-loop at node {i}")
        if not w > 0:
            raise GraphError(f"edge ({i}, {j}) has nonpositive weight {w}")
        if W[i - 1, j - 1] != 0:
            raise GraphError(f"duplicate edge ({i}, {j})")
        W[i - 1, j - 1] = W[j - 1, i - 1] = w
    return CommGraph(W)


def ring(N: int, weight: float = 1.0) -> CommGraph:
    if N == 2:
        return from_edges(2, [(1, 2, weight)])
    return from_edges(N, [(i, i % N + 1, weight) for i in range(1, N + 1)])


def laplacian_apply(gph: CommGraph, q: int, y) -> np.ndarray:
    """``(L kron I_q) y`` computed blockwise."""
    y = np.asarray(y, dtype=float)
    if y.shape != (gph.N * q,):
        raise DimensionError(f"expected length {gph.N * q}, got shape {y.shape}")
    return (gph.L @ y.reshape(gph.N, q)).reshape(-1)


def laplacian_kron(gph: CommGraph, q: int) -> np.ndarray:
    """Dense ``L kron I_q``; only for assembling small linear operators."""
    return np.kron(gph.L, np.eye(q))
