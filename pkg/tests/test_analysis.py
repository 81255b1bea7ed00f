import warnings

import numpy as np
import pytest
from hypothesis import given, strategies as st

from gneseek.analysis import (
    ConvergenceWarning, OracleError, certify, compute_cert, lyapunov_profile, monitor_channels,
    oracle_vgne,
)
from gneseek.convex_sets import FullSpace
from gneseek.flow_single import FlowParams, SingleState, simulate_single
from gneseek.game import kkt_residual, quadratic_game
from gneseek.scenarios import random_quadratic_game
from conftest import TWO_Q, TWO_q
from oracles import solve_equality_kkt


class TestCertificate:
    def test_threshold_example(self):
        cert = compute_cert(1.0, 3.0, 3.0, 2, 2.0, 10.0)
        assert cert.c_min == pytest.approx(6.0)
        assert cert.satisfied and cert.lambda_min > 0
        assert np.allclose(cert.M, cert.M.T)

    def test_boundary_not_satisfied(self):
        with pytest.warns(ConvergenceWarning):
            cert = compute_cert(1.0, 3.0, 3.0, 2, 2.0, 6.0)
        assert not cert.satisfied and cert.lambda_min <= 0

    @pytest.mark.parametrize("mu,lam2", [(1.0, 2.0), (0.5, 0.3), (4.0, 1.7)])
    def test_degenerate_single_agent(self, mu, lam2):
        edge = 2 * mu / lam2
        above = compute_cert(mu, mu, mu, 1, lam2, edge * 1.001, warn=False)
        below = compute_cert(mu, mu, mu, 1, lam2, edge * 0.999, warn=False)
        assert np.allclose(above.M, [[mu, -mu], [-mu, edge * 1.001 * lam2 - mu]])
        assert above.c_min == pytest.approx(edge)
        assert above.lambda_min > 0 >= below.lambda_min

    @given(st.floats(0.01, 10), st.floats(1, 5), st.floats(0, 1), st.integers(1, 50),
           st.floats(0.01, 10))
    def test_sharpness(self, mu, r0, r, N, lam2):
        theta = mu + r * (r0 * mu - mu)
        theta0 = r0 * mu
        c_min = compute_cert(mu, theta0, theta, N, lam2, 1.0, warn=False).c_min
        up = compute_cert(mu, theta0, theta, N, lam2, c_min * (1 + 1e-6), warn=False)
        down = compute_cert(mu, theta0, theta, N, lam2, c_min * (1 - 1e-6), warn=False)
        assert up.lambda_min > 0 and up.satisfied
        assert down.lambda_min <= 0 and not down.satisfied

    @given(st.floats(0.1, 5), st.floats(1, 4), st.integers(1, 10), st.floats(0.1, 5), st.floats(0.1, 50))
    def test_lambda_min_matches_eigensolver(self, mu, r0, N, lam2, c):
        cert = compute_cert(mu, r0 * mu, r0 * mu, N, lam2, c, warn=False)
        ev = np.linalg.eigvalsh(cert.M).min()
        assert cert.lambda_min == pytest.approx(ev, rel=1e-8, abs=1e-10 * np.abs(cert.M).max())

    @pytest.mark.parametrize("args", [(0, 1, 1, 2, 1, 1), (1, 1, 1, 2, 0, 1), (1, 1, 1, 2, 1, 0),
                                      (-1, 1, 1, 2, 1, 1)])
    def test_rejects_nonpositive(self, args):
        with pytest.raises(ValueError):
            compute_cert(*args)

    def test_certify_uses_graph(self, two_free, pair_graph):
        cert = certify(two_free, pair_graph, 10.0)
        assert cert.lambda2 == pytest.approx(2.0) and cert.N == 2
        s = 3 + np.sqrt(5)
        assert cert.c_min == pytest.approx((s * s + 4 * np.sqrt(5)) / 8)


class TestOracle:
    def test_unconstrained(self, two_free):
        rep = oracle_vgne(two_free)
        assert np.allclose(rep.x, [0, 1], atol=1e-10)
        assert rep.kkt_residual <= 1e-10 and rep.lam.shape == (0,)

    def test_coupled(self, two_coupled):
        rep = oracle_vgne(two_coupled)
        assert np.allclose(rep.x, [-0.25, 0.75], atol=1e-10)
        assert np.allclose(rep.lam, [0.75], atol=1e-10)
        assert rep.active.tolist() == [True]
        assert rep.linear_check is not None and rep.linear_check <= 1e-8

    def test_matches_equality_solve(self, two_coupled):
        x, lam = solve_equality_kkt(two_coupled.jacobian, two_coupled.offset_grad, two_coupled.A, two_coupled.b)
        rep = oracle_vgne(two_coupled)
        assert np.allclose(rep.x, x, atol=1e-10) and np.allclose(rep.lam, lam, atol=1e-10)

    @pytest.mark.parametrize("seed", range(8))
    def test_tolerance_refinement_and_warm_start(self, seed):
        g = random_quadratic_game(2 + seed % 4, n_i=1 + seed % 2, m=seed % 4, seed=seed).game
        tol = 1e-8
        a = oracle_vgne(g, tol=tol)
        b = oracle_vgne(g, tol=tol / 10)
        assert np.linalg.norm(a.x - b.x) <= tol
        warm = oracle_vgne(g, tol=tol, x0=a.x, lam0=a.lam)
        assert np.linalg.norm(warm.x - a.x) <= tol
        assert np.all(a.lam >= 0) and kkt_residual(g, a.x, a.lam) <= tol

    def test_non_quadratic(self):
        from gneseek.game import AgentSpec, GameSpec
        grad = [lambda x: np.array([x[0] ** 3 + 2 * x[0] + x[1] - 1]),
                lambda x: np.array([x[1] ** 3 + 2 * x[1] + x[0] + 1])]
        g = GameSpec([AgentSpec(1, grad[0], FullSpace(1)), AgentSpec(1, grad[1], FullSpace(1))])
        rep = oracle_vgne(g)
        assert rep.kkt_residual <= 1e-10 and rep.linear_check is None

    def test_infeasible_raises(self):
        g = quadratic_game(TWO_Q, TWO_q, [FullSpace(1)] * 2, [[[1.0], [-1.0]], [[1.0], [-1.0]]],
                           b=[-1.0, -1.0])
        with pytest.raises(OracleError):
            oracle_vgne(g, max_iter=2000)


class TestMonitors:
    def run(self, g, gph, c, **kw):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", ConvergenceWarning)
            tr = simulate_single(g, gph, FlowParams(c=c, **kw), SingleState.initial(g, [1.0, -1.0]))
        return monitor_channels(g, gph, tr, oracle_vgne(g))

    def test_converged_channels(self, two_coupled, pair_graph):
        tr = self.run(two_coupled, pair_graph, 10.0, stride=5)
        for name in ("kkt_residual", "consensus_x", "consensus_lambda", "coupling_violation",
                     "local_violation", "lyapunov"):
            assert tr.channels[name][-1] <= 1e-7, name
        assert tr.flags["lyapunov_monotone_fraction"] == 1.0

    def test_estimates_near_oracle(self, two_coupled, pair_graph):
        tr = self.run(two_coupled, pair_graph, 10.0, stride=50)
        assert np.abs(tr.xhat[-1] - np.tile([-0.25, 0.75], 2)).max() <= 1e-7
        assert np.abs(tr.lam[-1] - 0.75).max() <= 1e-7

    def test_below_threshold_still_recorded(self, two_coupled, pair_graph):
        tr = self.run(two_coupled, pair_graph, 0.2, t_max=20.0, stride=5)
        assert len(tr.channels["lyapunov"]) == len(tr)
        assert "lyapunov_monotone_fraction" in tr.flags

    def test_dimension_mismatch(self, two_coupled, two_free, pair_graph):
        tr = simulate_single(two_coupled, pair_graph, FlowParams(c=10.0, t_max=1.0),
                             SingleState.initial(two_coupled, [0.0, 0.0]))
        with pytest.raises(ValueError):
            monitor_channels(two_coupled, pair_graph, tr, oracle_vgne(two_free))

    def test_lyapunov_profile(self):
        frac, worst = lyapunov_profile(np.array([5.0, 4.0, 4.05, 3.0, 2.0]), 0.01)
        assert frac == 0.75 and worst == pytest.approx(0.05)
        assert lyapunov_profile(np.array([1.0]), 0.0) == (1.0, 0.0)
