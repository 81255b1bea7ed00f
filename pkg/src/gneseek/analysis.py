"""Convergence certificate, full-information oracle and trajectory monitors."""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .convex_sets import project
from .game import GameSpec, game_constants, kkt_residual, pseudo_gradient
from .network import CommGraph
from .trajectory import Trajectory, online_channels

log = logging.getLogger(__name__)


class ConvergenceWarning(UserWarning):
    pass


class OracleError(RuntimeError):
    pass


@dataclass(frozen=True)
class ConvergenceCert:
    mu: float
    theta0: float
    theta: float
    N: int
    lambda2: float
    M: np.ndarray
    lambda_min: float
    c_min: float
    c: float

    @property
    def satisfied(self) -> bool:
        return self.c > self.c_min

    def as_dict(self):
        return {"mu": self.mu, "theta0": self.theta0, "theta": self.theta, "N": self.N,
                "lambda2": self.lambda2, "M": self.M.tolist(), "lambda_min_M": self.lambda_min,
                "c_min": self.c_min, "c": self.c, "satisfied": self.satisfied}


def compute_cert(mu, theta0, theta, N, lambda2, c, warn=True) -> ConvergenceCert:
    """Restricted-monotonicity matrix ``M`` and the gain threshold ``c_min``.

    The smallest eigenvalue of ``M`` is computed as ``det / lambda_max`` with the
    determinant in the factored form ``mu * lambda2 * (c - c_min) / N``, so its
    sign agrees with ``c - c_min`` exactly.
    """
    for name, val in (("mu", mu), ("theta0", theta0), ("theta", theta), ("lambda2", lambda2)):
        if not val > 0:
            raise ValueError(f"{name} must be positive, got {val}")
    if not c > 0:
        raise ValueError(f"c must be positive, got {c}")
    if theta0 < theta or theta < mu:
        # tolerated: sampled constants may break the ordering slightly
        log.debug("constants violate mu <= theta <= theta0: %s %s %s", mu, theta, theta0)
    s = theta0 + theta
    c_min = (s * s + 4.0 * mu * theta) / (4.0 * mu * lambda2)
    off = -s / (2.0 * math.sqrt(N))
    a, d = mu / N, c * lambda2 - theta
    M = np.array([[a, off], [off, d]])
    det = mu * lambda2 * (c - c_min) / N
    lam_max = 0.5 * (a + d) + math.hypot(0.5 * (a - d), off)
    lam_min = det / lam_max
    if warn and not c > c_min:
        warnings.warn(f"c = {c:g} <= c_min = {c_min:g}: convergence is not guaranteed",
                      ConvergenceWarning, stacklevel=2)
    return ConvergenceCert(float(mu), float(theta0), float(theta), int(N), float(lambda2),
                           M, float(lam_min), float(c_min), float(c))


def certify(g: GameSpec, gph: CommGraph, c: float, warn=True, **estimate_kwargs) -> ConvergenceCert:
    mu, theta0, theta = game_constants(g, **estimate_kwargs)
    return compute_cert(mu, theta0, theta, g.N, gph.lambda2, c, warn=warn)


@dataclass
class EquilibriumReport:
    x: np.ndarray
    lam: np.ndarray
    kkt_residual: float
    iterations: int
    active: np.ndarray
    linear_check: Optional[float] = None

    def as_dict(self):
        return {"x": self.x.tolist(), "lambda": self.lam.tolist(),
                "kkt_residual": self.kkt_residual, "iterations": self.iterations,
                "active": [bool(a) for a in self.active], "linear_check": self.linear_check}


def _active_set_solve(g: GameSpec, x, lam):
    """Solve the KKT system as linear equations on the active set guessed from (x, lam)."""
    G, g0, A, b = g.jacobian, g.offset_grad, g.A, g.b
    lo, hi = g.omega.lower, g.omega.upper
    trial = x - pseudo_gradient(g, x) - A.T @ lam
    at_lo, at_hi = trial <= lo, trial >= hi
    fixed = at_lo | at_hi
    free = ~fixed
    rows = (lam + A @ x - b) > 0
    xf = np.where(at_lo, lo, np.where(at_hi, hi, 0.0))
    nf, na = int(free.sum()), int(rows.sum())
    K = np.zeros((nf + na, nf + na))
    rhs = np.zeros(nf + na)
    K[:nf, :nf] = G[np.ix_(free, free)]
    K[:nf, nf:] = A[np.ix_(rows, free)].T
    K[nf:, :nf] = A[np.ix_(rows, free)]
    rhs[:nf] = -(G[np.ix_(free, fixed)] @ xf[fixed] + g0[free])
    rhs[nf:] = b[rows] - A[np.ix_(rows, fixed)] @ xf[fixed]
    sol = np.linalg.lstsq(K, rhs, rcond=None)[0]
    x_new = xf.copy()
    x_new[free] = sol[:nf]
    lam_new = np.zeros(g.m)
    lam_new[rows] = sol[nf:]
    return x_new, np.maximum(lam_new, 0.0)


def oracle_vgne(g: GameSpec, tol: float = 1e-10, max_iter: int = 500_000,
                x0=None, lam0=None) -> EquilibriumReport:
    """Full-information variational GNE by projected extragradient iterations.

    Iterates on the primal-dual operator ``(F(x) + A'lam, b - Ax)`` over
    ``Omega x R^m_+``. For quadratic games the iterate is additionally polished
    by solving the KKT equations on its active set; the distance between the
    iterative and the linear solution is reported as ``linear_check``.
    """
    A, b = g.A, g.b
    _, theta0, _ = game_constants(g)
    a_norm = np.linalg.norm(A, 2) if g.m else 0.0
    step = 0.5 / (theta0 + a_norm)
    x = project(g.omega, np.zeros(g.n) if x0 is None else np.asarray(x0, dtype=float))
    lam = np.zeros(g.m) if lam0 is None else np.maximum(np.asarray(lam0, dtype=float), 0.0)
    lo, hi = g.omega.lower, g.omega.upper

    res = kkt_residual(g, x, lam)
    it = 0
    linear_check = None
    polish_at = max(tol, 1e-7)
    while res > tol and it < max_iter:
        # extragradient: predictor then corrector, both projected
        xp = np.clip(x - step * (pseudo_gradient(g, x) + A.T @ lam), lo, hi)
        lp = np.maximum(lam - step * (b - A @ x), 0.0)
        x = np.clip(x - step * (pseudo_gradient(g, xp) + A.T @ lp), lo, hi)
        lam = np.maximum(lam - step * (b - A @ xp), 0.0)
        it += 1
        if it % 50 == 0:
            res = kkt_residual(g, x, lam)
            if g.is_quadratic and res <= polish_at:
                xs, ls = _active_set_solve(g, x, lam)
                rs = kkt_residual(g, xs, ls)
                if rs <= tol:
                    linear_check = float(np.linalg.norm(xs - x))
                    x, lam, res = xs, ls, rs
                    break
    res = kkt_residual(g, x, lam)
    if res > tol:
        raise OracleError(f"oracle did not reach tolerance {tol:g} in {it} iterations "
                          f"(residual {res:.3e}); check monotonicity and Slater's condition")
    if g.is_quadratic and linear_check is None:
        xs, ls = _active_set_solve(g, x, lam)
        linear_check = float(np.linalg.norm(xs - x))
    active = (A @ x - b) >= -1e-8 if g.m else np.zeros(0, dtype=bool)
    return EquilibriumReport(x, lam, res, it, active, linear_check)


def lyapunov_profile(V: np.ndarray, slack: float):
    """Fraction of consecutive samples where ``V`` does not increase beyond ``slack``,
    and the largest observed increase."""
    if len(V) < 2:
        return 1.0, 0.0
    dV = np.diff(V)
    return float(np.mean(dV <= slack)), float(max(dV.max(), 0.0))


def reference_state(g: GameSpec, traj: Trajectory, report: EquilibriumReport) -> np.ndarray:
    """Equilibrium ``(1 kron x*, z_limit, 1 kron lam*)`` matching the trajectory layout
    of the consensus subsystem (``xhat``/``zetahat``, ``z``, ``lam``)."""
    z_bar = traj.z[-1]
    return np.concatenate([np.tile(report.x, g.N), z_bar, np.tile(report.lam, g.N)])


def monitor_channels(g: GameSpec, gph: CommGraph, traj: Trajectory,
                     report: EquilibriumReport, original: Optional[GameSpec] = None) -> Trajectory:
    """Attach all monitor channels, including the Lyapunov value, to ``traj``.

    ``g`` must be the game the dynamics ran on (after dualization, for
    double integrators) and ``report`` its oracle solution.
    """
    if report.x.shape != (g.n,) or report.lam.shape != (g.m,):
        raise ValueError(f"report dims ({report.x.shape}, {report.lam.shape}) do not match "
                         f"game (n={g.n}, m={g.m})")
    if (traj.N, traj.n, traj.m) != (g.N, g.n, g.m):
        raise ValueError("trajectory dims do not match the game")
    if not all(k in traj.channels for k in ("kkt_residual", "consensus_x")):
        traj.channels.update(online_channels(g, gph, traj, original))
    ref = reference_state(g, traj, report)
    W = np.hstack([traj.xhat, traj.z, traj.lam])
    traj.channels["lyapunov"] = 0.5 * np.sum((W - ref) ** 2, axis=1)
    frac, worst = lyapunov_profile(traj.channels["lyapunov"], 10 * traj.h ** 2)
    traj.flags["lyapunov_monotone_fraction"] = frac
    traj.flags["lyapunov_max_increase"] = worst
    return traj
