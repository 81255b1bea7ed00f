"""Distributed primal-dual consensus dynamics for single-integrator agents.

Each agent ``i`` keeps its action ``x_i``, estimates of every other action,
a multiplier estimate ``lam_i >= 0`` and an auxiliary variable ``z_i``. The
closed loop is

    xhat_own'   = Pi_Omega(x, -(F(xhat) + Lam' lam + c [L_x xhat]_own))
    xhat_other' = -c [L_x xhat]_other
    z'          = L_lam lam
    lam'        = Pi_{>=0}(lam, Lam x - b - L_lam lam - L_lam z)

and is integrated with projected forward Euler.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .analysis import ConvergenceWarning, certify
from .convex_sets import MEMBERSHIP_TOL, NonnegOrthant, project, tangent_project
from .game import GameSpec, extended_pseudo_gradient, game_constants
from .network import CommGraph, laplacian_apply, laplacian_kron
from .trajectory import Trajectory, online_channels

log = logging.getLogger(__name__)


class DivergenceError(FloatingPointError):
    pass


class StateError(ValueError):
    pass


@dataclass
class SingleState:
    xhat: np.ndarray
    z: np.ndarray
    lam: np.ndarray

    def pack(self) -> np.ndarray:
        return np.concatenate([self.xhat, self.z, self.lam])

    @classmethod
    def unpack(cls, g: GameSpec, w) -> "SingleState":
        w = np.asarray(w, dtype=float)
        a, b = g.N * g.n, g.N * g.n + g.N * g.m
        if w.shape != (b + g.N * g.m,):
            raise StateError(f"flat state has shape {w.shape}, expected ({b + g.N * g.m},)")
        return cls(w[:a].copy(), w[a:b].copy(), w[b:].copy())

    @classmethod
    def initial(cls, g: GameSpec, x0, others0=None, z0=None, lam0=None) -> "SingleState":
        """Own actions projected onto the local sets; other blocks default to zero."""
        x0 = project(g.omega, x0)
        xhat = np.zeros(g.N * g.n)
        xhat[g.own_index] = x0
        if others0 is not None:
            xhat[g.others_index] = others0
        z = np.zeros(g.N * g.m) if z0 is None else np.asarray(z0, dtype=float)
        lam = np.zeros(g.N * g.m) if lam0 is None else np.maximum(np.asarray(lam0, dtype=float), 0)
        return cls(xhat, z, lam)


@dataclass
class FlowParams:
    """Integration settings.

    ``h`` of ``None`` selects the default step for the given game and graph
    (see :func:`default_step`). ``stride`` controls how often states are
    recorded; the final state is always recorded.
    """

    c: float
    h: Optional[float] = None
    t_max: float = 200.0
    eps_stop: float = 1e-8
    stride: int = 1

    def __post_init__(self):
        if not self.c > 0:
            raise ValueError("consensus gain c must be positive")
        if self.h is not None and not self.h > 0:
            raise ValueError("step h must be positive")
        if self.stride < 1:
            raise ValueError("stride must be >= 1")


def default_step(g: GameSpec, gph: CommGraph, c: float) -> float:
    _, theta0, _ = game_constants(g)
    lm = gph.lambda_max
    return min(0.1 / (theta0 + c * lm + lm + 1.0), 1e-2)


def resolve_step(g, gph, p: FlowParams) -> float:
    return p.h if p.h is not None else default_step(g, gph, p.c)


def _validate(g: GameSpec, gph: CommGraph, s: SingleState, omega=None):
    if gph.N != g.N:
        raise StateError(f"graph has {gph.N} nodes, game has {g.N} agents")
    if s.xhat.shape != (g.N * g.n,) or s.z.shape != (g.N * g.m,) or s.lam.shape != (g.N * g.m,):
        raise StateError("state dimensions do not match the game")
    omega = omega or g.omega
    if not omega.contains(s.xhat[g.own_index]):
        raise StateError("own actions lie outside the local sets")
    if np.any(s.lam < -MEMBERSHIP_TOL):
        raise StateError("multiplier estimates must be nonnegative")


def _drift(g: GameSpec, gph: CommGraph, c, s: SingleState):
    """Unprojected inputs: own-action input, estimate field, z field, dual input."""
    Lx = laplacian_apply(gph, g.n, s.xhat)
    u = -(extended_pseudo_gradient(g, s.xhat) + g.Lam.T @ s.lam + c * Lx[g.own_index])
    est = -c * Lx[g.others_index]
    Llam = laplacian_apply(gph, g.m, s.lam)
    zdot = Llam
    d = g.Lam @ s.xhat[g.own_index] - g.b_stack - Llam - laplacian_apply(gph, g.m, s.z)
    return u, est, zdot, d


def vector_field_single(g: GameSpec, gph: CommGraph, c: float, s: SingleState) -> np.ndarray:
    """Right-hand side of the closed loop, flattened like :meth:`SingleState.pack`."""
    _validate(g, gph, s)
    u, est, zdot, d = _drift(g, gph, c, s)
    xdot = np.empty(g.N * g.n)
    xdot[g.own_index] = tangent_project(g.omega, s.xhat[g.own_index], u)
    xdot[g.others_index] = est
    lamdot = tangent_project(NonnegOrthant(g.N * g.m), np.maximum(s.lam, 0.0), d)
    return np.concatenate([xdot, zdot, lamdot])


def step_single(g: GameSpec, gph: CommGraph, p: FlowParams, s: SingleState,
                h: Optional[float] = None) -> SingleState:
    """One projected forward-Euler step of the closed loop."""
    h = h if h is not None else resolve_step(g, gph, p)
    u, est, zdot, d = _drift(g, gph, p.c, s)
    xhat = s.xhat.copy()
    xhat[g.own_index] = project(g.omega, s.xhat[g.own_index] + h * u)
    xhat[g.others_index] = s.xhat[g.others_index] + h * est
    out = SingleState(xhat, s.z + h * zdot, np.maximum(s.lam + h * d, 0.0))
    if not (np.all(np.isfinite(out.xhat)) and np.all(np.isfinite(out.lam)) and np.all(np.isfinite(out.z))):
        raise DivergenceError("state became non-finite; reduce the step or check the game")
    return out


def assemble_linear_part(g: GameSpec, gph: CommGraph, c: float):
    """Dense operators of the compact form ``w' = Pi_Xi(w, -B(w) - Phi w)``.

    Returns ``(Phi, B_lin, B_off)`` with ``Phi`` skew-symmetric and, for
    quadratic games, ``B(w) = B_lin w + B_off``. For other games ``B_lin``
    contains only the Laplacian terms and ``B_off`` is ``None``.
    """
    N, n, m = g.N, g.n, g.m
    nx, nz = N * n, N * m
    dim = nx + 2 * nz
    R = np.zeros((n, nx))
    R[np.arange(n), g.own_index] = 1.0
    Lx, Ll = laplacian_kron(gph, n), laplacian_kron(gph, m)
    LamR = g.Lam @ R

    Phi = np.zeros((dim, dim))
    xs, zs, ls = slice(0, nx), slice(nx, nx + nz), slice(nx + nz, dim)
    Phi[xs, ls] = LamR.T
    Phi[zs, ls] = -Ll
    Phi[ls, xs] = -LamR
    Phi[ls, zs] = Ll

    B_lin = np.zeros((dim, dim))
    B_lin[xs, xs] = c * Lx
    B_lin[ls, ls] = Ll
    B_off = None
    if g.is_quadratic:
        E = np.zeros((n, nx))
        for i in range(N):
            E[g.block(i), i * n:(i + 1) * n] = g.jacobian[g.block(i)]
        B_lin[xs, xs] += R.T @ E
        B_off = np.concatenate([R.T @ g.offset_grad, np.zeros(nz), g.b_stack])
    return Phi, B_lin, B_off


def state_bounds(g: GameSpec, omega=None):
    """Box ``Xi`` containing the flat single-integrator state."""
    omega = omega or g.omega
    nx, nz = g.N * g.n, g.N * g.m
    lo = np.full(nx + 2 * nz, -np.inf)
    hi = np.full(nx + 2 * nz, np.inf)
    lo[g.own_index] = omega.lower
    hi[g.own_index] = omega.upper
    lo[nx + nz:] = 0.0
    return lo, hi


class SingleStepper:
    """Precomputed projected-Euler map on flat states.

    Quadratic games use the assembled affine drift (one matrix-vector product
    per step); other games fall back to :func:`step_single`.
    """

    def __init__(self, g: GameSpec, gph: CommGraph, p: FlowParams, h: Optional[float] = None):
        self.g, self.gph, self.p = g, gph, p
        self.h = h if h is not None else resolve_step(g, gph, p)
        self.lo, self.hi = state_bounds(g)
        self.affine = g.is_quadratic
        if self.affine:
            Phi, B_lin, B_off = assemble_linear_part(g, gph, p.c)
            K = -(B_lin + Phi)
            self.P = np.eye(K.shape[0]) + self.h * K
            self.k = -self.h * B_off

    def drift_input(self, w: np.ndarray) -> np.ndarray:
        """Unprojected drift ``-B(w) - Phi w`` at a flat state."""
        if self.affine:
            return ((self.P @ w + self.k) - w) / self.h
        s = SingleState.unpack(self.g, w)
        u, est, zdot, d = _drift(self.g, self.gph, self.p.c, s)
        xdot = np.empty(self.g.N * self.g.n)
        xdot[self.g.own_index] = u
        xdot[self.g.others_index] = est
        return np.concatenate([xdot, zdot, d])

    def __call__(self, w: np.ndarray) -> np.ndarray:
        if self.affine:
            out = self.P @ w
            out += self.k
            np.clip(out, self.lo, self.hi, out=out)
        else:
            out = step_single(self.g, self.gph, self.p, SingleState.unpack(self.g, w), self.h).pack()
        if not np.isfinite(out).all():
            raise DivergenceError(f"state became non-finite (step h={self.h:g}, c={self.p.c:g})")
        return out


def _integrate(stepper, w0, h, p: FlowParams, record_extra=None):
    """Shared loop: iterate ``stepper`` until the scaled increment drops below
    ``eps_stop`` or ``t_max`` is reached. Returns times, recorded rows, reason, steps."""
    max_steps = int(math.ceil(p.t_max / h))
    thresh = (p.eps_stop * h) ** 2
    w = w0
    ts, rows = [0.0], [record_extra(w, None) if record_extra else w.copy()]
    reason = "time_budget"
    k = 0
    while k < max_steps:
        w_new = stepper(w)
        k += 1
        diff = w_new - w
        done = diff @ diff <= thresh
        w = w_new
        if done or k % p.stride == 0 or k == max_steps:
            ts.append(k * h)
            rows.append(record_extra(w, k) if record_extra else w.copy())
        if done:
            reason = "converged"
            break
    return np.array(ts), np.array(rows), reason, k


def simulate_single(g: GameSpec, gph: CommGraph, p: FlowParams, s0: SingleState,
                    check_condition: bool = True) -> Trajectory:
    """Integrate the closed loop from ``s0``.

    Stops when ``||w_{k+1} - w_k|| / h <= eps_stop`` (reason ``"converged"``)
    or when ``t_max`` is exhausted (reason ``"time_budget"``). A state that is
    already an equilibrium yields a trajectory with the initial and one
    repeated sample.
    """
    _validate(g, gph, s0)
    cert = certify(g, gph, p.c, warn=False) if check_condition else None
    if cert is not None and not cert.satisfied:
        warnings.warn(f"c = {p.c:g} <= c_min = {cert.c_min:g}; convergence is not guaranteed",
                      ConvergenceWarning, stacklevel=2)
    stepper = SingleStepper(g, gph, p)
    # absorb the membership tolerance so every recorded state lies in Xi exactly
    w0 = np.clip(s0.pack(), stepper.lo, stepper.hi)
    ts, rows, reason, k = _integrate(stepper, w0, stepper.h, p)
    traj = Trajectory("single", g.N, g.n, g.m, ts, rows, stepper.h, p.c, reason, k)
    traj.channels.update(online_channels(g, gph, traj))
    if cert is not None:
        traj.flags["certificate_satisfied"] = cert.satisfied
        traj.flags["c_min"] = cert.c_min
    log.info("single-integrator run: %s after %d steps (t=%.3f)", reason, k, ts[-1])
    return traj
