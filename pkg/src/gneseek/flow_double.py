"""Equilibrium seeking for double-integrator agents via prediction coordinates.

Agent ``i`` has position ``x_i`` and velocity ``v_i``. With the prediction
``zeta_i = x_i + h_i v_i`` and the input ``u_i = (u~_i - v_i) / h_i`` the loop
splits into a cascade: ``(zetahat, z, lam)`` follows the single-integrator
controller on an unconstrained action space, and the velocities obey the
stable filter ``H v' = u~ - v`` driven by it.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass

import numpy as np

from .analysis import ConvergenceWarning, certify
from .convex_sets import DimensionError
from .flow_single import (
    FlowParams, SingleState, SingleStepper, StateError, _drift, _integrate, vector_field_single,
)
from .game import GameSpec, embed
from .network import CommGraph
from .trajectory import Trajectory, online_channels

log = logging.getLogger(__name__)


class ConfigurationError(ValueError):
    pass


@dataclass(frozen=True)
class GainsH:
    h: np.ndarray

    def __post_init__(self):
        h = np.atleast_1d(np.asarray(self.h, dtype=float))
        if np.any(~(h > 0)):
            raise ValueError("all prediction gains h_i must be positive")
        object.__setattr__(self, "h", h)

    @classmethod
    def uniform(cls, N: int, value: float = 1.0) -> "GainsH":
        return cls(np.full(N, value))

    def diag(self, g: GameSpec) -> np.ndarray:
        """Diagonal of ``H = diag(h_i I_{n_i})``."""
        if self.h.shape != (g.N,):
            raise DimensionError(f"need {g.N} gains, got {self.h.shape[0]}")
        return np.repeat(self.h, g.dims)


def to_zeta(x, v, H) -> np.ndarray:
    x, v, H = (np.asarray(a, dtype=float) for a in (x, v, H))
    if not x.shape == v.shape == H.shape:
        raise DimensionError(f"shapes {x.shape}, {v.shape}, {H.shape} differ")
    return x + H * v


def from_zeta(zeta, v, H) -> np.ndarray:
    zeta, v, H = (np.asarray(a, dtype=float) for a in (zeta, v, H))
    if not zeta.shape == v.shape == H.shape:
        raise DimensionError(f"shapes {zeta.shape}, {v.shape}, {H.shape} differ")
    return zeta - H * v


@dataclass
class DoubleState:
    """Positions, velocities, others' prediction estimates, ``z`` and ``lam``.

    The own blocks of the stacked predictions are not stored; they are always
    ``x + H v`` (see :meth:`zetahat`).
    """

    x: np.ndarray
    v: np.ndarray
    zeta_others: np.ndarray
    z: np.ndarray
    lam: np.ndarray

    def zetahat(self, g: GameSpec, H: np.ndarray) -> np.ndarray:
        return embed(g, to_zeta(self.x, self.v, H), self.zeta_others)

    def pack(self) -> np.ndarray:
        return np.concatenate([self.x, self.v, self.zeta_others, self.z, self.lam])

    @classmethod
    def initial(cls, g: GameSpec, x0, v0=None, others0=None, z0=None, lam0=None) -> "DoubleState":
        x0 = np.asarray(x0, dtype=float)
        v0 = np.zeros(g.n) if v0 is None else np.asarray(v0, dtype=float)
        others = np.zeros((g.N - 1) * g.n) if others0 is None else np.asarray(others0, dtype=float)
        z = np.zeros(g.N * g.m) if z0 is None else np.asarray(z0, dtype=float)
        lam = np.zeros(g.N * g.m) if lam0 is None else np.asarray(lam0, dtype=float)
        return cls(x0, v0, others, z, lam)

    def single_view(self, g: GameSpec, H: np.ndarray) -> SingleState:
        """The ``(zetahat, z, lam)`` subsystem state."""
        return SingleState(self.zetahat(g, H), self.z.copy(), self.lam.copy())


def require_unbounded(g: GameSpec):
    bounded = [i + 1 for i, a in enumerate(g.agents) if a.omega.is_bounded()]
    if bounded:
        raise ConfigurationError(
            f"agents {bounded} have bounded local sets; double-integrator agents need "
            "unconstrained actions (dualize local sets into the coupling constraints)")


def _validate(g, gph, H, s: DoubleState):
    require_unbounded(g)
    if gph.N != g.N:
        raise StateError(f"graph has {gph.N} nodes, game has {g.N} agents")
    shapes = (s.x.shape, s.v.shape, s.zeta_others.shape, s.z.shape, s.lam.shape)
    want = ((g.n,), (g.n,), ((g.N - 1) * g.n,), (g.N * g.m,), (g.N * g.m,))
    if shapes != want:
        raise StateError(f"state shapes {shapes} do not match {want}")
    if np.any(s.lam < -1e-9):
        raise StateError("multiplier estimates must be nonnegative")


def vector_field_double(g: GameSpec, gph: CommGraph, c: float, gains: GainsH,
                        s: DoubleState) -> np.ndarray:
    """Time derivative of ``s``, flattened like :meth:`DoubleState.pack`."""
    H = gains.diag(g)
    _validate(g, gph, H, s)
    ss = s.single_view(g, H)
    field = vector_field_single(g, gph, c, ss)
    u_tilde, est, zdot, _ = _drift(g, gph, c, ss)
    nx, nz = g.N * g.n, g.N * g.m
    vdot = (u_tilde - s.v) / H
    return np.concatenate([s.v, vdot, est, zdot, field[nx + nz:]])


def zeta_field(g: GameSpec, gph: CommGraph, c: float, gains: GainsH, s: DoubleState) -> np.ndarray:
    """Derivative of the ``(zetahat, z, lam)`` subsystem implied by the double-integrator field."""
    H = gains.diag(g)
    f = vector_field_double(g, gph, c, gains, s)
    n, nx = g.n, g.N * g.n
    xdot, vdot = f[:n], f[n:2 * n]
    zh = np.empty(nx)
    zh[g.own_index] = xdot + H * vdot
    zh[g.others_index] = f[2 * n:2 * n + nx - n]
    return np.concatenate([zh, f[2 * n + nx - n:]])


class DoubleStepper:
    """Euler step in ``(v, zetahat, z, lam)`` coordinates; positions are recovered
    as ``x = zeta - H v`` after every step."""

    def __init__(self, g: GameSpec, gph: CommGraph, p: FlowParams, gains: GainsH):
        require_unbounded(g)
        self.g = g
        self.H = gains.diag(g)
        self.single = SingleStepper(g, gph, p)
        self.h = self.single.h
        self.nv = g.n

    def __call__(self, y: np.ndarray) -> np.ndarray:
        """``y = (v, zetahat, z, lam)``."""
        n, g = self.nv, self.g
        v, w = y[:n], y[n:]
        w_new = self.single(w)
        # own prediction blocks are never clipped, so their increment is h * u~
        u_tilde = (w_new[g.own_index] - w[g.own_index]) / self.h
        v_new = v + (self.h / self.H) * (u_tilde - v)
        return np.concatenate([v_new, w_new])

    def to_record(self, y: np.ndarray, k=None) -> np.ndarray:
        n = self.nv
        v, w = y[:n], y[n:]
        x = w[self.g.own_index] - self.H * v
        return np.concatenate([x, v, w])


def simulate_double(g: GameSpec, gph: CommGraph, p: FlowParams, gains: GainsH, s0: DoubleState,
                    check_condition: bool = True, original: GameSpec = None) -> Trajectory:
    """Integrate the double-integrator closed loop from ``s0``.

    ``g`` must have unbounded local sets. ``original`` optionally names the
    game before dualization, against which coupling and local violations are
    reported. Stops when the increment of ``(v, zetahat, z, lam)`` divided by
    ``h`` drops below ``eps_stop``, or at ``t_max``.
    """
    H = gains.diag(g)
    _validate(g, gph, H, s0)
    cert = certify(g, gph, p.c, warn=False) if check_condition else None
    if cert is not None and not cert.satisfied:
        warnings.warn(f"c = {p.c:g} <= c_min = {cert.c_min:g}; convergence is not guaranteed",
                      ConvergenceWarning, stacklevel=2)
    stepper = DoubleStepper(g, gph, p, gains)
    ss = s0.single_view(g, H)
    y0 = np.concatenate([s0.v, ss.xhat, ss.z, np.maximum(ss.lam, 0.0)])
    ts, rows, reason, k = _integrate(stepper, y0, stepper.h, p, record_extra=stepper.to_record)
    traj = Trajectory("double", g.N, g.n, g.m, ts, rows, stepper.h, p.c, reason, k)
    traj.channels.update(online_channels(g, gph, traj, original))
    traj.flags["gains"] = gains.h.tolist()
    if cert is not None:
        traj.flags["certificate_satisfied"] = cert.satisfied
        traj.flags["c_min"] = cert.c_min
    log.info("double-integrator run: %s after %d steps (t=%.3f)", reason, k, ts[-1])
    return traj
