"""Recorded trajectories and the monitor channels computed on them."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .game import GameSpec, pseudo_gradient
from .network import CommGraph

CHANNELS = ("kkt_residual", "lyapunov", "consensus_x", "consensus_lambda",
            "coupling_violation", "local_violation")


@dataclass
class Trajectory:
    """Time-stamped controller states of one integration run.

    ``states`` rows are flat state vectors. For ``kind == "single"`` the layout
    is ``(xhat, z, lam)``; for ``kind == "double"`` it is
    ``(x, v, zetahat, z, lam)`` where ``zetahat`` holds the full stacked
    prediction estimates (own blocks equal ``x + H v``).
    """

    kind: str
    N: int
    n: int
    m: int
    t: np.ndarray
    states: np.ndarray
    h: float
    c: float
    stop_reason: str
    steps: int
    channels: dict = field(default_factory=dict)
    flags: dict = field(default_factory=dict)

    def _slices(self):
        N, n, m = self.N, self.n, self.m
        if self.kind == "single":
            sizes = [("xhat", N * n), ("z", N * m), ("lam", N * m)]
        else:
            sizes = [("x", n), ("v", n), ("xhat", N * n), ("z", N * m), ("lam", N * m)]
        out, start = {}, 0
        for name, size in sizes:
            out[name] = slice(start, start + size)
            start += size
        return out

    def part(self, name: str) -> np.ndarray:
        return self.states[:, self._slices()[name]]

    @property
    def xhat(self):
        return self.part("xhat")

    @property
    def lam(self):
        return self.part("lam")

    @property
    def z(self):
        return self.part("z")

    @property
    def v(self):
        if self.kind != "double":
            raise AttributeError("single-integrator trajectories carry no velocities")
        return self.part("v")

    def positions(self, own_index) -> np.ndarray:
        if self.kind == "double":
            return self.part("x")
        return self.xhat[:, own_index]

    def lam_mean(self) -> np.ndarray:
        if self.m == 0:
            return np.zeros((len(self.t), 0))
        return self.lam.reshape(len(self.t), self.N, self.m).mean(axis=1)

    @property
    def final(self) -> np.ndarray:
        return self.states[-1]

    @property
    def converged(self) -> bool:
        return self.stop_reason == "converged"

    def __len__(self):
        return len(self.t)


def _batch_laplacian_norm(gph: CommGraph, q: int, Y: np.ndarray) -> np.ndarray:
    if q == 0:
        return np.zeros(Y.shape[0])
    K = Y.shape[0]
    LY = np.einsum("ij,kjq->kiq", gph.L, Y.reshape(K, gph.N, q))
    return np.linalg.norm(LY.reshape(K, -1), axis=1)


def batch_pseudo_gradient(g: GameSpec, X: np.ndarray) -> np.ndarray:
    if g.is_quadratic:
        return X @ g.jacobian.T + g.offset_grad
    return np.array([pseudo_gradient(g, x) for x in X])


def batch_kkt_residual(g: GameSpec, X: np.ndarray, Lam: np.ndarray) -> np.ndarray:
    F = batch_pseudo_gradient(g, X)
    primal = X - np.clip(X - F - Lam @ g.A, g.omega.lower, g.omega.upper)
    dual = Lam - np.maximum(Lam + X @ g.A.T - g.b, 0.0)
    return np.linalg.norm(primal, axis=1) + np.linalg.norm(dual, axis=1)


def online_channels(g: GameSpec, gph: CommGraph, traj: Trajectory,
                    original: Optional[GameSpec] = None) -> dict:
    """Channels that need no reference equilibrium.

    ``g`` is the game the dynamics ran on. ``original`` (default ``g``) is the
    game before any dualization of local sets; coupling and local-set
    violations are measured against it.
    """
    original = original or g
    X = traj.positions(g.own_index)
    lam_bar = traj.lam_mean()
    out = {
        "kkt_residual": batch_kkt_residual(g, X, lam_bar),
        "consensus_x": _batch_laplacian_norm(gph, g.n, traj.xhat),
        "consensus_lambda": _batch_laplacian_norm(gph, g.m, traj.lam),
    }
    if original.m:
        viol = X @ original.A.T - original.b
        out["coupling_violation"] = np.maximum(viol.max(axis=1), 0.0)
    else:
        out["coupling_violation"] = np.zeros(len(traj))
    lo, hi = original.omega.lower, original.omega.upper
    if original.n:
        gap = np.maximum(lo - X, X - hi)
        out["local_violation"] = np.maximum(gap.max(axis=1), 0.0)
    else:
        out["local_violation"] = np.zeros(len(traj))
    return out
