"""Generalized games with affine coupling constraints.

A game has N agents; agent ``i`` controls ``x_i`` in ``R^{n_i}`` restricted to
a local convex set and shares the coupling constraint ``sum_i A_i x_i <= sum_i b_i``.

Partial-information estimates are stored stacked: ``xhat`` has length ``N*n``
and its ``i``-th block of length ``n`` is agent ``i``'s copy of the whole
action profile, whose own sub-block is the true action ``x_i``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .convex_sets import ConvexSet, DimensionError, FullSpace, Product, project

GradFn = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True, eq=False)
class QuadraticCost:
    """Cost ``J(x) = 0.5 x'Qx + q'x`` over the full stacked action ``x``.

    ``Q`` is symmetrized on construction; only its symmetric part enters ``J``.
    """

    Q: np.ndarray
    q: np.ndarray

    def __post_init__(self):
        Q = np.atleast_2d(np.asarray(self.Q, dtype=float))
        q = np.atleast_1d(np.asarray(self.q, dtype=float))
        if Q.shape[0] != Q.shape[1] or q.shape != (Q.shape[0],):
            raise DimensionError(f"inconsistent quadratic data: Q {Q.shape}, q {q.shape}")
        Q = 0.5 * (Q + Q.T)
        Q.setflags(write=False)
        q.setflags(write=False)
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "q", q)

    def value(self, x) -> float:
        x = np.asarray(x, dtype=float)
        return float(0.5 * x @ self.Q @ x + self.q @ x)


@dataclass(frozen=True, eq=False)
class AgentSpec:
    """One player: its action dimension, cost, local set and coupling data.

    ``cost`` is either a :class:`QuadraticCost` over the full action vector or a
    callable mapping the full action vector ``x`` (length ``n``) to the
    partial gradient with respect to this agent's own block (length ``dim``).
    """

    dim: int
    cost: object
    omega: ConvexSet
    A: np.ndarray = ()
    b: np.ndarray = ()

    def __post_init__(self):
        A = np.asarray(self.A, dtype=float).reshape(-1, self.dim)
        b = np.atleast_1d(np.asarray(self.b, dtype=float)).reshape(-1)
        if A.shape[0] != b.shape[0]:
            raise DimensionError(f"A_i has {A.shape[0]} rows but b_i has {b.shape[0]}")
        if self.omega.dim != self.dim:
            raise DimensionError(f"local set has dim {self.omega.dim}, agent dim is {self.dim}")
        if not (isinstance(self.cost, QuadraticCost) or callable(self.cost)):
            raise TypeError("cost must be a QuadraticCost or a gradient callable")
        A.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)


class GameSpec:
    """Immutable description of a generalized game.

    Parameters
    ----------
    agents : sequence of AgentSpec
        Players in index order. All must share the same number of coupling rows.
    mu, theta0, theta : float, optional
        User-supplied strong-monotonicity constant of the pseudo-gradient, its
        Lipschitz constant, and the Lipschitz constant of the extended
        pseudo-gradient. Left as ``None`` they are computed on demand by
        :func:`estimate_constants`.
    """

    def __init__(self, agents: Sequence[AgentSpec], mu=None, theta0=None, theta=None):
        agents = tuple(agents)
        if len(agents) < 1:
            raise ValueError("a game needs at least one agent")
        ms = {a.A.shape[0] for a in agents}
        if len(ms) != 1:
            raise DimensionError(f"agents disagree on the number of coupling rows: {sorted(ms)}")
        self.agents = agents
        self.N = len(agents)
        self.dims = np.array([a.dim for a in agents], dtype=int)
        self.n = int(self.dims.sum())
        self.m = ms.pop()
        self.offsets = np.concatenate([[0], np.cumsum(self.dims)]).astype(int)
        for a in agents:
            if isinstance(a.cost, QuadraticCost) and a.cost.Q.shape[0] != self.n:
                raise DimensionError(f"quadratic cost has size {a.cost.Q.shape[0]}, game has n={self.n}")
        self.A = np.hstack([a.A for a in agents]) if self.m else np.zeros((0, self.n))
        self.b = np.sum([a.b for a in agents], axis=0) if self.m else np.zeros(0)
        self.omega = Product([a.omega for a in agents])
        self.mu, self.theta0, self.theta = mu, theta0, theta

        self.is_quadratic = all(isinstance(a.cost, QuadraticCost) for a in agents)
        if self.is_quadratic:
            rows = [a.cost.Q[self.block(i)] for i, a in enumerate(agents)]
            self.jacobian = np.vstack(rows)
            self.offset_grad = np.concatenate([a.cost.q[self.block(i)] for i, a in enumerate(agents)])
            for i, a in enumerate(agents):
                Qii = a.cost.Q[self.block(i), self.block(i)]
                if np.linalg.eigvalsh(Qii).min() <= 0:
                    raise ValueError(f"agent {i + 1}: own-variable Hessian block is not positive definite")
        else:
            self.jacobian = None
            self.offset_grad = None

        # index maps replacing the selection matrices R and S
        own = np.concatenate([i * self.n + np.arange(self.offsets[i], self.offsets[i + 1])
                              for i in range(self.N)])
        mask = np.ones(self.N * self.n, dtype=bool)
        mask[own] = False
        self.own_index = own
        self.others_index = np.flatnonzero(mask)
        self.Lam, self.b_stack = self.local_data()

    def block(self, i: int) -> slice:
        return slice(self.offsets[i], self.offsets[i + 1])

    def _check(self, v, size, what):
        v = np.asarray(v, dtype=float)
        if v.shape != (size,):
            raise DimensionError(f"{what}: expected length {size}, got shape {v.shape}")
        return v

    def agent_gradient(self, i: int, x: np.ndarray) -> np.ndarray:
        cost = self.agents[i].cost
        if isinstance(cost, QuadraticCost):
            blk = self.block(i)
            return cost.Q[blk] @ x + cost.q[blk]
        return np.asarray(cost(x), dtype=float).reshape(self.dims[i])

    def local_data(self):
        """Stacked per-agent ``(Lambda, b_stack)``: block-diagonal A_i and col(b_i)."""
        Lam = np.zeros((self.N * self.m, self.n))
        for i, a in enumerate(self.agents):
            Lam[i * self.m:(i + 1) * self.m, self.block(i)] = a.A
        bvec = np.concatenate([a.b for a in self.agents]) if self.m else np.zeros(0)
        return Lam, bvec

    def with_constants(self, mu, theta0, theta) -> "GameSpec":
        return GameSpec(self.agents, mu=mu, theta0=theta0, theta=theta)


def pseudo_gradient(g: GameSpec, x) -> np.ndarray:
    x = g._check(x, g.n, "pseudo_gradient")
    if g.is_quadratic:
        return g.jacobian @ x + g.offset_grad
    return np.concatenate([g.agent_gradient(i, x) for i in range(g.N)])


def extended_pseudo_gradient(g: GameSpec, xhat) -> np.ndarray:
    """Agent ``i``'s own-variable gradient evaluated at its own estimate vector."""
    xhat = g._check(xhat, g.N * g.n, "extended_pseudo_gradient")
    est = xhat.reshape(g.N, g.n)
    return np.concatenate([g.agent_gradient(i, est[i]) for i in range(g.N)])


def select_own(g: GameSpec, xhat) -> np.ndarray:
    xhat = g._check(xhat, g.N * g.n, "select_own")
    return xhat[g.own_index]


def select_others(g: GameSpec, xhat) -> np.ndarray:
    xhat = g._check(xhat, g.N * g.n, "select_others")
    return xhat[g.others_index]


def embed(g: GameSpec, x, others) -> np.ndarray:
    x = g._check(x, g.n, "embed (own)")
    others = g._check(others, (g.N - 1) * g.n, "embed (others)")
    out = np.empty(g.N * g.n)
    out[g.own_index] = x
    out[g.others_index] = others
    return out


def consensus(g: GameSpec, x) -> np.ndarray:
    """``1_N kron x``: every agent holds the true profile."""
    x = g._check(x, g.n, "consensus")
    return np.tile(x, g.N)


def estimate_constants(g: GameSpec, sample_count: int = 200, radius: float = 10.0, seed=0):
    """Strong-monotonicity and Lipschitz constants ``(mu, theta0, theta)``.

    Quadratic games get exact values from the constant Jacobians. Otherwise the
    constants are extremal difference quotients over ``sample_count`` random
    pairs drawn uniformly from a cube of half-width ``radius``; the sampled
    values are then ordered so that ``mu <= theta <= theta0``, which the exact
    constants always satisfy.
    """
    if radius <= 0:
        raise ValueError("sampling radius must be positive")
    if sample_count < 2:
        raise ValueError("need at least two samples")

    if g.is_quadratic:
        G = g.jacobian
        mu = float(np.linalg.eigvalsh(0.5 * (G + G.T)).min())
        theta0 = float(np.linalg.norm(G, 2))
        # the extended Jacobian is block-diagonal in (agent, estimate copy)
        theta = max(float(np.linalg.norm(G[g.block(i)], 2)) for i in range(g.N))
        return mu, theta0, theta

    rng = np.random.default_rng(seed)
    mu, theta0, theta = np.inf, 0.0, 0.0
    for _ in range(sample_count):
        x, y = rng.uniform(-radius, radius, size=(2, g.n))
        d = x - y
        dF = pseudo_gradient(g, x) - pseudo_gradient(g, y)
        nd = d @ d
        mu = min(mu, float(d @ dF) / nd)
        theta0 = max(theta0, float(np.linalg.norm(dF) / np.sqrt(nd)))

        xh, yh = rng.uniform(-radius, radius, size=(2, g.N * g.n))
        dh = xh - yh
        dFh = extended_pseudo_gradient(g, xh) - extended_pseudo_gradient(g, yh)
        theta = max(theta, float(np.linalg.norm(dFh) / np.linalg.norm(dh)))
        # per-copy quotients of F dominate those of the extended map
        for i in range(g.N):
            a, c = xh[i * g.n:(i + 1) * g.n], yh[i * g.n:(i + 1) * g.n]
            q = np.linalg.norm(pseudo_gradient(g, a) - pseudo_gradient(g, c)) / np.linalg.norm(a - c)
            theta0 = max(theta0, float(q))
    theta = max(theta, mu)
    theta0 = max(theta0, theta)
    return mu, theta0, theta


def game_constants(g: GameSpec, **kwargs):
    """User-supplied constants where present, estimates elsewhere."""
    if None not in (g.mu, g.theta0, g.theta):
        return g.mu, g.theta0, g.theta
    est = estimate_constants(g, **kwargs)
    given = (g.mu, g.theta0, g.theta)
    return tuple(float(u) if u is not None else e for u, e in zip(given, est))


def kkt_residual(g: GameSpec, x, lam) -> float:
    """Natural residual of the KKT system of the variational GNE.

    Zero exactly when ``x`` solves the game with common multiplier ``lam``.
    """
    x = g._check(x, g.n, "kkt_residual (x)")
    lam = g._check(lam, g.m, "kkt_residual (lambda)")
    if np.any(lam < -1e-9):
        raise ValueError("multipliers must be nonnegative")
    primal = x - project(g.omega, x - pseudo_gradient(g, x) - g.A.T @ lam)
    dual = lam - np.maximum(lam + g.A @ x - g.b, 0.0)
    return float(np.linalg.norm(primal) + np.linalg.norm(dual))


def quadratic_game(Qs, qs, omegas=None, A_blocks=None, b=None, b_split=None, **constants) -> GameSpec:
    """Assemble a game from per-agent quadratic data.

    ``b`` is a global right-hand side, split evenly across agents unless
    ``b_split`` gives the per-agent vectors explicitly.
    """
    Qs = [np.asarray(Q, dtype=float) for Q in Qs]
    N = len(Qs)
    n = Qs[0].shape[0]
    if omegas is None:
        raise ValueError("omegas must be given (use FullSpace for unconstrained agents)")
    dims = [o.dim for o in omegas]
    if sum(dims) != n:
        raise DimensionError(f"local sets sum to {sum(dims)}, quadratic data has n={n}")
    if A_blocks is None:
        A_blocks = [np.zeros((0, d)) for d in dims]
    m = np.asarray(A_blocks[0]).reshape(-1, dims[0]).shape[0]
    if b_split is None:
        b = np.zeros(m) if b is None else np.atleast_1d(np.asarray(b, dtype=float))
        b_split = [b / N] * N
    agents = [AgentSpec(d, QuadraticCost(Q, q), o, Ai, bi)
              for d, Q, q, o, Ai, bi in zip(dims, Qs, qs, omegas, A_blocks, b_split)]
    return GameSpec(agents, **constants)


def unconstrained(dims: Sequence[int]):
    return [FullSpace(d) for d in dims]


def dualize_local_sets(g: GameSpec) -> GameSpec:
    """Move finite box bounds of every local set into the coupling constraints.

    Each finite lower bound ``x_ik >= lo`` becomes the row ``-x_ik <= -lo`` and
    each finite upper bound ``x_ik <= hi`` the row ``x_ik <= hi``; the row's
    right-hand side is assigned to its owning agent. Local sets become full
    spaces.
    """
    new_rows = []  # (agent, coordinate, sign, rhs)
    for i, a in enumerate(g.agents):
        lo, hi = a.omega.lower, a.omega.upper
        for k in range(a.dim):
            if np.isfinite(lo[k]):
                new_rows.append((i, k, -1.0, -lo[k]))
            if np.isfinite(hi[k]):
                new_rows.append((i, k, 1.0, hi[k]))
    extra = len(new_rows)
    agents = []
    for i, a in enumerate(g.agents):
        A_new = np.zeros((extra, a.dim))
        b_new = np.zeros(extra)
        for r, (owner, k, sign, rhs) in enumerate(new_rows):
            if owner == i:
                A_new[r, k] = sign
                b_new[r] = rhs
        agents.append(AgentSpec(a.dim, a.cost, FullSpace(a.dim),
                                np.vstack([a.A, A_new]), np.concatenate([a.b, b_new])))
    return GameSpec(agents, mu=g.mu, theta0=g.theta0, theta=g.theta)
