"""Closed convex sets used by the projected dynamics.

Every supported variant (full space, box, nonnegative orthant and Cartesian
products of these) is a possibly unbounded box, so each set exposes its
``lower``/``upper`` bound vectors and all projections reduce to componentwise
clamping.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

MEMBERSHIP_TOL = 1e-9


class DimensionError(ValueError):
    pass


class MembershipError(ValueError):
    pass


class ConvexSet:
    lower: np.ndarray
    upper: np.ndarray

    @property
    def dim(self) -> int:
        return self.lower.shape[0]

    def is_bounded(self) -> bool:
        """True if any coordinate carries a finite bound."""
        return bool(np.isfinite(self.lower).any() or np.isfinite(self.upper).any())

    def contains(self, x, tol: float = MEMBERSHIP_TOL) -> bool:
        x = _check_dim(self, x)
        return bool(np.all(x >= self.lower - tol) and np.all(x <= self.upper + tol))

    def violation(self, x) -> float:
        """Infinity-norm distance of ``x`` from the set."""
        x = _check_dim(self, x)
        if x.size == 0:
            return 0.0
        gap = np.maximum(self.lower - x, x - self.upper)
        return float(max(gap.max(), 0.0))


@dataclass(frozen=True, eq=False)
class FullSpace(ConvexSet):
    n: int

    def __post_init__(self):
        if self.n < 0:
            raise ValueError("dimension must be nonnegative")

    @property
    def lower(self):
        return np.full(self.n, -np.inf)

    @property
    def upper(self):
        return np.full(self.n, np.inf)


@dataclass(frozen=True, eq=False)
class NonnegOrthant(ConvexSet):
    n: int

    def __post_init__(self):
        if self.n < 0:
            raise ValueError("dimension must be nonnegative")

    @property
    def lower(self):
        return np.zeros(self.n)

    @property
    def upper(self):
        return np.full(self.n, np.inf)


@dataclass(frozen=True, eq=False)
class Box(ConvexSet):
    """Axis-aligned box; entries of ``lo``/``hi`` may be infinite."""

    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lo, dtype=float)).copy()
        hi = np.atleast_1d(np.asarray(self.hi, dtype=float)).copy()
        if lo.shape != hi.shape or lo.ndim != 1:
            raise DimensionError(f"box bounds have shapes {lo.shape} and {hi.shape}")
        if np.isnan(lo).any() or np.isnan(hi).any():
            raise ValueError("box bounds must not be NaN")
        if np.any(lo > hi):
            raise ValueError("box requires lower <= upper elementwise")
        lo.setflags(write=False)
        hi.setflags(write=False)
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def lower(self):
        return self.lo

    @property
    def upper(self):
        return self.hi


@dataclass(frozen=True, eq=False)
class Product(ConvexSet):
    parts: tuple = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "parts", tuple(self.parts))
        for p in self.parts:
            if not isinstance(p, ConvexSet):
                raise TypeError(f"product factor {p!r} is not a ConvexSet")

    @property
    def lower(self):
        if not self.parts:
            return np.zeros(0)
        return np.concatenate([p.lower for p in self.parts])

    @property
    def upper(self):
        if not self.parts:
            return np.zeros(0)
        return np.concatenate([p.upper for p in self.parts])


def _check_dim(S: ConvexSet, v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if v.ndim != 1 or v.shape[0] != S.dim:
        raise DimensionError(f"expected vector of length {S.dim}, got shape {v.shape}")
    return v


def project(S: ConvexSet, v) -> np.ndarray:
    """Euclidean projection of ``v`` onto ``S``."""
    v = _check_dim(S, v)
    return np.clip(v, S.lower, S.upper)


def _active_faces(S: ConvexSet, x: np.ndarray):
    lo, hi = S.lower, S.upper
    if not S.contains(x):
        raise MembershipError(
            f"point lies outside the set by {S.violation(x):.3e} (tolerance {MEMBERSHIP_TOL})"
        )
    at_lo = np.abs(x - lo) <= MEMBERSHIP_TOL
    at_hi = np.abs(x - hi) <= MEMBERSHIP_TOL
    return at_lo, at_hi


def tangent_cone(S: ConvexSet, x) -> Box:
    """Tangent cone of ``S`` at ``x``, itself a box with bounds in {0, +-inf}."""
    x = _check_dim(S, x)
    at_lo, at_hi = _active_faces(S, x)
    lo = np.where(at_lo, 0.0, -np.inf)
    hi = np.where(at_hi, 0.0, np.inf)
    # degenerate coordinates (lo == hi) are pinned on both sides
    return Box(lo, hi)


def tangent_project(S: ConvexSet, x, v) -> np.ndarray:
    """Projection of ``v`` onto the tangent cone of ``S`` at ``x``."""
    x = _check_dim(S, x)
    v = _check_dim(S, v)
    at_lo, at_hi = _active_faces(S, x)
    out = v.copy()
    out[at_lo & (v < 0)] = 0.0
    out[at_hi & (v > 0)] = 0.0
    return out


def moreau_decompose(S: ConvexSet, x, v):
    """Split ``v`` into its tangent-cone and normal-cone parts at ``x``.

    Returns ``(t, n)`` with ``t + n == v`` and ``t @ n == 0``.
    """
    t = tangent_project(S, x, v)
    v = np.asarray(v, dtype=float)
    return t, v - t
