"""Scenario library and the structured-text (YAML) scenario format.

A scenario bundles a game, a communication graph, integration settings,
prediction gains for double integrators and initial conditions. Scenario
documents carry ``schema_version: 1`` and one of two game kinds:

``quadratic``
    explicit per-agent data ``Q``, ``q``, ``lower``, ``upper``, ``A``, ``b``.
``sensor_network``
    the planar robot game: parameters ``r``, the ``y`` box, and the
    Chebyshev radius imposed along every graph edge.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Optional

import numpy as np
import yaml

from .convex_sets import Box, FullSpace
from .flow_double import GainsH
from .flow_single import FlowParams
from .game import AgentSpec, GameSpec, QuadraticCost, dualize_local_sets, estimate_constants
from .network import CommGraph, from_edges

SCHEMA_VERSION = 1
MODES = ("single", "double", "both")

# Agent parameters of the sensor-network game, drawn once from
# numpy.random.default_rng(2020).uniform(-1, 1, (5, 2)) and rounded.
SENSOR_R = [[-0.06, 0.03], [0.73, 0.44], [-0.33, 0.76], [0.04, 0.05], [0.44, -0.11]]
SENSOR_C = 30.0


class ScenarioError(ValueError):
    pass


@dataclass
class ScenarioSpec:
    name: str
    game: GameSpec
    graph: CommGraph
    params: FlowParams
    gains: GainsH
    x0: np.ndarray
    v0: np.ndarray
    seed: int = 0
    mode: str = "single"
    dualize: bool = False
    source: dict = field(default_factory=dict)
    interior_point: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.mode not in MODES:
            raise ScenarioError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.graph.N != self.game.N:
            raise ScenarioError(f"graph has {self.graph.N} nodes but the game has {self.game.N} agents")
        if self.x0.shape != (self.game.n,) or self.v0.shape != (self.game.n,):
            raise ScenarioError("initial positions/velocities must have length n")
        if self.mode != "single" and not self.dualize:
            if any(a.omega.is_bounded() for a in self.game.agents):
                raise ScenarioError("double-integrator mode needs unbounded local sets or dualize: true")

    def double_game(self) -> GameSpec:
        return dualize_local_sets(self.game) if self.dualize else self.game

    def with_overrides(self, **kw) -> "ScenarioSpec":
        """Copy with overrides among ``c, h, t_max, eps_stop, stride, seed, mode``."""
        params = self.params
        pkeys = {k: kw.pop(k) for k in ("c", "h", "t_max", "eps_stop", "stride") if k in kw}
        if pkeys:
            params = replace(params, **pkeys)
        unknown = set(kw) - {"seed", "mode"}
        if unknown:
            raise ScenarioError(f"unknown override(s): {sorted(unknown)}")
        if self.source:
            src = copy.deepcopy(self.source)
            src.setdefault("flow", {}).update(pkeys)
            src.update(kw)
            return scenario_from_dict(src)
        return replace(self, params=params, **kw)


# --------------------------------------------------------------------------- builders

def _chebyshev_rows(N: int, edges, radius: float):
    """Four rows per edge encoding ``max(|x_i - x_j|, |y_i - y_j|) <= radius``."""
    rows = []
    for i, j, _ in edges:
        for k in (0, 1):
            for sign in (1.0, -1.0):
                row = np.zeros(2 * N)
                row[2 * (i - 1) + k] = sign
                row[2 * (j - 1) + k] = -sign
                rows.append(row)
    A = np.array(rows) if rows else np.zeros((0, 2 * N))
    return A, np.full(A.shape[0], radius)


def sensor_network_game(r, y_bounds=(0.1, 0.5), edges=None, radius=0.2) -> GameSpec:
    """Planar robots with cost ``p_i'p_i + p_i'r_i + sum_j ||p_i - p_j||^2``."""
    r = np.asarray(r, dtype=float)
    if r.ndim != 2 or r.shape[1] != 2:
        raise ScenarioError(f"r must be a list of 2-vectors, got shape {r.shape}")
    N = r.shape[0]
    n = 2 * N
    A, b = _chebyshev_rows(N, edges or [], radius)
    agents = []
    I2 = np.eye(2)
    for i in range(N):
        Q = np.zeros((n, n))
        for j in range(N):
            if j != i:
                # ||p_i - p_j||^2 contributes [[2, -2], [-2, 2]] (x) I2
                Q[2 * i:2 * i + 2, 2 * i:2 * i + 2] += 2 * I2
                Q[2 * j:2 * j + 2, 2 * j:2 * j + 2] += 2 * I2
                Q[2 * i:2 * i + 2, 2 * j:2 * j + 2] -= 2 * I2
                Q[2 * j:2 * j + 2, 2 * i:2 * i + 2] -= 2 * I2
        Q[2 * i:2 * i + 2, 2 * i:2 * i + 2] += 2 * I2
        q = np.zeros(n)
        q[2 * i:2 * i + 2] = r[i]
        omega = Box([-np.inf, y_bounds[0]], [np.inf, y_bounds[1]])
        agents.append(AgentSpec(2, QuadraticCost(Q, q), omega, A[:, 2 * i:2 * i + 2], b / N))
    return GameSpec(agents)


def _sensor_initial(N, seed, y_bounds):
    rng = np.random.default_rng(seed)
    pos = np.column_stack([rng.uniform(-1.0, 1.0, N), rng.uniform(*y_bounds, N)])
    vel = rng.normal(0.0, 1.0, (N, 2))
    return pos.reshape(-1), vel.reshape(-1)


def sensor_network_scenario(r=None, seed: int = 7, mode: str = "both", c: float = SENSOR_C,
                            edges=None, h_gain: float = 1.0) -> ScenarioSpec:
    """Five planar robots on a unit-weight ring, boxes ``0.1 <= y_i <= 0.5`` and
    Chebyshev distance at most 0.2 between neighbours."""
    r = SENSOR_R if r is None else r
    if len(r) != 5:
        raise ScenarioError(f"the sensor network has five agents; got {len(r)} parameter vectors")
    if edges is None:
        edges = [(i, i % 5 + 1, 1.0) for i in range(1, 6)]
    source = {
        "schema_version": SCHEMA_VERSION,
        "name": "sensor-network",
        "mode": mode,
        "seed": seed,
        "dualize": True,
        "game": {"kind": "sensor_network", "r": [list(map(float, ri)) for ri in r],
                 "y_bounds": [0.1, 0.5], "chebyshev_radius": 0.2},
        "graph": {"N": 5, "edges": [[int(i), int(j), float(w)] for i, j, w in edges]},
        "flow": {"c": float(c), "h": 0.005, "t_max": 2000.0, "eps_stop": 1e-8, "stride": 200},
        "gains": [float(h_gain)] * 5,
        "initial": {"generator": "sensor_uniform"},
    }
    return scenario_from_dict(source)


def _random_graph(N, rng):
    """Ring (a single edge for N=2) plus random chords, unit weights."""
    edges = {tuple(sorted((i, i % N + 1))) for i in range(1, N + 1)} if N > 2 else {(1, 2)}
    for i in range(1, N + 1):
        for j in range(i + 1, N + 1):
            if rng.uniform() < 0.3:
                edges.add((i, j))
    return [(i, j, 1.0) for i, j in sorted(edges)]


def random_quadratic_game(N: int, n_i=1, m: int = 0, mu_target: float = 1.0, seed: int = 0,
                          coupling_scale: float = 0.5, c_factor: float = 1.5) -> ScenarioSpec:
    """Random strongly monotone quadratic game with Slater-feasible coupling.

    The pseudo-gradient Jacobian is a random matrix with symmetric diagonal
    blocks, shifted so that the smallest eigenvalue of its symmetric part is
    exactly ``mu_target``. Coupling data ``(A, b)`` admit a recorded interior
    point with strict slack. The consensus gain is ``c_factor`` times the
    threshold of the resulting certificate.
    """
    if not mu_target > 0:
        raise ValueError("mu_target must be positive")
    rng = np.random.default_rng(seed)
    dims = [n_i] * N if np.isscalar(n_i) else list(n_i)
    n = sum(dims)
    offs = np.concatenate([[0], np.cumsum(dims)])
    G = rng.normal(0.0, coupling_scale / np.sqrt(n), (n, n))
    for i in range(N):
        blk = slice(offs[i], offs[i + 1])
        G[blk, blk] = 0.5 * (G[blk, blk] + G[blk, blk].T)
    G += (mu_target - np.linalg.eigvalsh(0.5 * (G + G.T)).min()) * np.eye(n)

    interior = rng.normal(0.0, 1.0, n)
    agents = []
    A = rng.normal(0.0, 1.0, (m, n))
    b = A @ interior + rng.uniform(0.1, 0.5, m)
    for i in range(N):
        blk = slice(offs[i], offs[i + 1])
        Q = np.zeros((n, n))
        Q[blk, :] = G[blk, :]
        Q[:, blk] = G[blk, :].T
        q = np.zeros(n)
        q[blk] = rng.normal(0.0, 2.0, dims[i])
        lo = np.where(rng.uniform(size=dims[i]) < 0.7, interior[blk] - rng.uniform(0.3, 1.5, dims[i]), -np.inf)
        hi = np.where(rng.uniform(size=dims[i]) < 0.7, interior[blk] + rng.uniform(0.3, 1.5, dims[i]), np.inf)
        agents.append(AgentSpec(dims[i], QuadraticCost(Q, q), Box(lo, hi), A[:, blk], b / N))
    game = GameSpec(agents)
    graph = from_edges(N, _random_graph(N, rng))

    from .analysis import compute_cert
    mu, theta0, theta = estimate_constants(game)
    cert = compute_cert(mu, theta0, theta, N, graph.lambda2, 1.0, warn=False)
    params = FlowParams(c=c_factor * cert.c_min, t_max=500.0, stride=50)
    x0 = rng.normal(0.0, 2.0, n)
    v0 = rng.normal(0.0, 1.0, n)
    return ScenarioSpec(f"random-{seed}", game, graph, params, GainsH.uniform(N), x0, v0,
                        seed=seed, mode="both", dualize=True, interior_point=interior,
                        source={})


# --------------------------------------------------------------------------- config I/O

def _vec(v, n=None, what="vector"):
    a = np.atleast_1d(np.asarray(v, dtype=float)).reshape(-1)
    if n is not None and a.shape != (n,):
        raise ScenarioError(f"{what}: expected length {n}, got {a.shape[0]}")
    return a


def _floats(a):
    return [float(x) for x in np.asarray(a, dtype=float).reshape(-1)]


def game_to_dict(g: GameSpec) -> dict:
    if not g.is_quadratic:
        raise ScenarioError("only quadratic games can be written to a scenario file")
    agents = []
    for a in g.agents:
        agents.append({
            "dim": int(a.dim),
            "Q": [_floats(row) for row in a.cost.Q],
            "q": _floats(a.cost.q),
            "lower": _floats(a.omega.lower),
            "upper": _floats(a.omega.upper),
            "A": [_floats(row) for row in a.A],
            "b": _floats(a.b),
        })
    out = {"kind": "quadratic", "agents": agents}
    if None not in (g.mu, g.theta0, g.theta):
        out["constants"] = {"mu": float(g.mu), "theta0": float(g.theta0), "theta": float(g.theta)}
    return out


def game_from_dict(d: dict, edges=None) -> GameSpec:
    kind = d.get("kind")
    if kind == "sensor_network":
        return sensor_network_game(d["r"], tuple(d.get("y_bounds", (0.1, 0.5))), edges,
                                   float(d.get("chebyshev_radius", 0.2)))
    if kind != "quadratic":
        raise ScenarioError(f"unknown game kind {kind!r}")
    raw = d.get("agents")
    if not raw:
        raise ScenarioError("quadratic game needs a non-empty 'agents' list")
    agents = []
    for k, a in enumerate(raw):
        try:
            dim = int(a["dim"])
            Q = np.asarray(a["Q"], dtype=float)
            q = _vec(a["q"], Q.shape[0], f"agent {k + 1} q")
            lower = _vec(a.get("lower", [-np.inf] * dim), dim, f"agent {k + 1} lower")
            upper = _vec(a.get("upper", [np.inf] * dim), dim, f"agent {k + 1} upper")
            omega = FullSpace(dim) if not (np.isfinite(lower).any() or np.isfinite(upper).any()) \
                else Box(lower, upper)
            A = np.asarray(a.get("A", []), dtype=float).reshape(-1, dim)
            b = _vec(a.get("b", np.zeros(A.shape[0])), A.shape[0], f"agent {k + 1} b")
        except KeyError as e:
            raise ScenarioError(f"agent {k + 1}: missing field {e}") from None
        agents.append(AgentSpec(dim, QuadraticCost(Q, q), omega, A, b))
    if "b_total" in d:
        # a global right-hand side split evenly across agents
        b_tot = _vec(d["b_total"], agents[0].A.shape[0], "b_total")
        agents = [AgentSpec(a.dim, a.cost, a.omega, a.A, b_tot / len(agents)) for a in agents]
    const = d.get("constants") or {}
    unknown = set(const) - {"mu", "theta0", "theta"}
    if unknown:
        raise ScenarioError(f"unknown constants {sorted(unknown)}; allowed: mu, theta0, theta")
    return GameSpec(agents, **{k: float(v) for k, v in const.items()})


def scenario_to_dict(s: ScenarioSpec) -> dict:
    if s.source:
        return copy.deepcopy(s.source)
    p = s.params
    return {
        "schema_version": SCHEMA_VERSION,
        "name": s.name,
        "mode": s.mode,
        "seed": int(s.seed),
        "dualize": bool(s.dualize),
        "game": game_to_dict(s.game),
        "graph": {"N": s.graph.N, "edges": [list(e) for e in s.graph.edges()]},
        "flow": {"c": float(p.c), "h": p.h, "t_max": float(p.t_max), "eps_stop": float(p.eps_stop),
                 "stride": int(p.stride)},
        "gains": _floats(s.gains.h),
        "initial": {"x": _floats(s.x0), "v": _floats(s.v0)},
    }


def scenario_from_dict(d: dict) -> ScenarioSpec:
    if not isinstance(d, dict):
        raise ScenarioError("scenario document must be a mapping")
    version = d.get("schema_version")
    if version != SCHEMA_VERSION:
        raise ScenarioError(f"unsupported schema_version {version!r} (expected {SCHEMA_VERSION})")
    for key in ("game", "graph", "flow"):
        if key not in d:
            raise ScenarioError(f"scenario is missing the '{key}' section")
    graph_d = d["graph"]
    edges = [tuple(e) for e in graph_d.get("edges", [])]
    graph = from_edges(int(graph_d["N"]), edges)
    game = game_from_dict(d["game"], edges)
    flow = dict(d["flow"])
    try:
        params = FlowParams(c=float(flow["c"]), h=None if flow.get("h") is None else float(flow["h"]),
                            t_max=float(flow.get("t_max", 200.0)),
                            eps_stop=float(flow.get("eps_stop", 1e-8)),
                            stride=int(flow.get("stride", 1)))
    except KeyError:
        raise ScenarioError("flow section needs the consensus gain 'c'") from None
    gains = GainsH(_vec(d.get("gains", [1.0] * game.N), game.N, "gains"))
    seed = int(d.get("seed", 0))
    init = d.get("initial", {})
    if init.get("generator") == "sensor_uniform":
        x0, v0 = _sensor_initial(game.N, seed, tuple(d["game"].get("y_bounds", (0.1, 0.5))))
    else:
        x0 = _vec(init.get("x", np.zeros(game.n)), game.n, "initial x")
        v0 = _vec(init.get("v", np.zeros(game.n)), game.n, "initial v")
    return ScenarioSpec(str(d.get("name", "unnamed")), game, graph, params, gains, x0, v0,
                        seed=seed, mode=d.get("mode", "single"), dualize=bool(d.get("dualize", False)),
                        source=copy.deepcopy(d) if d["game"].get("kind") != "quadratic" else {})


def dump_scenario(s: ScenarioSpec) -> str:
    return yaml.safe_dump(scenario_to_dict(s), sort_keys=False)


def load_scenario(path) -> ScenarioSpec:
    text = Path(path).read_text()
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as e:
        raise ScenarioError(f"{path}: not valid YAML ({e})") from None
    return scenario_from_dict(doc)


BUILTIN = {
    "sensor-network": "sensor_network.yaml",
    "twoagent": "twoagent.yaml",
    "twoagent-coupled": "twoagent_coupled.yaml",
}


def builtin_scenario(name: str) -> ScenarioSpec:
    if name not in BUILTIN:
        raise ScenarioError(f"unknown built-in scenario {name!r}; choose from {sorted(BUILTIN)}")
    text = resources.files("gneseek.scenarios_data").joinpath(BUILTIN[name]).read_text()
    return scenario_from_dict(yaml.safe_load(text))


def resolve_scenario(ref: str) -> ScenarioSpec:
    """A built-in name or a path to a scenario file."""
    if ref in BUILTIN:
        return builtin_scenario(ref)
    if not Path(ref).exists():
        raise ScenarioError(f"{ref!r} is neither a built-in scenario nor an existing file")
    return load_scenario(ref)
