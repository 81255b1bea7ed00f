"""Run a scenario end to end: oracle, integration, monitors and certificates."""

from __future__ import annotations

import logging
import time
import warnings
from dataclasses import dataclass, field

import numpy as np

from .analysis import ConvergenceWarning, EquilibriumReport, certify, monitor_channels, oracle_vgne
from .flow_double import DoubleState, simulate_double
from .flow_single import SingleState, simulate_single
from .scenarios import ScenarioSpec
from .trajectory import Trajectory

log = logging.getLogger(__name__)

LYAPUNOV_FRACTION = 0.999


@dataclass
class ModeResult:
    mode: str
    trajectory: Trajectory
    oracle: EquilibriumReport
    wall_time: float
    certificates: dict = field(default_factory=dict)

    @property
    def certified(self) -> bool:
        return all(self.certificates.values())

    def limit_x(self, own_index) -> np.ndarray:
        return self.trajectory.positions(own_index)[-1]


@dataclass
class RunResult:
    scenario: ScenarioSpec
    cert: object
    modes: dict
    warnings: list

    @property
    def certified(self) -> bool:
        return all(r.certified for r in self.modes.values())

    @property
    def exhausted(self) -> bool:
        return any(not r.trajectory.converged for r in self.modes.values())

    def agreement(self):
        """Largest coordinate gap between the single and double limits, if both ran."""
        if {"single", "double"} <= set(self.modes):
            own = self.scenario.game.own_index
            xs = self.modes["single"].trajectory.positions(own)[-1]
            xd = self.modes["double"].trajectory.positions(own)[-1]
            return float(np.abs(xs - xd).max())
        return None


def _certificates(traj: Trajectory, eps: float) -> dict:
    ch = traj.channels
    tol = 10 * eps
    out = {
        "stopped": traj.converged,
        "kkt": bool(ch["kkt_residual"][-1] <= tol),
        "consensus_x": bool(ch["consensus_x"][-1] <= tol),
        "consensus_lambda": bool(ch["consensus_lambda"][-1] <= tol),
        "lyapunov": bool(traj.flags.get("lyapunov_monotone_fraction", 1.0) >= LYAPUNOV_FRACTION),
    }
    if traj.kind == "double":
        out["velocity"] = bool(np.linalg.norm(traj.v[-1]) <= tol)
    return out


def run_scenario(spec: ScenarioSpec, oracle_tol: float = 1e-10) -> RunResult:
    g, gph, p = spec.game, spec.graph, spec.params
    caught = []
    cert = certify(g, gph, p.c, warn=False)
    if not cert.satisfied:
        msg = f"c = {p.c:g} <= c_min = {cert.c_min:g}: convergence is not guaranteed"
        warnings.warn(msg, ConvergenceWarning, stacklevel=2)
        caught.append(msg)
    modes = {}
    wanted = ("single", "double") if spec.mode == "both" else (spec.mode,)
    if "single" in wanted:
        report = oracle_vgne(g, tol=oracle_tol)
        t0 = time.perf_counter()
        traj = simulate_single(g, gph, p, SingleState.initial(g, spec.x0), check_condition=False)
        monitor_channels(g, gph, traj, report)
        modes["single"] = ModeResult("single", traj, report, time.perf_counter() - t0,
                                     _certificates(traj, p.eps_stop))
    if "double" in wanted:
        gd = spec.double_game()
        report = oracle_vgne(gd, tol=oracle_tol)
        t0 = time.perf_counter()
        traj = simulate_double(gd, gph, p, spec.gains, DoubleState.initial(gd, spec.x0, spec.v0),
                               check_condition=False, original=g)
        monitor_channels(gd, gph, traj, report, original=g)
        modes["double"] = ModeResult("double", traj, report, time.perf_counter() - t0,
                                     _certificates(traj, p.eps_stop))
    for name, r in modes.items():
        log.info("%s: %s, certificates %s", name, r.trajectory.stop_reason, r.certificates)
    return RunResult(spec, cert, modes, caught)
