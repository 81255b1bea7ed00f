"""Command-line front end.

    gneseek run --scenario sensor-network --mode both --out runs/
    gneseek analyze runs/sensor-network/trajectory_single.csv runs/sensor-network/summary.yaml
    gneseek certify sensor-network

Exit codes: 0 certified convergence, 2 not certified (time budget exhausted
or a certificate failed), 1 error.
"""

from __future__ import annotations

import argparse
import csv
import logging
import os
import sys
import warnings
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from .analysis import ConvergenceWarning, certify, lyapunov_profile
from .game import GameSpec, game_constants
from .scenarios import MODES, ScenarioError, resolve_scenario, scenario_from_dict, scenario_to_dict
from .runner import LYAPUNOV_FRACTION, RunResult, run_scenario
from .trajectory import batch_kkt_residual

log = logging.getLogger("gneseek")

OUTPUT_ENV = "GNESEEK_OUTPUT_DIR"
CHANNEL_COLUMNS = ["kkt_residual", "lyapunov", "consensus_x", "consensus_lambda",
                   "coupling_violation", "local_violation"]
OVERRIDE_TYPES = {"c": float, "h": float, "t_max": float, "eps_stop": float,
                  "stride": int, "seed": int, "mode": str}
EXIT_OK, EXIT_ERROR, EXIT_UNCERTIFIED = 0, 1, 2


class SchemaError(ValueError):
    pass


# --------------------------------------------------------------------------- CSV schema

def trajectory_columns(kind: str, n: int, m: int) -> list:
    cols = ["t"] + [f"x{k + 1}" for k in range(n)]
    if kind == "double":
        cols += [f"v{k + 1}" for k in range(n)]
    cols += [f"lambda{k + 1}" for k in range(m)]
    return cols + CHANNEL_COLUMNS


def write_trajectory_csv(path, result_mode, game: GameSpec):
    traj = result_mode.trajectory
    cols = trajectory_columns(traj.kind, traj.n, traj.m)
    blocks = [traj.t[:, None], traj.positions(game.own_index)]
    if traj.kind == "double":
        blocks.append(traj.v)
    blocks.append(traj.lam_mean())
    blocks += [traj.channels[c][:, None] for c in CHANNEL_COLUMNS]
    data = np.hstack(blocks)
    with open(path, "w", newline="") as fh:
        fh.write(",".join(cols) + "\n")
        for row in data:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")


def read_trajectory_csv(path, expected_cols=None):
    try:
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as e:
        raise SchemaError(f"cannot read {path}: {e}") from None
    if not rows:
        raise SchemaError(f"{path}: empty file")
    header, body = rows[0], rows[1:]
    if expected_cols is not None and header != expected_cols:
        raise SchemaError(f"{path}: columns {header[:6]}... do not match the expected schema "
                          f"({len(expected_cols)} columns starting {expected_cols[:4]})")
    if not body:
        raise SchemaError(f"{path}: no data rows")
    for k, r in enumerate(body):
        if len(r) != len(header):
            raise SchemaError(f"{path}: row {k + 2} has {len(r)} fields, header has {len(header)}")
    try:
        data = np.array(body, dtype=float)
    except ValueError:
        raise SchemaError(f"{path}: non-numeric entries") from None
    return header, data


# --------------------------------------------------------------------------- run

def _summary(res: RunResult, files: dict) -> dict:
    s = res.scenario
    out = {
        "gneseek_version": __version__,
        "scenario": scenario_to_dict(s),
        "certificate": res.cert.as_dict(),
        "warnings": list(res.warnings),
        "modes": {},
        "trajectories": files,
        "agreement_single_double": res.agreement(),
        "certified": res.certified,
    }
    own = s.game.own_index
    for name, r in res.modes.items():
        tr = r.trajectory
        ch = {k: float(v[-1]) for k, v in tr.channels.items()}
        entry = {
            "stop_reason": tr.stop_reason,
            "steps": int(tr.steps),
            "t_final": float(tr.t[-1]),
            "h": float(tr.h),
            "c": float(tr.c),
            "limit_x": [float(v) for v in tr.positions(own)[-1]],
            "limit_lambda_mean": [float(v) for v in tr.lam_mean()[-1]],
            "final_channels": ch,
            "lyapunov_monotone_fraction": tr.flags.get("lyapunov_monotone_fraction"),
            "lyapunov_max_increase": tr.flags.get("lyapunov_max_increase"),
            "oracle": r.oracle.as_dict(),
            "certificates": {k: bool(v) for k, v in r.certificates.items()},
            "certified": r.certified,
            "wall_time_s": round(r.wall_time, 3),
        }
        if tr.kind == "double":
            entry["final_velocity_norm"] = float(np.linalg.norm(tr.v[-1]))
        out["modes"][name] = entry
    return out


def write_outputs(res: RunResult, out_dir: Path) -> dict:
    out_dir.mkdir(parents=True, exist_ok=True)
    files = {}
    game = res.scenario.game
    for name, r in res.modes.items():
        fname = f"trajectory_{name}.csv"
        write_trajectory_csv(out_dir / fname, r, game)
        files[name] = fname
        chan_dir = out_dir / "channels" / name
        chan_dir.mkdir(parents=True, exist_ok=True)
        tr = r.trajectory
        for c in CHANNEL_COLUMNS:
            with open(chan_dir / f"{c}.csv", "w") as fh:
                fh.write(f"t,{c}\n")
                for t, v in zip(tr.t, tr.channels[c]):
                    fh.write(f"{t!r},{float(v)!r}\n")
    summary = _summary(res, files)
    (out_dir / "summary.yaml").write_text(yaml.safe_dump(summary, sort_keys=False))
    return summary


def parse_overrides(items) -> dict:
    out = {}
    for item in items or []:
        if "=" not in item:
            raise ScenarioError(f"override {item!r} must look like key=value")
        key, val = item.split("=", 1)
        key = key.strip()
        if key not in OVERRIDE_TYPES:
            raise ScenarioError(f"unknown override {key!r}; allowed: {sorted(OVERRIDE_TYPES)}")
        try:
            out[key] = OVERRIDE_TYPES[key](val)
        except ValueError:
            raise ScenarioError(f"override {key}={val!r} is not a valid {OVERRIDE_TYPES[key].__name__}") from None
    if "mode" in out and out["mode"] not in MODES:
        raise ScenarioError(f"mode must be one of {MODES}")
    return out


def _run_one(scenario_ref, overrides, out_dir):
    spec = resolve_scenario(scenario_ref)
    if overrides:
        spec = spec.with_overrides(**overrides)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", ConvergenceWarning)
        res = run_scenario(spec)
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    summary = write_outputs(res, Path(out_dir))
    _print_run(summary)
    return EXIT_OK if res.certified else EXIT_UNCERTIFIED


def _print_run(summary):
    cert = summary["certificate"]
    print(f"scenario {summary['scenario']['name']}: c = {cert['c']:g}, c_min = {cert['c_min']:.4g} "
          f"({'satisfied' if cert['satisfied'] else 'NOT satisfied'})")
    for name, m in summary["modes"].items():
        x = ", ".join(f"{v:.6g}" for v in m["limit_x"])
        lam = ", ".join(f"{v:.6g}" for v in m["limit_lambda_mean"])
        print(f"  [{name}] {m['stop_reason']} at t={m['t_final']:.4g} ({m['steps']} steps), "
              f"kkt={m['final_channels']['kkt_residual']:.3e}")
        print(f"  [{name}] x = ({x})")
        if lam:
            print(f"  [{name}] lambda = ({lam})")
        print(f"  [{name}] certified: {'yes' if m['certified'] else 'no'}")
    if summary["agreement_single_double"] is not None:
        print(f"  single/double limit gap: {summary['agreement_single_double']:.3e}")


def cmd_run(args) -> int:
    out_root = Path(args.out or os.environ.get(OUTPUT_ENV, "runs"))
    overrides = parse_overrides(args.override)
    if args.mode:
        overrides["mode"] = args.mode
    if args.seed is not None:
        overrides["seed"] = args.seed
    name = Path(args.scenario).stem if Path(args.scenario).suffix else args.scenario
    if not args.sweep:
        return _run_one(args.scenario, overrides, out_root / name)

    key, _, vals = args.sweep.partition("=")
    if key not in OVERRIDE_TYPES or not vals:
        raise ScenarioError(f"sweep must look like key=v1,v2,...; got {args.sweep!r}")
    values = [OVERRIDE_TYPES[key](v) for v in vals.split(",")]
    jobs = [({**overrides, key: v}, out_root / name / f"{key}={v}") for v in values]
    with ProcessPoolExecutor(max_workers=min(len(jobs), os.cpu_count() or 1)) as ex:
        codes = list(ex.map(_run_one, [args.scenario] * len(jobs), *zip(*jobs)))
    return max(codes)


# --------------------------------------------------------------------------- analyze

def analyze(traj_path, report_path, out=None) -> int:
    out = out or sys.stdout
    try:
        report = yaml.safe_load(Path(report_path).read_text())
    except (OSError, yaml.YAMLError) as e:
        raise SchemaError(f"cannot read report {report_path}: {e}") from None
    if not isinstance(report, dict) or "scenario" not in report or "modes" not in report:
        raise SchemaError(f"{report_path} is not a run summary")
    spec = scenario_from_dict(report["scenario"])
    base = Path(traj_path).name
    mode = next((k for k, f in report.get("trajectories", {}).items() if f == base), None)
    if mode is None:
        with open(traj_path) as fh:
            mode = "double" if "v1" in fh.readline().split(",") else "single"
    if mode not in report["modes"]:
        raise SchemaError(f"report has no entry for mode {mode!r}")
    entry = report["modes"][mode]
    g_run = spec.double_game() if mode == "double" else spec.game
    cols = trajectory_columns(mode, g_run.n, g_run.m)
    header, data = read_trajectory_csv(traj_path, cols)
    col = {c: data[:, k] for k, c in enumerate(header)}
    X = np.column_stack([col[f"x{k + 1}"] for k in range(g_run.n)])
    lam = np.column_stack([col[f"lambda{k + 1}"] for k in range(g_run.m)]) if g_run.m \
        else np.zeros((len(data), 0))

    kkt = batch_kkt_residual(g_run, X, lam)
    orig = spec.game
    coupling = np.maximum((X @ orig.A.T - orig.b).max(axis=1), 0.0) if orig.m else np.zeros(len(X))
    gap = np.maximum(orig.omega.lower - X, X - orig.omega.upper)
    local = np.maximum(gap.max(axis=1), 0.0)
    mismatch = max(np.abs(kkt - col["kkt_residual"]).max(),
                   np.abs(coupling - col["coupling_violation"]).max(),
                   np.abs(local - col["local_violation"]).max())
    h = float(entry["h"])
    frac, worst = lyapunov_profile(col["lyapunov"], 10 * h * h)
    eps = float(report["scenario"]["flow"].get("eps_stop", 1e-8))
    tol = 10 * eps
    t = col["t"]

    p = lambda s: print(s, file=out)  # noqa: E731
    p(f"mode: {mode} ({len(data)} samples, t_final={t[-1]:.6g}, stop: {entry['stop_reason']})")
    p(f"recomputed channels agree with file: max deviation {mismatch:.3e}")
    p(f"max Lyapunov increase: {worst:.3e} (slack 10*h^2 = {10 * h * h:.3e}); "
      f"non-increasing at {100 * frac:.3f}% of samples")
    monotone = frac >= LYAPUNOV_FRACTION
    p(f"V monotone within tolerance: {'yes' if monotone else 'no'}")
    finals = {c: float(col[c][-1]) for c in CHANNEL_COLUMNS}
    for c, v in finals.items():
        p(f"final {c}: {v:.3e}")
    p(f"max coupling violation: {col['coupling_violation'].max():.3e}")
    p(f"max local violation: {col['local_violation'].max():.3e}")
    below = np.flatnonzero(local < 1e-3)
    above = np.flatnonzero(local >= 1e-3)
    if above.size == 0:
        p("local violation below 1e-3 at every sample")
    else:
        later = below[below > above[0]]
        first = f"{t[later[0]]:.6g}" if later.size else "never"
        settle = f"{t[above[-1] + 1]:.6g}" if above[-1] + 1 < len(t) else "never"
        p(f"local violation first drops below 1e-3 at t={first}; stays below from t={settle}")

    checks = [entry["stop_reason"] == "converged", monotone, mismatch <= 1e-9,
              finals["kkt_residual"] <= tol, finals["consensus_x"] <= tol,
              finals["consensus_lambda"] <= tol]
    if mode == "double":
        v = np.column_stack([col[f"v{k + 1}"] for k in range(g_run.n)])
        vn = float(np.linalg.norm(v[-1]))
        p(f"final velocity norm: {vn:.3e}")
        checks.append(vn <= tol)
    ok = all(checks)
    p(f"certificates: {'pass' if ok else 'FAIL'}")
    return EXIT_OK if ok else EXIT_UNCERTIFIED


def cmd_analyze(args) -> int:
    return analyze(args.trajectory, args.report)


# --------------------------------------------------------------------------- certify

def cmd_certify(args) -> int:
    spec = resolve_scenario(args.scenario)
    c = args.c if args.c is not None else spec.params.c
    mu, theta0, theta = game_constants(spec.game)
    cert = certify(spec.game, spec.graph, c, warn=False)
    print(f"scenario: {spec.name} (N={spec.game.N}, n={spec.game.n}, m={spec.game.m})")
    print(f"mu      = {mu:.6g}")
    print(f"theta0  = {theta0:.6g}")
    print(f"theta   = {theta:.6g}")
    print(f"lambda2 = {spec.graph.lambda2:.6g}")
    print(f"c_min   = {cert.c_min:.6g}")
    print(f"c       = {c:.6g}")
    print(f"lambda_min(M) = {cert.lambda_min:.6g}")
    print(f"satisfied: {'true' if cert.satisfied else 'false'}")
    return EXIT_OK if cert.satisfied else EXIT_UNCERTIFIED


# --------------------------------------------------------------------------- entry point

def build_parser():
    ap = argparse.ArgumentParser(prog="gneseek", description="Distributed GNE seeking simulator")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="simulate a scenario and write trajectories + summary")
    r.add_argument("--scenario", required=True, help="built-in name or path to a scenario YAML file")
    r.add_argument("--mode", choices=MODES)
    r.add_argument("--seed", type=int)
    r.add_argument("--override", action="append", metavar="KEY=VALUE",
                   help=f"override a setting ({', '.join(OVERRIDE_TYPES)}); repeatable")
    r.add_argument("--sweep", metavar="KEY=V1,V2,...", help="run one job per value, in parallel")
    r.add_argument("--out", help=f"output directory (default ${OUTPUT_ENV} or ./runs)")
    r.set_defaults(func=cmd_run)

    a = sub.add_parser("analyze", help="recheck a trajectory CSV against its run summary")
    a.add_argument("trajectory")
    a.add_argument("report")
    a.set_defaults(func=cmd_analyze)

    c = sub.add_parser("certify", help="print the convergence certificate of a scenario")
    c.add_argument("scenario")
    c.add_argument("--c", type=float, help="gain to test instead of the configured one")
    c.set_defaults(func=cmd_certify)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ScenarioError, SchemaError, ValueError, RuntimeError, FloatingPointError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
