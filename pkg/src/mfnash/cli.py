"""Command line entry point: ``mfnash <command> CONFIG [options]``.

Exit codes: 0 success, 1 validation or verification failure, 2 usage or
configuration error, 3 solver fault.
"""

from __future__ import annotations

import argparse
import datetime as _dt
import json
import os
import platform
import sys
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .config import ConfigError, RunConfig, load_config
from .cost import exact_cost_moments, simulate_cost
from .fbsde import (NoConvergence, RegressionSingular, SolverConfig, check_against_riccati,
                    solve_lq_fbsde)
from .model import TimeGrid, validate_lq
from .nash_verify import LadderInconsistent, verify_nash
from .riccati import BlowUp, feedback_gains, gains_to_csv, solve_riccati, tables_to_csv
from .sde import NoisePlan, equilibrium_policy, generate_noise, paths_to_csv, simulate_state

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_SOLVER = 0, 1, 2, 3
OUT_ENV = "MFNASH_OUT"


class UsageError(Exception):
    pass


def _positive_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text!r}")
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {value}")
    return value


def _seed(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer seed, got {text!r}")
    if not 0 <= value < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must lie in [0, 2^64)")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mfnash", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, paths=False, steps=False, seed=False):
        p.add_argument("config", help="YAML run configuration")
        p.add_argument("--out", help=f"output root (default: ${OUT_ENV} or ./runs)")
        p.add_argument("--threads", type=_positive_int, default=1,
                       help="worker cap for noise generation; results do not depend on it")
        if paths:
            p.add_argument("--paths", type=_positive_int)
        if steps:
            p.add_argument("--steps", type=_positive_int)
        if seed:
            p.add_argument("--seed", type=_seed)
        return p

    common(sub.add_parser("validate", help="check the coefficient constraints"))
    common(sub.add_parser("solve", help="Riccati tables and feedback gains"), steps=True)
    common(sub.add_parser("simulate", help="equilibrium paths and Monte Carlo cost"),
           paths=True, steps=True, seed=True)
    p = common(sub.add_parser("verify-nash", help="deviation battery and structural checks"),
               paths=True, steps=True, seed=True)
    p.add_argument("--gain-scale", type=float,
                   help="multiply the equilibrium gains (1.5 gives a broken equilibrium)")
    p = common(sub.add_parser("fbsde-check", help="regression solver against the Riccati route"),
               paths=True, steps=True, seed=True)
    p.add_argument("--picard", type=_positive_int, help="maximum Picard iterations")
    return parser


def _run_dir(args, cfg: RunConfig) -> Path:
    root = Path(args.out or os.environ.get(OUT_ENV) or "runs")
    path = root / f"{cfg.digest()}-s{cfg.seed}" / args.command
    path.mkdir(parents=True, exist_ok=True)
    return path


def _write(path: Path, text: str):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def _manifest(args, cfg: RunConfig, out: Path, argv, **extra):
    data = {
        "command": args.command,
        "command_line": list(argv),
        "config_hash": cfg.digest(),
        "config": cfg.data,
        "seed": cfg.seed,
        "versions": {"mfnash": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
                     "python": platform.python_version()},
        "threads": args.threads,
        "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
    }
    data.update(extra)
    _write(out / "manifest.json", json.dumps(data, indent=2, sort_keys=True) + "\n")


def _apply_overrides(args, cfg: RunConfig, section: str) -> RunConfig:
    cfg = cfg.override(section, n_paths=getattr(args, "paths", None), n_steps=getattr(args, "steps", None))
    if getattr(args, "seed", None) is not None:
        cfg = cfg.override("seed", seed=args.seed)
    return cfg


def _check_validation(spec, grid) -> bool:
    report = validate_lq(spec, grid)
    if not report.ok:
        print(report.summary())
    return report.ok


def cmd_validate(args, cfg, argv) -> int:
    spec = cfg.spec
    report = validate_lq(spec, TimeGrid(spec.horizon, cfg.section("solve")["n_steps"]))
    print(report.summary())
    return EXIT_OK if report.ok else EXIT_FAIL


def cmd_solve(args, cfg, argv) -> int:
    cfg = _apply_overrides(args, cfg, "solve")
    spec = cfg.spec
    grid = TimeGrid(spec.horizon, cfg.section("solve")["n_steps"])
    if not _check_validation(spec, grid):
        return EXIT_FAIL
    tables = solve_riccati(spec, grid)
    gains = feedback_gains(spec, tables)
    out = _run_dir(args, cfg)
    _write(out / "riccati.csv", tables_to_csv(tables))
    _write(out / "gains.csv", gains_to_csv(gains))
    _manifest(args, cfg, out, argv, n_steps=grid.n_steps,
              identity_residual=float(tables.identity_residual()))
    print(f"wrote {out}")
    return EXIT_OK


def cmd_simulate(args, cfg, argv) -> int:
    cfg = _apply_overrides(args, cfg, "simulate")
    sec = cfg.section("simulate")
    spec = cfg.spec
    grid = TimeGrid(spec.horizon, sec["n_steps"])
    if not _check_validation(spec, grid):
        return EXIT_FAIL
    tables = solve_riccati(spec, grid)
    gains = feedback_gains(spec, tables)
    policy = equilibrium_policy(gains)
    plan = NoisePlan(cfg.seed, sec["n_paths"], grid)
    est = simulate_cost(spec, policy, tables.ex_mean, plan, threads=args.threads)
    j1, j2 = exact_cost_moments(spec, gains, tables.ex_mean)
    n_csv = min(sec["csv_paths"], plan.n_paths)
    head = simulate_state(spec, policy, tables.ex_mean, generate_noise(plan, np.arange(n_csv)))
    out = _run_dir(args, cfg)
    _write(out / "paths.csv", paths_to_csv(head, every=sec["csv_every"]))
    summary = est.to_dict()
    summary.update({"exact_j1": float(j1), "exact_j2": float(j2)})
    _write(out / "cost.json", json.dumps(summary, indent=2, sort_keys=True) + "\n")
    _manifest(args, cfg, out, argv, noise=plan.to_dict())
    print(json.dumps(summary, indent=2, sort_keys=True))
    return EXIT_OK


def cmd_verify_nash(args, cfg, argv) -> int:
    cfg = _apply_overrides(args, cfg, "nash")
    if args.gain_scale is not None:
        cfg = cfg.override("nash", gain_scale=float(args.gain_scale))
    sec = cfg.section("nash")
    if sec["n_paths"] % sec["n_batches"]:
        raise UsageError(f"paths ({sec['n_paths']}) must be a multiple of n_batches ({sec['n_batches']})")
    spec = cfg.spec
    grid = TimeGrid(spec.horizon, sec["n_steps"])
    report = validate_lq(spec, grid)
    structural = report.constraints() & {"m1_positive", "m2_positive", "b1b2_nonzero", "A3"}
    if structural:
        print(report.summary())
        return EXIT_FAIL
    gains = feedback_gains(spec, solve_riccati(spec, grid))
    if sec["gain_scale"] != 1.0:
        gains = gains.scaled(sec["gain_scale"])
    try:
        nash = verify_nash(spec, grid, sec["n_paths"], cfg.seed, gains=gains,
                           n_batches=sec["n_batches"], threads=args.threads)
    except LadderInconsistent as exc:
        print(f"verification inconclusive: {exc}")
        return EXIT_FAIL
    out = _run_dir(args, cfg)
    _write(out / "nash.csv", nash.to_csv())
    text = nash.summary() + "\n" + nash.convexity.summary() + "\n"
    _write(out / "nash_summary.txt", text)
    _manifest(args, cfg, out, argv, n_steps=grid.n_steps, n_paths=sec["n_paths"])
    print(text, end="")
    return EXIT_OK if nash.passed else EXIT_FAIL


def cmd_fbsde_check(args, cfg, argv) -> int:
    cfg = _apply_overrides(args, cfg, "fbsde")
    if args.picard is not None:
        cfg = cfg.override("fbsde", max_picard=args.picard)
    sec = cfg.section("fbsde")
    if sec["antithetic"] and sec["n_paths"] % 2:
        raise UsageError("antithetic sampling needs an even number of paths")
    spec = cfg.spec
    grid = TimeGrid(spec.horizon, sec["n_steps"])
    if not _check_validation(spec, grid):
        return EXIT_FAIL
    solver = SolverConfig(n_paths=sec["n_paths"], n_steps=sec["n_steps"], max_picard=sec["max_picard"],
                          picard_tol=sec["picard_tol"], theta=sec["theta"])
    plan = NoisePlan(cfg.seed, sec["n_paths"], grid, antithetic=sec["antithetic"])
    sol = solve_lq_fbsde(spec, solver, plan)
    tables = solve_riccati(spec, grid)
    res = check_against_riccati(sol, tables)
    out = _run_dir(args, cfg)
    _write(out / "picard_log.csv", sol.log_to_csv())
    _write(out / "qhat.csv", sol.qhat_to_csv(tables))
    summary = {"iterations": len(sol.iteration_log), "qhat_rmse": list(res.qhat_rmse),
               "mean_gap": list(res.mean_gap), "terminal_r2": list(res.terminal_r2), "pass": res.ok()}
    _write(out / "residuals.json", json.dumps(summary, indent=2, sort_keys=True) + "\n")
    _manifest(args, cfg, out, argv, noise=plan.to_dict())
    print(f"converged in {len(sol.iteration_log)} iterations")
    print(res.summary())
    return EXIT_OK if res.ok() else EXIT_FAIL


COMMANDS = {
    "validate": cmd_validate,
    "solve": cmd_solve,
    "simulate": cmd_simulate,
    "verify-nash": cmd_verify_nash,
    "fbsde-check": cmd_fbsde_check,
}


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    try:
        cfg = load_config(args.config)
        return COMMANDS[args.command](args, cfg, argv)
    except (ConfigError, UsageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except BlowUp as exc:
        print(f"solver fault: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except (NoConvergence, RegressionSingular) as exc:
        print(f"solver fault: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
