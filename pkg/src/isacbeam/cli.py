"""Command-line interface: single solves, sweeps, and the verification suite.

Exit codes: 0 success, 1 invalid configuration, 2 verification failure,
3 nonconvergence in strict mode.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path
from typing import Optional

from . import experiments, lowdim, sca
from .metrics import Weights
from .sca import SolverConfig
from .scene import scene_from_config

__all__ = ["main", "build_parser"]

EXIT_OK = 0
EXIT_BAD_CONFIG = 1
EXIT_VERIFY_FAILED = 2
EXIT_NONCONVERGED = 3


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="isacbeam",
        description="Joint communication/sensing transmit beamforming optimizer.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="JSON configuration file")
    common.add_argument("--seed", type=int, default=0, help="base RNG seed")
    common.add_argument(
        "--solver", choices=("full", "lowdim", "both"), default="full",
        help="which solver(s) to run",
    )
    common.add_argument(
        "--power-constraint", choices=("total", "per-antenna"), default="total",
        help="transmit power constraint handled by the projection step",
    )

    p_solve = sub.add_parser("solve", parents=[common], help="solve one instance")
    p_solve.add_argument("--comm-weight", type=float, default=0.25)
    p_solve.add_argument("--sense-weight", type=float, default=1.0)
    p_solve.add_argument("--out", type=Path, help="write metrics JSON here instead of stdout")

    p_sweep = sub.add_parser("sweep", parents=[common], help="run a configured sweep")
    p_sweep.add_argument("--trials", type=int, help="override trial count")
    p_sweep.add_argument("--out", type=Path, help="CSV output path (summary JSON alongside)")
    p_sweep.add_argument("--strict", action="store_true",
                         help="exit nonzero if any trial fails to converge")

    p_verify = sub.add_parser("verify", parents=[common], help="run the invariant suite")
    p_verify.add_argument("--out", type=Path, help="write the report JSON here")
    return parser


def _load_json(path: Optional[Path]) -> dict:
    if path is None:
        return {}
    try:
        return json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ValueError(f"cannot read config {path}: {exc}") from exc


def _cmd_solve(args) -> int:
    scene_cfg = _load_json(args.config)
    scene_cfg.setdefault("seed", args.seed)
    scene = scene_from_config(scene_cfg)
    weights = Weights(args.comm_weight, args.sense_weight)
    cfg = SolverConfig(power_constraint=args.power_constraint)
    solvers = ("full", "lowdim") if args.solver == "both" else (args.solver,)
    report = {}
    for name in solvers:
        runner = lowdim.solve_ld if name == "lowdim" else sca.solve
        result = runner(scene, weights, cfg)
        report[name] = {
            "sum_rate_nats": result.sum_rate,
            "crlb_trace": result.crlb_trace,
            "objective": float(result.objective_trace[-1]),
            "iterations": result.iterations,
            "converged": result.converged,
            "total_power": result.beamformer.total_power,
        }
    text = json.dumps(report, indent=2, sort_keys=True)
    if args.out:
        args.out.write_text(text + "\n")
    else:
        print(text)
    return EXIT_OK


def _cmd_sweep(args) -> int:
    raw = _load_json(args.config)
    raw.setdefault("base_seed", args.seed)
    raw.setdefault("solver", args.solver)
    if args.trials is not None:
        raw["trials"] = args.trials
    if args.strict:
        raw["strict"] = True
    solver_cfg = raw.setdefault("solver_config", {})
    solver_cfg.setdefault("power_constraint", args.power_constraint)
    cfg = experiments.config_from_dict(raw)
    result = experiments.run_experiment(cfg)
    csv_text = experiments.records_to_csv(result.records, cfg.sweep_axis)
    summary_text = json.dumps(result.summary, indent=2, sort_keys=True)
    if args.out:
        args.out.write_text(csv_text)
        args.out.with_suffix(".summary.json").write_text(summary_text + "\n")
    else:
        sys.stdout.write(csv_text)
        print(summary_text)
    if cfg.strict and any(r.status != "ok" for r in result.records):
        return EXIT_NONCONVERGED
    return EXIT_OK


def _cmd_verify(args) -> int:
    scene_cfg = _load_json(args.config)
    checks = experiments.verify(scene_cfg or None, seed=args.seed)
    report = [dataclasses.asdict(c) for c in checks]
    text = json.dumps(report, indent=2, sort_keys=True)
    if args.out:
        args.out.write_text(text + "\n")
    else:
        print(text)
    failures = [c for c in checks if not c.passed]
    for c in failures:
        print(f"FAILED: {c.name} value={c.value:g} threshold={c.threshold:g}", file=sys.stderr)
    return EXIT_VERIFY_FAILED if failures else EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "solve":
            return _cmd_solve(args)
        if args.command == "sweep":
            return _cmd_sweep(args)
        return _cmd_verify(args)
    except (ValueError, TypeError, KeyError) as exc:
        print(f"error: invalid configuration: {exc}", file=sys.stderr)
        return EXIT_BAD_CONFIG


if __name__ == "__main__":
    sys.exit(main())
