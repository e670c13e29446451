"""Experiment harness: seeded sweeps, aggregation, CSV/JSON emission.

A sweep varies one axis (tradeoff weight, stream count, antenna count, user
count, or transmit power) over a list of values, solving `trials` seeded
instances per value. Records are emitted in a fixed sort order so results are
independent of worker scheduling.
"""

from __future__ import annotations

import csv
import io
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from . import analysis, lowdim, metrics, sca
from .metrics import Beamformer, Weights
from .scene import ArrayGeometry, build_steering_set, sample_scene, scene_from_config
from .sca import SolverConfig

__all__ = [
    "ExperimentConfig",
    "TrialRecord",
    "ExperimentResult",
    "run_experiment",
    "records_to_csv",
    "verify",
    "config_from_dict",
    "CSV_HEADER",
]

CSV_HEADER = (
    "sweep_axis,sweep_value,seed,solver,status,"
    "sum_rate_nats,crlb_trace,objective,iterations,wall_ms"
)

_SWEEP_AXES = ("comm_weight", "n_sense", "n_tx", "n_users", "power_dbm")
_SOLVERS = ("full", "lowdim", "both")


@dataclass(frozen=True)
class ExperimentConfig:
    """One sweep: axis, values, trial count, solver selection, scene overrides.

    scene holds sample_scene config keys (minus seed); trial seeds are
    base_seed + trial index. measure_time=False zeroes wall_ms so repeated
    runs emit byte-identical CSV.
    """

    sweep_axis: str = "comm_weight"
    sweep_values: tuple = (0.25,)
    trials: int = 50
    base_seed: int = 0
    solver: str = "full"
    comm_weight: float = 0.25
    sense_weight: float = 1.0
    scene: dict = field(default_factory=dict)
    solver_config: SolverConfig = SolverConfig()
    workers: int = 1
    strict: bool = False
    measure_time: bool = True

    def __post_init__(self):
        if self.sweep_axis not in _SWEEP_AXES:
            raise ValueError(f"sweep_axis must be one of {_SWEEP_AXES}")
        if self.solver not in _SOLVERS:
            raise ValueError(f"solver must be one of {_SOLVERS}")
        values = tuple(self.sweep_values)
        if not values:
            raise ValueError("sweep_values must be nonempty")
        if list(values) != sorted(values):
            raise ValueError("sweep_values must be sorted ascending")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")
        object.__setattr__(self, "sweep_values", values)
        object.__setattr__(self, "scene", dict(self.scene))


@dataclass(frozen=True)
class TrialRecord:
    """One solved instance: identity columns plus final metrics."""

    sweep_value: float
    seed: int
    solver: str
    status: str
    sum_rate: float
    crlb_trace: float
    objective: float
    iterations: int
    wall_ms: float

    def __post_init__(self):
        if self.iterations < 0 or self.wall_ms < 0:
            raise ValueError("iterations and wall_ms must be nonnegative")


@dataclass(frozen=True)
class ExperimentResult:
    records: tuple
    summary: dict


def _near_square(n: int) -> ArrayGeometry:
    """Closest-to-square factorization of an antenna count, wider side first."""
    best = (n, 1)
    for d in range(1, int(math.isqrt(n)) + 1):
        if n % d == 0:
            best = (n // d, d)
    return ArrayGeometry(*best)


def _trial_inputs(cfg: ExperimentConfig, value, seed: int):
    scene_cfg = dict(cfg.scene)
    scene_cfg["seed"] = seed
    weights = Weights(cfg.comm_weight, cfg.sense_weight)
    n_sense = None
    if cfg.sweep_axis == "comm_weight":
        weights = Weights(float(value), cfg.sense_weight)
    elif cfg.sweep_axis == "n_sense":
        n_sense = int(value)
    elif cfg.sweep_axis == "n_tx":
        geom = _near_square(int(value))
        scene_cfg["tx_geometry"] = [geom.n_horizontal, geom.n_vertical]
    elif cfg.sweep_axis == "n_users":
        scene_cfg["n_users"] = int(value)
    elif cfg.sweep_axis == "power_dbm":
        scene_cfg["power_dbm"] = float(value)
    return scene_cfg, weights, n_sense


def _run_trial(cfg: ExperimentConfig, value, seed: int, solver_name: str) -> TrialRecord:
    scene_cfg, weights, n_sense = _trial_inputs(cfg, value, seed)
    scene = scene_from_config(scene_cfg)
    t0 = time.perf_counter()
    try:
        if solver_name == "lowdim":
            result = lowdim.solve_ld(scene, weights, cfg.solver_config)
        else:
            result = sca.solve(scene, weights, cfg.solver_config, n_sense=n_sense)
        wall_ms = (time.perf_counter() - t0) * 1e3 if cfg.measure_time else 0.0
        status = "ok" if result.converged else "nonconverged"
        return TrialRecord(
            sweep_value=float(value),
            seed=seed,
            solver=solver_name,
            status=status,
            sum_rate=float(result.sum_rate),
            crlb_trace=float(result.crlb_trace),
            objective=float(result.objective_trace[-1]),
            iterations=result.iterations,
            wall_ms=wall_ms,
        )
    except (metrics.SingularFisherError, lowdim.RankDeficientBasisError, ValueError) as exc:
        wall_ms = (time.perf_counter() - t0) * 1e3 if cfg.measure_time else 0.0
        return TrialRecord(
            sweep_value=float(value),
            seed=seed,
            solver=solver_name,
            status=f"failed:{type(exc).__name__}",
            sum_rate=float("nan"),
            crlb_trace=float("nan"),
            objective=float("nan"),
            iterations=0,
            wall_ms=wall_ms,
        )


def _trial_args(cfg: ExperimentConfig):
    solvers = ("full", "lowdim") if cfg.solver == "both" else (cfg.solver,)
    for value in cfg.sweep_values:
        for trial in range(cfg.trials):
            for solver_name in solvers:
                yield (cfg, value, cfg.base_seed + trial, solver_name)


def _summarize(records) -> dict:
    summary: dict = {}
    for rec in records:
        bucket = summary.setdefault(rec.solver, {}).setdefault(
            repr(rec.sweep_value),
            {"n": 0, "n_ok": 0, "n_failed": 0, "_sr": [], "_cr": [], "_obj": []},
        )
        bucket["n"] += 1
        if rec.status.startswith("failed"):
            bucket["n_failed"] += 1
            continue
        if rec.status == "ok":
            bucket["n_ok"] += 1
        bucket["_sr"].append(rec.sum_rate)
        bucket["_cr"].append(rec.crlb_trace)
        bucket["_obj"].append(rec.objective)
    for per_solver in summary.values():
        for bucket in per_solver.values():
            for key, name in (("_sr", "sum_rate_nats"), ("_cr", "crlb_trace"), ("_obj", "objective")):
                vals = np.asarray(bucket.pop(key), dtype=float)
                vals = vals[np.isfinite(vals)]
                if vals.size:
                    stderr = float(np.std(vals, ddof=1) / np.sqrt(vals.size)) if vals.size > 1 else 0.0
                    bucket[name] = {"mean": float(np.mean(vals)), "stderr": stderr}
                else:
                    bucket[name] = {"mean": float("nan"), "stderr": float("nan")}
    return summary


def run_experiment(cfg: ExperimentConfig) -> ExperimentResult:
    """Run every (sweep value, seed, solver) trial and aggregate.

    Individual trial failures become failed rows; they never abort the sweep.
    Output order is fixed by (sweep value, seed, solver) regardless of
    worker completion order.
    """
    args = list(_trial_args(cfg))
    if cfg.workers > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            records = list(pool.map(_run_trial, *zip(*args)))
    else:
        records = [_run_trial(*a) for a in args]
    records.sort(key=lambda r: (r.sweep_value, r.seed, r.solver))
    return ExperimentResult(records=tuple(records), summary=_summarize(records))


def records_to_csv(records, sweep_axis: str) -> str:
    """Serialize trial records under the fixed CSV header."""
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(CSV_HEADER.split(","))
    for rec in records:
        writer.writerow(
            [
                sweep_axis,
                repr(rec.sweep_value),
                rec.seed,
                rec.solver,
                rec.status,
                repr(rec.sum_rate),
                repr(rec.crlb_trace),
                repr(rec.objective),
                rec.iterations,
                repr(rec.wall_ms),
            ]
        )
    return out.getvalue()


def config_from_dict(raw: dict) -> ExperimentConfig:
    """Build an ExperimentConfig from a flat JSON-style dict."""
    data = dict(raw)
    if "sweep_values" in data:
        data["sweep_values"] = tuple(data["sweep_values"])
    if "solver_config" in data:
        data["solver_config"] = SolverConfig(**data["solver_config"])
    return ExperimentConfig(**data)


# --- verification -----------------------------------------------------------


def _check(name: str, value: float, threshold: float) -> analysis.CheckRecord:
    return analysis.CheckRecord(
        name=name, value=float(value), threshold=float(threshold),
        passed=bool(value <= threshold),
    )


def verify(scene_config: Optional[dict] = None, seed: int = 0) -> list:
    """Run the structural invariant suite on freshly solved instances.

    Returns one CheckRecord per invariant: oracle agreement (gradient, Fisher
    information, adjoint identity), full-power behavior, monotone objective
    trace, stationary-structure residuals, and reduced/full solver parity.
    """
    scene_cfg = dict(scene_config or {})
    scene_cfg.setdefault("seed", seed)
    scene = scene_from_config(scene_cfg)
    steering = build_steering_set(scene)
    weights = Weights(0.25, 1.0)
    checks = []

    small = sample_scene(seed + 1, tx_geometry=ArrayGeometry(3, 2), rx_geometry=ArrayGeometry(2, 2),
                         n_users=2, n_targets=1, n_slots=8)
    small_st = build_steering_set(small)
    w_small = sca.matched_filter_init(small, small_st, 3, SolverConfig())
    g_fd = analysis.fd_gradient(small, small_st, w_small, weights)
    g_an = sca.analytic_gradient(small, small_st, w_small, weights)
    checks.append(_check("gradient_fd_relative_error",
                         np.linalg.norm(g_an - g_fd) / np.linalg.norm(g_fd), 1e-5))

    w0 = sca.matched_filter_init(scene, steering, 3 * scene.n_targets, SolverConfig())
    f_fd = analysis.fd_fim(scene, w0)
    f_an = metrics.fim(scene, steering, w0).matrix
    checks.append(_check("fim_fd_relative_error",
                         np.linalg.norm(f_an - f_fd) / np.linalg.norm(f_fd), 1e-5))

    rng = np.random.Generator(np.random.Philox(key=np.uint64(seed + 0x5EED)))
    worst = 0.0
    for _ in range(10):
        wmat = rng.standard_normal(w0.matrix.shape) + 1j * rng.standard_normal(w0.matrix.shape)
        wr = w0.replace_matrix(sca.project_total_power(wmat, scene.power_budget))
        phi = rng.standard_normal((4 * scene.n_targets,) * 2)
        phi = 0.5 * (phi + phi.T)
        f = metrics.fim(scene, steering, wr).matrix
        q = sca.quad_matrix(steering, phi, scene.noise_radar, scene.slots)
        lhs = float(np.trace(phi.T @ f))
        rhs = float(np.real(np.trace(wr.covariance @ q)))
        worst = max(worst, abs(lhs - rhs) / max(abs(lhs), 1e-300))
    checks.append(_check("adjoint_identity_relative_error", worst, 1e-8))

    result = sca.solve(scene, weights)
    w = result.beamformer
    checks.append(_check("full_power_relative_error",
                         abs(w.total_power - scene.power_budget) / scene.power_budget, 1e-9))
    shrunk = w.replace_matrix(0.99 * w.matrix)
    inward = metrics.objective(scene, steering, shrunk, weights) - result.objective_trace[-1]
    checks.append(_check("inward_scaling_gain", inward, 0.0))
    slack = 1e-9 * max(1.0, float(np.max(np.abs(result.objective_trace))))
    checks.append(_check("trace_monotonicity_violation",
                         float(-min(np.min(np.diff(result.objective_trace)), 0.0)), slack))

    tight = sca.solve(scene, weights, replace(SolverConfig(), tol_objective=1e-8, max_iters=20000))
    report = analysis.obs_residuals(scene, steering, tight.beamformer, weights)
    checks.append(_check("obs_stationarity_residual", report.stationarity_residual, 1e-2))
    checks.append(_check("obs_comm_structure_residual", report.comm_structure_residual, 1e-2))
    checks.append(_check("obs_sense_eigen_residual", report.sense_eigen_residual, 1e-2))

    ld = lowdim.solve_ld(scene, weights)
    parity = abs(ld.objective_trace[-1] - result.objective_trace[-1]) / max(
        abs(result.objective_trace[-1]), 1e-300
    )
    checks.append(_check("ld_full_objective_parity", parity, 1e-2))

    capped = sca.solve(scene, weights, replace(SolverConfig(), tol_objective=0.0, max_iters=5))
    checks.append(_check("nonconvergence_reported", 0.0 if not capped.converged else 1.0, 0.0))
    return checks
