"""Two-layer successive convex approximation solver reduced to sphere projections.

Each iteration refreshes the communication and sensing auxiliaries at the
current beamformer, estimates the spectral shift that convexifies the quadratic
surrogate, and lands the next iterate with a single power projection.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import metrics
from .metrics import Beamformer, SingularFisherError, Weights
from .scene import Scene, SteeringSet, build_steering_set

__all__ = [
    "CommAux",
    "SensingAux",
    "SolverConfig",
    "SolveResult",
    "comm_aux",
    "sensing_aux",
    "quad_matrix",
    "shift_parameter",
    "power_iteration",
    "project_total_power",
    "project_per_antenna",
    "sca_step",
    "solve",
    "analytic_gradient",
    "matched_filter_init",
]

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class CommAux:
    """Per-user expansion-point auxiliaries for the rate surrogate.

    sinr: current SINR values; signal_coeff: complex linearization coefficient
    of the desired signal; power_coeff: received-power penalty weight.
    """

    sinr: np.ndarray
    signal_coeff: np.ndarray
    power_coeff: np.ndarray


@dataclass(frozen=True)
class SensingAux:
    """Sensing-side expansion point: squared inverse Fisher matrix and the
    matching transmit-side quadratic form."""

    inv_sq: np.ndarray
    quad: np.ndarray


@dataclass(frozen=True)
class SolverConfig:
    max_iters: int = 5000
    tol_objective: float = 1e-4
    init_mode: str = "matched-filter"  # or "random"
    power_constraint: str = "total"  # or "per-antenna"
    lambda_safety: float = 1.1
    lambda_floor: float = 1e-8
    power_iter_max: int = 200
    power_iter_tol: float = 1e-8
    init_seed: int = 0

    def __post_init__(self):
        if self.tol_objective <= 0 and self.tol_objective != 0.0:
            raise ValueError("tol_objective must be nonnegative")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.lambda_safety < 1.0 or self.lambda_floor <= 0:
            raise ValueError("invalid shift-parameter settings")
        if self.init_mode not in ("matched-filter", "random"):
            raise ValueError(f"unknown init_mode {self.init_mode!r}")
        if self.power_constraint not in ("total", "per-antenna"):
            raise ValueError(f"unknown power_constraint {self.power_constraint!r}")


@dataclass(frozen=True)
class SolveResult:
    beamformer: Beamformer
    objective_trace: np.ndarray
    sum_rate: float
    crlb_trace: float
    iterations: int
    converged: bool
    timings: dict = field(default_factory=dict)

    @property
    def objective(self) -> float:
        return float(self.objective_trace[-1])


def comm_aux_core(
    channels: np.ndarray, noise: np.ndarray, w_comm: np.ndarray, w_sense: np.ndarray
) -> CommAux:
    """Rate-surrogate auxiliaries from raw matrices (shared with the
    reduced-dimension solver, which passes effective channels)."""
    gains = channels.conj().T @ w_comm  # (K, K): entry (k, j) = h_k^H w_cj
    desired = np.diag(gains)
    power_comm = np.abs(gains) ** 2
    power_sense = np.sum(np.abs(channels.conj().T @ w_sense) ** 2, axis=1)
    total = power_comm.sum(axis=1) + power_sense + noise
    signal = np.abs(desired) ** 2
    interference = total - signal
    sinr = np.where(signal > 0, signal / interference, 0.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        signal_coeff = np.where(signal > 0, sinr / np.where(desired == 0, 1.0, desired), 0.0)
    power_coeff = np.where(signal > 0, sinr / total, 0.0)
    return CommAux(sinr=sinr, signal_coeff=signal_coeff, power_coeff=power_coeff)


def comm_aux(scene: Scene, w: Beamformer) -> CommAux:
    """Rate-surrogate auxiliaries at the current beamformer.

    Users with a vanishing desired signal get all three auxiliaries set to 0,
    which drops the linear term from their surrogate.
    """
    return comm_aux_core(scene.channels, scene.noise_comm, w.w_comm, w.w_sense)


def _phi_blocks(phi: np.ndarray, m: int):
    return [[phi[i * m:(i + 1) * m, j * m:(j + 1) * m] for j in range(4)] for i in range(4)]


def quad_matrix(steering: SteeringSet, phi: np.ndarray, noise_radar: float, slots: int) -> np.ndarray:
    """Transmit-side quadratic form matching tr(phi^T F): the n_tx x n_tx
    matrix Q with tr(phi^T F(W)) = Re tr(R_x Q)."""
    a, b = steering.A, steering.B
    at, ap = steering.A_dtheta, steering.A_dphi
    bt, bp = steering.B_dtheta, steering.B_dphi
    u = steering.rcs
    m = steering.n_targets
    p = _phi_blocks(np.asarray(phi, dtype=float), m)

    bb = b.conj().T @ b
    bt_b = bt.conj().T @ b
    bp_b = bp.conj().T @ b
    b_bt = b.conj().T @ bt
    b_bp = b.conj().T @ bp
    bt_bt = bt.conj().T @ bt
    bt_bp = bt.conj().T @ bp
    bp_bp = bp.conj().T @ bp

    uc = u.conj()
    mid = lambda x: (uc[:, None] * x) * u[None, :]  # U^H X U
    left = lambda x: uc[:, None] * x  # U^H X
    ah, ath, aph = a.conj().T, at.conj().T, ap.conj().T

    q11 = (
        a @ mid(p[0][0] * bt_bt) @ ah
        + at @ mid(p[0][0] * b_bt) @ ah
        + a @ mid(p[0][0] * bt_b) @ ath
        + at @ mid(p[0][0] * bb) @ ath
    )
    q12 = 2.0 * (
        a @ mid(p[0][1] * bt_bp) @ ah
        + at @ mid(p[0][1] * b_bp) @ ah
        + a @ mid(p[0][1] * bt_b) @ aph
        + at @ mid(p[0][1] * bb) @ aph
    )
    q22 = (
        a @ mid(p[1][1] * bp_bp) @ ah
        + ap @ mid(p[1][1] * b_bp) @ ah
        + a @ mid(p[1][1] * bp_b) @ aph
        + ap @ mid(p[1][1] * bb) @ aph
    )
    c13 = 2.0 * p[0][2] + 2j * p[0][3]
    q13 = a @ left(c13 * bt_b) @ ah + at @ left(c13 * bb) @ ah
    c23 = 2.0 * p[1][2] + 2j * p[1][3]
    q23 = a @ left(c23 * bp_b) @ ah + ap @ left(c23 * bb) @ ah
    q33 = a @ ((p[2][2] + p[3][3] + 2j * p[2][3]) * bb) @ ah

    return (2.0 * slots / noise_radar) * (q11 + q12 + q22 + q13 + q23 + q33)


def sensing_aux(
    scene: Scene, steering: SteeringSet, w: Beamformer, jitter: Optional[float] = None
) -> SensingAux:
    """Squared inverse Fisher matrix at w and its quadratic-form counterpart."""
    fi = metrics.fim(scene, steering, w)
    inv = metrics.inverse_fisher(fi, jitter)
    phi = inv @ inv
    quad = quad_matrix(steering, phi, scene.noise_radar, scene.slots)
    return SensingAux(inv_sq=phi, quad=quad)


def power_iteration(
    mat: np.ndarray,
    max_iters: int = 200,
    tol: float = 1e-8,
    start: Optional[np.ndarray] = None,
) -> tuple[float, np.ndarray]:
    """Dominant |eigenvalue| of a Hermitian matrix, plus the final vector.

    The default start vector is deterministic (fixed-key Philox draw).
    """
    n = mat.shape[0]
    if start is None or start.shape != (n,) or not np.isfinite(start).all():
        rng = np.random.Generator(np.random.Philox(key=np.uint64(0x5EED)))
        start = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    v = start / np.linalg.norm(start)
    value = 0.0
    for _ in range(max_iters):
        nxt = mat @ v
        nrm = float(np.linalg.norm(nxt))
        if nrm == 0.0:
            return 0.0, v
        v = nxt / nrm
        if abs(nrm - value) <= tol * max(nrm, 1.0):
            value = nrm
            break
        value = nrm
    return value, v


def surrogate_matrices(
    channels: np.ndarray, aux: CommAux, saux: Optional[SensingAux], weights: Weights
):
    """Hermitian pieces of the quadratic surrogate: the channel-weighted Gram
    delta_c H Sigma2 H^H and the symmetrized sensing quadratic."""
    h = channels
    hg = weights.comm * ((h * aux.power_coeff[None, :]) @ h.conj().T) if weights.comm > 0 else 0.0
    if saux is not None and weights.sense > 0:
        qs = 0.5 * weights.sense * (saux.quad + saux.quad.conj().T)
    else:
        qs = 0.0
    return hg, qs


def shift_parameter(
    scene: Scene,
    aux: CommAux,
    saux: Optional[SensingAux],
    weights: Weights,
    cfg: SolverConfig,
    start: Optional[np.ndarray] = None,
) -> tuple[float, np.ndarray]:
    """Safe spectral shift: safety times the dominant |eigenvalue| of the
    surrogate curvature, floored away from zero. Returns (shift, eigvector)."""
    hg, qs = surrogate_matrices(scene.channels, aux, saux, weights)
    mat = hg - qs
    if np.isscalar(mat):
        return cfg.lambda_floor, start if start is not None else np.ones(scene.n_tx, complex)
    mat = 0.5 * (mat + mat.conj().T)
    value, vec = power_iteration(mat, cfg.power_iter_max, cfg.power_iter_tol, start)
    return max(cfg.lambda_floor, cfg.lambda_safety * value), vec


def project_total_power(x: np.ndarray, power_budget: float) -> np.ndarray:
    """Scale onto the total-power sphere tr(X X^H) = power_budget."""
    nrm = np.linalg.norm(x)
    if nrm == 0.0:
        raise ValueError("cannot project the zero matrix onto the power sphere")
    return np.sqrt(power_budget) / nrm * x


def project_per_antenna(x: np.ndarray, power_budget: float, n_tx: int) -> np.ndarray:
    """Scale each row onto power budget/n_tx squared norm (inverse square root
    of the per-row power, so the row-power constraint holds exactly)."""
    row_power = np.sum(np.abs(x) ** 2, axis=1)
    if np.any(row_power == 0.0):
        raise ValueError("cannot project a matrix with a zero row onto per-antenna powers")
    return x * np.sqrt(power_budget / n_tx / row_power)[:, None]


def _project(x: np.ndarray, w: Beamformer, cfg: SolverConfig) -> np.ndarray:
    if cfg.power_constraint == "per-antenna":
        return project_per_antenna(x, w.power_budget, x.shape[0])
    return project_total_power(x, w.power_budget)


def linear_term(channels: np.ndarray, aux: CommAux, weights: Weights, n_sense: int) -> np.ndarray:
    """delta_c H Sigma1^H padded with zero sensing columns."""
    cols = weights.comm * (channels * aux.signal_coeff.conj()[None, :])
    return np.concatenate([cols, np.zeros((channels.shape[0], n_sense), complex)], axis=1)


def sca_step(
    scene: Scene,
    steering: SteeringSet,
    w: Beamformer,
    weights: Weights,
    cfg: SolverConfig,
    aux: Optional[CommAux] = None,
    saux: Optional[SensingAux] = None,
    shift_start: Optional[np.ndarray] = None,
) -> tuple[Beamformer, float, np.ndarray]:
    """One surrogate build + projection. Returns (next beamformer, shift, eigvec)."""
    if aux is None:
        aux = comm_aux(scene, w)
    if saux is None and weights.sense > 0:
        saux = sensing_aux(scene, steering, w)
    shift, vec = shift_parameter(scene, aux, saux, weights, cfg, shift_start)
    hg, qs = surrogate_matrices(scene.channels, aux, saux, weights)
    c1 = linear_term(scene.channels, aux, weights, w.n_sense)
    wmat = w.matrix
    c2w = shift * wmat + (qs @ wmat if not np.isscalar(qs) else 0.0) - (
        hg @ wmat if not np.isscalar(hg) else 0.0
    )
    nxt = _project(c1 + c2w, w, cfg)
    return w.replace_matrix(nxt), shift, vec


def analytic_gradient(
    scene: Scene, steering: SteeringSet, w: Beamformer, weights: Weights
) -> np.ndarray:
    """Closed-form gradient of the tradeoff objective at w:
    2 x linear term plus the curvature matrices applied to W."""
    aux = comm_aux(scene, w)
    saux = sensing_aux(scene, steering, w) if weights.sense > 0 else None
    hg, qs = surrogate_matrices(scene.channels, aux, saux, weights)
    wmat = w.matrix
    grad = 2.0 * linear_term(scene.channels, aux, weights, w.n_sense)
    if not np.isscalar(qs):
        grad = grad + 2.0 * (qs @ wmat)
    if not np.isscalar(hg):
        grad = grad - 2.0 * (hg @ wmat)
    return grad


def matched_filter_init(
    scene: Scene, steering: SteeringSet, n_sense: int, cfg: SolverConfig
) -> Beamformer:
    """Default start: normalized user channels for communication columns,
    cycled transmit steering vectors for sensing columns, then one projection."""
    if cfg.init_mode == "random":
        rng = np.random.Generator(np.random.Philox(key=np.uint64(cfg.init_seed + 0xA11)))
        wc = rng.standard_normal((scene.n_tx, scene.n_users)) + 1j * rng.standard_normal(
            (scene.n_tx, scene.n_users)
        )
        ws = rng.standard_normal((scene.n_tx, n_sense)) + 1j * rng.standard_normal(
            (scene.n_tx, n_sense)
        )
    else:
        norms = np.linalg.norm(scene.channels, axis=0)
        wc = scene.channels / np.where(norms > 0, norms, 1.0)[None, :]
        if n_sense and scene.n_targets:
            cols = [steering.A[:, m % scene.n_targets] for m in range(n_sense)]
            ws = np.column_stack(cols)
        else:
            ws = np.ones((scene.n_tx, n_sense), complex) / np.sqrt(scene.n_tx)
    stacked = np.concatenate([wc, ws], axis=1)
    if stacked.size == 0:
        raise ValueError("beamformer has no columns (n_users + n_sense = 0)")
    w = Beamformer(wc, ws, scene.power_budget)
    return w.replace_matrix(_project(stacked, w, cfg))


def solve(
    scene: Scene,
    weights: Weights,
    cfg: SolverConfig = SolverConfig(),
    n_sense: Optional[int] = None,
    init: Optional[Beamformer] = None,
    steering: Optional[SteeringSet] = None,
) -> SolveResult:
    """Run the full-dimension iteration to tolerance or iteration budget.

    n_sense defaults to 3 * n_targets (the structural stream bound). A run
    that exhausts max_iters without meeting the tolerance is reported via
    converged=False, never silently truncated.
    """
    t0 = time.perf_counter()
    if steering is None:
        steering = build_steering_set(scene)
    if n_sense is None:
        n_sense = 3 * scene.n_targets
    w = init if init is not None else matched_filter_init(scene, steering, n_sense, cfg)
    obj = metrics.objective(scene, steering, w, weights)
    trace = [obj]
    t_setup = time.perf_counter() - t0
    t1 = time.perf_counter()
    converged = False
    vec = None
    for _ in range(cfg.max_iters):
        aux = comm_aux(scene, w) if weights.comm > 0 else _zero_comm_aux(scene)
        saux = sensing_aux(scene, steering, w) if weights.sense > 0 else None
        w, _, vec = sca_step(scene, steering, w, weights, cfg, aux, saux, vec)
        new_obj = metrics.objective(scene, steering, w, weights)
        trace.append(new_obj)
        delta, obj = abs(new_obj - obj), new_obj
        if delta <= cfg.tol_objective:
            converged = True
            break
    t_iter = time.perf_counter() - t1
    if not converged:
        logger.warning(
            "solver hit max_iters=%d with last objective change above tol=%g",
            cfg.max_iters,
            cfg.tol_objective,
        )
    t2 = time.perf_counter()
    final_rate = sum_rate_or_zero(scene, w)
    final_crlb = crlb_or_nan(scene, steering, w)
    iterations = len(trace) - 1
    timings = {
        "setup_s": t_setup,
        "iterations_s": t_iter,
        "metrics_s": time.perf_counter() - t2,
        "per_iteration_s": t_iter / max(iterations, 1),
    }
    return SolveResult(
        beamformer=w,
        objective_trace=np.array(trace),
        sum_rate=final_rate,
        crlb_trace=final_crlb,
        iterations=iterations,
        converged=converged,
        timings=timings,
    )


def _zero_comm_aux(scene: Scene) -> CommAux:
    k = scene.n_users
    return CommAux(np.zeros(k), np.zeros(k, complex), np.zeros(k))


def sum_rate_or_zero(scene: Scene, w: Beamformer) -> float:
    return metrics.sum_rate(scene, w) if scene.n_users else 0.0


def crlb_or_nan(scene: Scene, steering: SteeringSet, w: Beamformer) -> float:
    if scene.n_targets == 0:
        return float("nan")
    try:
        return metrics.crlb_trace(metrics.fim(scene, steering, w))
    except SingularFisherError:
        return float("nan")
