"""Performance metrics: per-user rates, Fisher information, CRLB trace, objective."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.linalg

from .scene import Scene, SteeringSet

__all__ = [
    "Beamformer",
    "FisherInfo",
    "Weights",
    "SingularFisherError",
    "user_rate",
    "sum_rate",
    "fim",
    "fim_from_covariance",
    "crlb_trace",
    "objective",
]


class SingularFisherError(RuntimeError):
    """Fisher information matrix is not positive definite (even with jitter)."""


@dataclass(frozen=True)
class Beamformer:
    """Transmit beamformer: communication columns, sensing columns, power budget.

    w_comm is (n_tx, K); w_sense is (n_tx, n_sense) and may have zero columns.
    """

    w_comm: np.ndarray
    w_sense: np.ndarray
    power_budget: float

    def __post_init__(self):
        wc = np.asarray(self.w_comm, dtype=np.complex128)
        ws = np.asarray(self.w_sense, dtype=np.complex128)
        if wc.ndim != 2 or ws.ndim != 2 or wc.shape[0] != ws.shape[0]:
            raise ValueError("w_comm and w_sense must share the antenna dimension")
        if not (np.all(np.isfinite(wc)) and np.all(np.isfinite(ws))):
            raise ValueError("beamformer entries must be finite")
        if self.power_budget <= 0:
            raise ValueError("power budget must be positive")
        object.__setattr__(self, "w_comm", wc)
        object.__setattr__(self, "w_sense", ws)

    @property
    def matrix(self) -> np.ndarray:
        """The full stacked matrix [w_comm, w_sense]."""
        return np.concatenate([self.w_comm, self.w_sense], axis=1)

    @property
    def n_tx(self) -> int:
        return self.w_comm.shape[0]

    @property
    def n_users(self) -> int:
        return self.w_comm.shape[1]

    @property
    def n_sense(self) -> int:
        return self.w_sense.shape[1]

    @property
    def total_power(self) -> float:
        return float(np.linalg.norm(self.w_comm) ** 2 + np.linalg.norm(self.w_sense) ** 2)

    @property
    def covariance(self) -> np.ndarray:
        """Transmit covariance w_comm w_comm^H + w_sense w_sense^H."""
        w = self.matrix
        return w @ w.conj().T

    def is_feasible(self, slack: float = 1e-9) -> bool:
        return self.total_power <= self.power_budget * (1.0 + slack)

    def is_on_sphere(self, slack: float = 1e-9) -> bool:
        return abs(self.total_power - self.power_budget) <= slack * self.power_budget

    def replace_matrix(self, w: np.ndarray) -> "Beamformer":
        """Same column split and budget, new stacked matrix."""
        k = self.n_users
        return Beamformer(w[:, :k], w[:, k:], self.power_budget)


@dataclass(frozen=True)
class FisherInfo:
    """Real symmetric 4M x 4M Fisher information matrix.

    Block order of the parameters: azimuths, elevations, Re(rcs), Im(rcs).
    """

    matrix: np.ndarray

    def __post_init__(self):
        f = np.asarray(self.matrix, dtype=float)
        if f.ndim != 2 or f.shape[0] != f.shape[1] or f.shape[0] % 4:
            raise ValueError("Fisher matrix must be square with side 4M")
        object.__setattr__(self, "matrix", f)

    @property
    def n_targets(self) -> int:
        return self.matrix.shape[0] // 4


@dataclass(frozen=True)
class Weights:
    """Tradeoff weights: comm multiplies the sum rate, sense the CRLB trace."""

    comm: float
    sense: float

    def __post_init__(self):
        if self.comm < 0 or self.sense < 0:
            raise ValueError("weights must be nonnegative")
        if self.comm == 0 and self.sense == 0:
            raise ValueError("at least one weight must be positive")


def _check_dims(scene: Scene, w: Beamformer) -> None:
    if w.n_tx != scene.n_tx or w.n_users != scene.n_users:
        raise ValueError("beamformer dimensions do not match the scene")


def user_rate(scene: Scene, w: Beamformer, k: int) -> float:
    """Achievable rate (nats/s/Hz) of user k (0-based), sensing beams as interference."""
    _check_dims(scene, w)
    if not 0 <= k < scene.n_users:
        raise ValueError(f"user index {k} out of range")
    h = scene.channels[:, k]
    gains_comm = np.abs(h.conj() @ w.w_comm) ** 2
    signal = gains_comm[k]
    interference = gains_comm.sum() - signal + np.sum(np.abs(h.conj() @ w.w_sense) ** 2)
    return float(np.log1p(signal / (interference + scene.noise_comm[k])))


def sum_rate(scene: Scene, w: Beamformer) -> float:
    """Total rate over all users (nats/s/Hz)."""
    return float(sum(user_rate(scene, w, k) for k in range(scene.n_users)))


def _weighted(u: np.ndarray, x: np.ndarray) -> np.ndarray:
    # U X U^H with U = diag(u)
    return (u[:, None] * x) * u.conj()[None, :]


def fim_from_covariance(
    steering: SteeringSet, r_x: np.ndarray, noise_radar: float, slots: int
) -> FisherInfo:
    """Fisher information for (azimuths, elevations, Re rcs, Im rcs) given the
    transmit covariance r_x."""
    a, b = steering.A, steering.B
    at, ap = steering.A_dtheta, steering.A_dphi
    bt, bp = steering.B_dtheta, steering.B_dphi
    u = steering.rcs
    m = steering.n_targets

    ra, rat, rap = r_x @ a, r_x @ at, r_x @ ap
    gaa = a.conj().T @ ra
    gat = a.conj().T @ rat
    gap = a.conj().T @ rap
    gta = at.conj().T @ ra
    gtt = at.conj().T @ rat
    gpa = ap.conj().T @ ra
    gpt = ap.conj().T @ rat
    gpp = ap.conj().T @ rap

    bb = b.conj().T @ b
    bt_b = bt.conj().T @ b
    bp_b = bp.conj().T @ b
    b_bt = b.conj().T @ bt
    b_bp = b.conj().T @ bp
    bt_bt = bt.conj().T @ bt
    bt_bp = bt.conj().T @ bp
    bp_bp = bp.conj().T @ bp

    f11 = (
        _weighted(u, gaa).T * bt_bt
        + _weighted(u, gat).T * b_bt
        + _weighted(u, gta).T * bt_b
        + _weighted(u, gtt).T * bb
    )
    f12 = (
        _weighted(u, gaa).T * bt_bp
        + _weighted(u, gat).T * b_bp
        + _weighted(u, gpa).T * bt_b
        + _weighted(u, gpt).T * bb
    )
    f22 = (
        _weighted(u, gaa).T * bp_bp
        + _weighted(u, gap).T * b_bp
        + _weighted(u, gpa).T * bp_b
        + _weighted(u, gpp).T * bb
    )
    f13 = (gaa * u.conj()[None, :]).T * bt_b + (gat * u.conj()[None, :]).T * bb
    f23 = (gaa * u.conj()[None, :]).T * bp_b + (gap * u.conj()[None, :]).T * bb
    f33 = gaa.T * bb

    f = np.empty((4 * m, 4 * m), dtype=float)
    re, im = np.real, np.imag
    f[0 * m:1 * m, 0 * m:1 * m] = re(f11)
    f[0 * m:1 * m, 1 * m:2 * m] = re(f12)
    f[0 * m:1 * m, 2 * m:3 * m] = re(f13)
    f[0 * m:1 * m, 3 * m:4 * m] = -im(f13)
    f[1 * m:2 * m, 0 * m:1 * m] = re(f12).T
    f[1 * m:2 * m, 1 * m:2 * m] = re(f22)
    f[1 * m:2 * m, 2 * m:3 * m] = re(f23)
    f[1 * m:2 * m, 3 * m:4 * m] = -im(f23)
    f[2 * m:3 * m, 0 * m:1 * m] = re(f13).T
    f[2 * m:3 * m, 1 * m:2 * m] = re(f23).T
    f[2 * m:3 * m, 2 * m:3 * m] = re(f33)
    f[2 * m:3 * m, 3 * m:4 * m] = -im(f33)
    f[3 * m:4 * m, 0 * m:1 * m] = -im(f13).T
    f[3 * m:4 * m, 1 * m:2 * m] = -im(f23).T
    f[3 * m:4 * m, 2 * m:3 * m] = -im(f33).T
    f[3 * m:4 * m, 3 * m:4 * m] = re(f33)
    f *= 2.0 * slots / noise_radar
    return FisherInfo(f)


def fim(scene: Scene, steering: SteeringSet, w: Beamformer) -> FisherInfo:
    """Fisher information of the echo model under beamformer w."""
    _check_dims(scene, w)
    if scene.n_targets < 1:
        raise ValueError("scene has no targets")
    return fim_from_covariance(steering, w.covariance, scene.noise_radar, scene.slots)


def _spd_inverse(f: np.ndarray, jitter: Optional[float]) -> np.ndarray:
    """Inverse of an SPD matrix via Cholesky, with jitter fallback."""
    eye = np.eye(f.shape[0])
    try:
        factor = scipy.linalg.cho_factor(f, lower=True)
        return scipy.linalg.cho_solve(factor, eye)
    except scipy.linalg.LinAlgError:
        pass
    if jitter is None:
        jitter = 1e-10 * np.trace(f) / f.shape[0]
    try:
        factor = scipy.linalg.cho_factor(f + jitter * eye, lower=True)
        return scipy.linalg.cho_solve(factor, eye)
    except scipy.linalg.LinAlgError as exc:
        raise SingularFisherError(
            "Fisher matrix is singular even with jitter; target geometry is unidentifiable"
        ) from exc


def crlb_trace(fi: FisherInfo, jitter: Optional[float] = None) -> float:
    """Trace of the inverse Fisher matrix (sum of the parameter CRLBs).

    Jitter is added only when the plain SPD factorization fails; the default
    amount is 1e-10 tr(F)/(4M).
    """
    return float(np.trace(_spd_inverse(fi.matrix, jitter)))


def inverse_fisher(fi: FisherInfo, jitter: Optional[float] = None) -> np.ndarray:
    """Dense inverse of the Fisher matrix (SPD factorization, jitter fallback)."""
    return _spd_inverse(fi.matrix, jitter)


def objective(scene: Scene, steering: SteeringSet, w: Beamformer, weights: Weights) -> float:
    """Weighted tradeoff value: comm * sum rate - sense * CRLB trace."""
    value = 0.0
    if weights.comm > 0:
        value += weights.comm * sum_rate(scene, w)
    if weights.sense > 0:
        value -= weights.sense * crlb_trace(fim(scene, steering, w))
    return float(value)
