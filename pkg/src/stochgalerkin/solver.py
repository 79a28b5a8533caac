"""Time integration of the cutoff Galerkin system

    dU + [AU + theta(||U - U*||) P_n B(U) + P_n F(t, U)] dt = P_n sigma(t, U) dW,

where U* = exp(-tA) P_n U0 is evaluated exactly. All integrands (including
the cutoff argument) are taken at the left end of each step, matching the
Ito convention. Trajectories are integrated in batches; every per-trajectory
operation is row-wise, so a trajectory's result does not depend on which
batch it was run in.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Optional, Sequence

import numpy as np

from .model_api import AbstractModel, CutoffSpec, kappa_max, theta_array
from .noise import NoisePath
from .spectral import SpectralDomainError, SpectralVector

__all__ = [
    "Scheme",
    "SolverConfig",
    "InadmissibleCutoff",
    "NumericalBlowupError",
    "TrajectoryRecord",
    "BatchRecord",
    "step",
    "run_aux_linear",
    "run_truncated",
    "run_batch",
    "detect_tau",
    "detect_announce",
]

DEFAULT_LEVELS = (1.0, 2.0, 4.0, 8.0, 16.0)


class Scheme(str, Enum):
    EXP_EULER = "exp_euler"
    SEMI_IMPLICIT_EULER = "semi_implicit_euler"


class InadmissibleCutoff(ValueError):
    """kappa exceeds 1 / (64 c0)."""


class NumericalBlowupError(FloatingPointError):
    """A state became non-finite; ``partial`` holds the record up to ``last_valid``."""

    def __init__(self, message, last_valid, partial=None):
        super().__init__(message)
        self.last_valid = last_valid
        self.partial = partial


@dataclass(frozen=True)
class SolverConfig:
    n: int
    dt: float
    T: float
    cutoff: CutoffSpec
    K: int
    scheme: Scheme = Scheme.EXP_EULER
    record_stride: int = 1
    p_list: tuple = (2, 4, 8)
    announce_levels: tuple = DEFAULT_LEVELS
    c0: Optional[float] = None
    force_theta_one: bool = False
    drift_order: str = "joint"

    def __post_init__(self):
        object.__setattr__(self, "scheme", Scheme(self.scheme))
        if not (self.dt > 0 and self.T > 0):
            raise SpectralDomainError("dt and T must be positive")
        if self.dt > self.T:
            raise SpectralDomainError(f"dt={self.dt} exceeds T={self.T}")
        steps = self.T / self.dt
        if abs(steps - round(steps)) > 1e-9 * steps:
            raise SpectralDomainError("T must be an integer multiple of dt")
        if self.n < 1 or self.K < 1 or self.record_stride < 1:
            raise SpectralDomainError("n, K and record_stride must be positive")
        if self.drift_order not in ("joint", "split"):
            raise ValueError("drift_order must be 'joint' or 'split'")
        if self.c0 is not None and self.c0 > 0 and self.cutoff.kappa > kappa_max(self.c0):
            raise InadmissibleCutoff(
                f"kappa={self.cutoff.kappa} exceeds 1/(64 c0)={kappa_max(self.c0)}")

    @property
    def M(self) -> int:
        return int(round(self.T / self.dt))

    def with_(self, **kw) -> "SolverConfig":
        return replace(self, **kw)

    def to_dict(self) -> dict:
        return {"n": self.n, "dt": self.dt, "T": self.T, "K": self.K,
                "scheme": self.scheme.value, "record_stride": self.record_stride,
                "kappa": self.cutoff.kappa, "transition": self.cutoff.transition.value,
                "p_list": list(self.p_list), "announce_levels": list(self.announce_levels),
                "c0": self.c0, "force_theta_one": self.force_theta_one,
                "drift_order": self.drift_order}


@dataclass
class TrajectoryRecord:
    """One trajectory. Per-step arrays have length M + 1 (index m is t = m dt);
    ``states`` and ``noise_integral`` are kept every ``record_stride`` steps
    (always including the last step) at the indices ``state_index``."""

    times: np.ndarray
    state_index: np.ndarray
    states: np.ndarray
    noise_integral: np.ndarray
    v_norm: np.ndarray
    da_norm: np.ndarray
    dist_to_ustar: np.ndarray
    theta_value: np.ndarray
    energy_integral: np.ndarray
    blowup_integral: np.ndarray
    moment_integrals: dict
    kappa: float
    tau_index: Optional[int] = None
    announce_indices: dict = field(default_factory=dict)

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0]) if len(self.times) > 1 else 0.0

    @property
    def final_state(self) -> np.ndarray:
        return self.states[-1]

    def sup_v_moment(self, p) -> float:
        return float(np.max(self.v_norm) ** p)

    def csv_rows(self):
        for m in range(len(self.times)):
            yield (float(self.times[m]), float(self.v_norm[m]), float(self.da_norm[m]),
                   float(self.dist_to_ustar[m]), float(self.theta_value[m]),
                   float(self.energy_integral[m]), float(self.blowup_integral[m]))

    CSV_HEADER = ("t", "v_norm", "da_norm", "dist_to_ustar", "theta",
                  "energy_integral", "blowup_integral")


@dataclass
class BatchRecord:
    """Records of a batch of trajectories stacked along axis 0."""

    times: np.ndarray
    state_index: np.ndarray
    states: np.ndarray
    noise_integral: np.ndarray
    v_norm: np.ndarray
    da_norm: np.ndarray
    dist_to_ustar: np.ndarray
    theta_value: np.ndarray
    energy_integral: np.ndarray
    blowup_integral: np.ndarray
    moment_integrals: dict
    kappa: float
    levels: tuple = DEFAULT_LEVELS

    def __len__(self):
        return self.states.shape[0]

    def trajectory(self, i: int) -> TrajectoryRecord:
        rec = TrajectoryRecord(
            self.times, self.state_index, self.states[i], self.noise_integral[i],
            self.v_norm[i], self.da_norm[i], self.dist_to_ustar[i], self.theta_value[i],
            self.energy_integral[i], self.blowup_integral[i],
            {p: v[i] for p, v in self.moment_integrals.items()}, self.kappa)
        rec.tau_index = detect_tau(rec, self.kappa)
        rec.announce_indices = detect_announce(rec, self.levels)
        return rec

    def tau_indices(self) -> list:
        return [detect_tau(self.trajectory(i), self.kappa) for i in range(len(self))]


def _as_array(U, n):
    if isinstance(U, SpectralVector):
        U = U.padded(n).coeffs
    U = np.asarray(U, dtype=np.float64)
    if U.shape[-1] != n:
        if U.shape[-1] > n:
            U = U[..., :n]
        else:
            pad = np.zeros(U.shape[:-1] + (n,))
            pad[..., : U.shape[-1]] = U
            U = pad
    return U


def _propagator(model, config):
    lam = model.basis.eigenvalues[: config.n]
    if config.scheme is Scheme.EXP_EULER:
        return np.exp(-config.dt * lam), lam
    return 1.0 / (1.0 + config.dt * lam), lam


def _drift(model, U, t, theta, config):
    b = model.B(U, U)
    f = model.F(t, U)
    dt = config.dt
    if config.drift_order == "split":
        return (U - dt * (theta[..., None] * b)) - dt * f
    return U - dt * (theta[..., None] * b + f)


def step(model: AbstractModel, state, ustar_state, dW_slice, config: SolverConfig,
         t: float = 0.0):
    """One step of the chosen scheme; returns the next state (same type as input)."""
    n = config.n
    wrap = isinstance(state, SpectralVector)
    U = _as_array(state, n)
    Us = _as_array(ustar_state, n)
    lam = model.basis.eigenvalues[:n]
    dist = np.sqrt(np.sum(lam * (U - Us) ** 2, axis=-1))
    theta = np.ones_like(dist) if config.force_theta_one else theta_array(config.cutoff, dist)
    prop, _ = _propagator(model, config)
    cols = model.sigma(t, U, config.K)
    noise = np.einsum("...kn,...k->...n", cols, np.asarray(dW_slice, float))
    out = prop * (_drift(model, U, t, np.asarray(theta), config) + noise)
    if not np.all(np.isfinite(out)):
        raise NumericalBlowupError("non-finite state after one step", last_valid=0)
    return SpectralVector(out, state.basis) if wrap else out


def run_batch(model: AbstractModel, U0, increments, config: SolverConfig) -> BatchRecord:
    """Integrate a batch: U0 has shape (B, n) (or (n,)), increments (B, K, M)."""
    n, dt, M = config.n, config.dt, config.M
    if n > model.declared_dim:
        raise SpectralDomainError(f"n={n} exceeds the model dimension {model.declared_dim}")
    dW = np.asarray(increments, dtype=np.float64)
    if dW.ndim == 2:
        dW = dW[None]
    Bsz = dW.shape[0]
    if dW.shape[1:] != (config.K, M):
        raise SpectralDomainError(f"noise shape {dW.shape[1:]} != (K={config.K}, M={M})")
    U = np.array(np.broadcast_to(_as_array(U0, n), (Bsz, n)))
    if not np.all(np.isfinite(U)):
        raise SpectralDomainError("initial data must be finite")
    ustar0 = U.copy()
    prop, lam = _propagator(model, config)
    lam2 = lam * lam

    stride = config.record_stride
    state_index = np.unique(np.r_[np.arange(0, M + 1, stride), M])
    slot = {int(m): i for i, m in enumerate(state_index)}
    R = len(state_index)
    states = np.empty((Bsz, R, n))
    noise_int = np.empty((Bsz, R, n))
    v_norm = np.empty((Bsz, M + 1))
    da_norm = np.empty((Bsz, M + 1))
    dist = np.empty((Bsz, M + 1))
    theta_v = np.empty((Bsz, M + 1))
    energy = np.zeros((Bsz, M + 1))
    blow = np.zeros((Bsz, M + 1))
    p_list = tuple(config.p_list)
    moments = {p: np.zeros((Bsz, M + 1)) for p in p_list}
    Mint = np.zeros((Bsz, n))

    def partial(upto):
        return BatchRecord(np.arange(upto + 1) * dt, state_index[state_index <= upto],
                           states[:, : int(np.sum(state_index <= upto))],
                           noise_int[:, : int(np.sum(state_index <= upto))],
                           v_norm[:, : upto + 1], da_norm[:, : upto + 1], dist[:, : upto + 1],
                           theta_v[:, : upto + 1], energy[:, : upto + 1], blow[:, : upto + 1],
                           {p: v[:, : upto + 1] for p, v in moments.items()},
                           config.cutoff.kappa, tuple(config.announce_levels))

    for m in range(M + 1):
        t = m * dt
        ustar = np.exp(-t * lam) * ustar0
        vn2 = np.sum(lam * U * U, axis=-1)
        an2 = np.sum(lam2 * U * U, axis=-1)
        v_norm[:, m] = np.sqrt(vn2)
        da_norm[:, m] = np.sqrt(an2)
        d = np.sqrt(np.sum(lam * (U - ustar) ** 2, axis=-1))
        dist[:, m] = d
        th = np.ones(Bsz) if config.force_theta_one else theta_array(config.cutoff, d)
        theta_v[:, m] = th
        if m in slot:
            states[:, slot[m]] = U
            noise_int[:, slot[m]] = Mint
        if m == M:
            break
        energy[:, m + 1] = energy[:, m] + an2 * dt
        blow[:, m + 1] = blow[:, m] + vn2 * an2 * dt
        for p in p_list:
            moments[p][:, m + 1] = moments[p][:, m] + an2 * vn2 ** ((p - 2) / 2) * dt
        cols = model.sigma(t, U, config.K)
        dM = np.einsum("bkn,bk->bn", cols, dW[:, :, m])
        Mint = Mint + dM
        U = prop * (_drift(model, U, t, th, config) + dM)
        if not np.all(np.isfinite(U)):
            raise NumericalBlowupError(f"non-finite state at step {m + 1}", last_valid=m,
                                       partial=partial(m))
    return partial(M)


def run_truncated(model: AbstractModel, U0, noise: NoisePath, config: SolverConfig) -> TrajectoryRecord:
    """Single trajectory of the cutoff system driven by ``noise``."""
    if noise.dt != config.dt and not math.isclose(noise.dt, config.dt, rel_tol=1e-12):
        raise SpectralDomainError(f"noise dt {noise.dt} != solver dt {config.dt}")
    try:
        batch = run_batch(model, U0, noise.increments[None], config)
    except NumericalBlowupError as err:
        if err.partial is not None:
            err.partial = err.partial.trajectory(0)
        raise
    return batch.trajectory(0)


def run_aux_linear(model: AbstractModel, U0, config: SolverConfig) -> TrajectoryRecord:
    """U*(t) = exp(-tA) P_n U0 evaluated exactly on the grid."""
    n, M, dt = config.n, config.M, config.dt
    lam = model.basis.eigenvalues[:n]
    u0 = _as_array(U0, n)
    times = np.arange(M + 1) * dt
    traj = np.exp(-np.outer(times, lam)) * u0
    vn2 = np.sum(lam * traj * traj, axis=-1)
    an2 = np.sum(lam * lam * traj * traj, axis=-1)
    energy = np.r_[0.0, np.cumsum(an2[:-1] * dt)]
    blow = np.r_[0.0, np.cumsum(vn2[:-1] * an2[:-1] * dt)]
    moments = {p: np.r_[0.0, np.cumsum(an2[:-1] * vn2[:-1] ** ((p - 2) / 2) * dt)]
               for p in config.p_list}
    idx = np.unique(np.r_[np.arange(0, M + 1, config.record_stride), M])
    rec = TrajectoryRecord(times, idx, traj[idx], np.zeros((len(idx), n)), np.sqrt(vn2),
                           np.sqrt(an2), np.zeros(M + 1), np.ones(M + 1), energy, blow,
                           moments, config.cutoff.kappa)
    rec.announce_indices = detect_announce(rec, config.announce_levels)
    return rec


def detect_tau(record: TrajectoryRecord, kappa: float) -> Optional[int]:
    """First grid index with ||U - U*|| >= kappa, or None."""
    hit = np.nonzero(np.asarray(record.dist_to_ustar) >= kappa)[0]
    return int(hit[0]) if len(hit) else None


def detect_announce(record: TrajectoryRecord, levels: Sequence[float]) -> dict:
    """First index where sup_{s<=t} ||U||^2 + int_0^t |AU|^2 reaches each level."""
    q = np.maximum.accumulate(np.asarray(record.v_norm) ** 2) + np.asarray(record.energy_integral)
    out = {}
    for level in levels:
        hit = np.nonzero(q >= level)[0]
        out[float(level)] = int(hit[0]) if len(hit) else None
    return out
