"""Truncated cylindrical Wiener noise and Hilbert-Schmidt coefficients.

Brownian increments come from a counter-based generator (Philox) keyed by
(seed, trajectory, mode), so any increment can be regenerated without
replaying other trajectories or modes, and extending M or K never changes
the values already drawn.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .spectral import EigenbasisSpec, SpectralDomainError, SpectralVector

__all__ = [
    "GENERATOR_ID",
    "NoisePath",
    "HSColumns",
    "sample_path",
    "sample_increments",
    "coarsen_path",
    "hs_norm",
    "hs_norms",
    "ito_increment",
    "u0_norm",
    "u0_weights",
    "mollify_path",
    "u0_sup_distance",
    "regenerate",
]

GENERATOR_ID = "numpy-philox4x64-seedseq-v1"


def _stream(seed: int, trajectory: int, mode: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(
        np.random.SeedSequence([int(seed) & (2**64 - 1), int(trajectory), int(mode)])))


def sample_increments(seed: int, K: int, M: int, dt: float, trajectory_ids=(0,)) -> np.ndarray:
    """Increments of shape (len(trajectory_ids), K, M), each ~ Normal(0, dt)."""
    if K < 1 or M < 1:
        raise SpectralDomainError(f"need K, M >= 1, got K={K}, M={M}")
    if not dt > 0:
        raise SpectralDomainError(f"dt must be positive, got {dt}")
    ids = list(trajectory_ids)
    out = np.empty((len(ids), K, M))
    sq = math.sqrt(dt)
    for a, tr in enumerate(ids):
        for k in range(K):
            out[a, k] = _stream(seed, tr, k).standard_normal(M)
    out *= sq
    return out


@dataclass(frozen=True, eq=False)
class NoisePath:
    K: int
    M: int
    dt: float
    increments: np.ndarray
    seed: int
    trajectory_id: int = 0
    generator_id: str = GENERATOR_ID
    derivation: tuple = field(default=())

    def __post_init__(self):
        inc = np.asarray(self.increments, dtype=np.float64)
        if inc.shape != (self.K, self.M):
            raise SpectralDomainError(f"increments shape {inc.shape} != {(self.K, self.M)}")
        if not np.all(np.isfinite(inc)):
            raise SpectralDomainError("non-finite increments")
        inc.setflags(write=False)
        object.__setattr__(self, "increments", inc)

    @property
    def T(self) -> float:
        return self.M * self.dt

    def cumulative(self) -> np.ndarray:
        """W(t_m) for m = 0..M, shape (K, M + 1), with W(0) = 0."""
        out = np.zeros((self.K, self.M + 1))
        np.cumsum(self.increments, axis=1, out=out[:, 1:])
        return out

    def sidecar(self) -> dict:
        return {"seed": int(self.seed), "trajectory_id": int(self.trajectory_id),
                "K": self.K, "M": self.M, "dt": self.dt, "generator_id": self.generator_id,
                "derivation": list(self.derivation)}

    def regenerate(self) -> "NoisePath":
        return regenerate(self.sidecar())

    def save(self, prefix) -> None:
        from .io import write_array

        prefix = Path(prefix)
        write_array(prefix.with_suffix(".bin"), self.increments)
        prefix.with_suffix(".json").write_text(json.dumps(self.sidecar(), indent=2))


def sample_path(seed: int, K: int, M: int, dt: float, trajectory_id: int = 0) -> NoisePath:
    inc = sample_increments(seed, K, M, dt, (trajectory_id,))[0]
    return NoisePath(K, M, float(dt), inc, int(seed), int(trajectory_id))


def coarsen_path(path: NoisePath, factor: int = 2) -> NoisePath:
    """Sum ``factor`` adjacent increments: the same Brownian path on a coarser grid."""
    if path.M % factor:
        raise SpectralDomainError(f"M={path.M} not divisible by {factor}")
    inc = path.increments.reshape(path.K, path.M // factor, factor).sum(axis=2)
    return NoisePath(path.K, path.M // factor, path.dt * factor, inc, path.seed,
                     path.trajectory_id, path.generator_id,
                     path.derivation + (("coarsen", factor),))


def regenerate(sidecar: dict) -> NoisePath:
    if sidecar.get("generator_id", GENERATOR_ID) != GENERATOR_ID:
        raise ValueError(f"unknown generator {sidecar['generator_id']!r}")
    steps = [tuple(s) for s in sidecar.get("derivation", [])]
    factor = 1
    for name, arg in steps:
        if name == "coarsen":
            factor *= int(arg)
    dt0 = sidecar["dt"] / factor
    path = sample_path(sidecar["seed"], sidecar["K"], sidecar["M"] * factor, dt0,
                       sidecar.get("trajectory_id", 0))
    for name, arg in steps:
        path = coarsen_path(path, int(arg)) if name == "coarsen" else mollify_path(path, int(arg))
    return path


@dataclass(frozen=True, eq=False)
class HSColumns:
    """Columns sigma(U) e_k, k = 1..K, stored as a (K, n) coefficient array."""

    columns: np.ndarray
    basis: EigenbasisSpec

    def __post_init__(self):
        cols = np.atleast_2d(np.asarray(self.columns, dtype=np.float64))
        if cols.shape[-1] > self.basis.dim_max:
            raise SpectralDomainError("columns longer than the basis")
        object.__setattr__(self, "columns", cols)

    @classmethod
    def from_vectors(cls, vectors) -> "HSColumns":
        vectors = list(vectors)
        if not vectors:
            raise SpectralDomainError("need at least one column")
        basis = vectors[0].basis
        if any(v.basis != basis for v in vectors):
            raise SpectralDomainError("columns live on different bases")
        n = max(len(v) for v in vectors)
        return cls(np.array([v.padded(n).coeffs for v in vectors]), basis)

    @property
    def K(self) -> int:
        return self.columns.shape[0]

    def column(self, k: int) -> SpectralVector:
        return SpectralVector(self.columns[k - 1], self.basis)


def hs_norms(cols: np.ndarray, basis: EigenbasisSpec, alpha: float) -> np.ndarray:
    """Batched Hilbert-Schmidt norms of (..., K, n) column arrays into D(A^alpha)."""
    w = basis.weights(2 * alpha, cols.shape[-1])
    return np.sqrt(np.sum(w * cols * cols, axis=(-2, -1)))


def hs_norm(cols: HSColumns, alpha: float) -> float:
    """(sum_k |sigma_k|_alpha^2)^(1/2)."""
    return float(hs_norms(cols.columns, cols.basis, alpha))


def ito_increment(cols, dW) -> SpectralVector | np.ndarray:
    """sum_k sigma_k dW_k; HSColumns in gives a SpectralVector, arrays stay arrays."""
    if isinstance(cols, HSColumns):
        dW = np.asarray(dW, dtype=np.float64)
        if dW.shape != (cols.K,):
            raise SpectralDomainError(f"need {cols.K} increments, got shape {dW.shape}")
        return SpectralVector(dW @ cols.columns, cols.basis)
    cols = np.asarray(cols, dtype=np.float64)
    dW = np.asarray(dW, dtype=np.float64)
    if dW.shape[-1] != cols.shape[-2]:
        raise SpectralDomainError(f"need {cols.shape[-2]} increments, got {dW.shape[-1]}")
    return np.einsum("...kn,...k->...n", cols, dW)


def u0_weights(K: int) -> np.ndarray:
    k = np.arange(1, K + 1, dtype=np.float64)
    return 1.0 / (k * k)


def u0_norm(path: NoisePath, t_index: int) -> float:
    """|W(t)|_{U0} = (sum_k W_k(t)^2 / k^2)^(1/2) at t = t_index * dt."""
    if not 0 <= t_index <= path.M:
        raise SpectralDomainError(f"t_index {t_index} outside 0..{path.M}")
    w = path.increments[:, :t_index].sum(axis=1)
    return math.sqrt(float(np.sum(u0_weights(path.K) * w * w)))


def u0_sup_distance(a: NoisePath, b: NoisePath) -> float:
    """sup_t |W_a(t) - W_b(t)|_{U0} over the shared grid."""
    d = a.cumulative() - b.cumulative()
    return float(np.sqrt(np.max(np.sum(u0_weights(a.K)[:, None] * d * d, axis=0))))


def mollify_path(path: NoisePath, level: int) -> NoisePath:
    """Piecewise-linear interpolation of W through 2**level + 1 equispaced nodes,
    re-differenced onto the original grid. Levels with 2**level >= M return
    the path unchanged."""
    level = int(level)
    if level < 0:
        raise SpectralDomainError("level must be >= 0")
    if 2 ** level >= path.M:
        return path
    W = path.cumulative()
    nodes = np.unique(np.round(np.linspace(0, path.M, 2 ** level + 1)).astype(int))
    idx = np.arange(path.M + 1)
    Wm = np.array([np.interp(idx, nodes, W[k, nodes]) for k in range(path.K)])
    inc = np.diff(Wm, axis=1)
    return NoisePath(path.K, path.M, path.dt, inc, path.seed, path.trajectory_id,
                     path.generator_id, path.derivation + (("mollify", level),))
