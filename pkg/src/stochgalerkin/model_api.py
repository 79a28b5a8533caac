"""Model contracts: the bilinear/forcing/noise triple, the cutoff and the
sampling verifiers that measure the structural constants of a model.

Every model works on raw coefficient arrays whose trailing axis holds the
first ``n`` eigen-coordinates; leading axes are batch axes. Evaluating a
model at width ``n`` means evaluating the Galerkin-projected operator
(P_n B, P_n F, P_n sigma) restricted to H_n.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

import numpy as np

from .spectral import EigenbasisSpec, SpectralDomainError

__all__ = [
    "Transition",
    "CutoffSpec",
    "theta_eval",
    "theta_array",
    "theta_lipschitz",
    "kappa_max",
    "AbstractModel",
    "FunctionalModel",
    "AssumptionReport",
    "InsufficientSamplesError",
    "sample_state",
    "verify_cancellation",
    "estimate_c0",
    "verify_growth",
    "verify_lipschitz",
    "verify_bilinearity",
    "choose_noise_modes",
    "check_model",
]


class Transition(str, Enum):
    SMOOTH_EXP = "smooth_exp"
    CUBIC_SMOOTHSTEP = "cubic_smoothstep"


@dataclass(frozen=True)
class CutoffSpec:
    kappa: float
    transition: Transition = Transition.SMOOTH_EXP

    def __post_init__(self):
        if not (math.isfinite(self.kappa) and self.kappa > 0):
            raise SpectralDomainError(f"kappa must be positive, got {self.kappa}")
        object.__setattr__(self, "transition", Transition(self.transition))


def _psi(s):
    s = np.asarray(s, dtype=np.float64)
    out = np.zeros_like(s)
    pos = s > 0
    out[pos] = np.exp(-1.0 / s[pos])
    return out


def theta_array(spec: CutoffSpec, x) -> np.ndarray:
    """Vectorised cutoff: 1 on |x| <= kappa, 0 on |x| >= 2 kappa."""
    r = np.abs(np.asarray(x, dtype=np.float64)) / spec.kappa
    out = np.ones_like(r)
    mid = (r > 1.0) & (r < 2.0)
    out[r >= 2.0] = 0.0
    if np.any(mid):
        rm = r[mid]
        if spec.transition is Transition.SMOOTH_EXP:
            a = _psi(2.0 - rm)
            b = _psi(rm - 1.0)
            out[mid] = a / (a + b)
        else:
            s = rm - 1.0
            out[mid] = 1.0 - s * s * (3.0 - 2.0 * s)
    return out


def theta_eval(spec: CutoffSpec, x: float) -> float:
    x = float(x)
    if not math.isfinite(x):
        raise SpectralDomainError("cutoff argument must be finite")
    return float(theta_array(spec, np.array([x]))[0])


def theta_lipschitz(spec: CutoffSpec, points: int = 20001) -> float:
    """Sampled Lipschitz constant of theta (scales like 1/kappa)."""
    x = np.linspace(0.0, 2.5 * spec.kappa, points)
    y = theta_array(spec, x)
    return float(np.max(np.abs(np.diff(y)) / np.diff(x)))


def kappa_max(c0: float) -> float:
    """Largest admissible cutoff radius, 1 / (64 c0)."""
    c0 = float(c0)
    if not (math.isfinite(c0) and c0 > 0):
        raise SpectralDomainError(f"c0 must be positive, got {c0}")
    return 1.0 / (64.0 * c0)


class AbstractModel:
    """dU + (AU + B(U,U) + F(t,U)) dt = sigma(t,U) dW in the eigenbasis of A.

    Subclasses implement ``B``, ``F`` and ``sigma`` on coefficient arrays;
    ``sigma`` returns the Hilbert-Schmidt columns sigma(U) e_k stacked along
    axis -2, shape (..., K, n).
    """

    label = "abstract"

    def __init__(self, basis: EigenbasisSpec, noise_modes: int = 0):
        self.basis = basis
        self.noise_modes = int(noise_modes)

    @property
    def declared_dim(self) -> int:
        return self.basis.dim_max

    def B(self, u: np.ndarray, v: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def F(self, t: float, u: np.ndarray) -> np.ndarray:
        return np.zeros_like(u)

    def sigma(self, t: float, u: np.ndarray, K: Optional[int] = None) -> np.ndarray:
        K = self.noise_modes if K is None else K
        return np.zeros(u.shape[:-1] + (K, u.shape[-1]))

    def describe(self) -> dict:
        return {"label": self.label, "dim_max": self.declared_dim,
                "noise_modes": self.noise_modes}


class FunctionalModel(AbstractModel):
    """Model assembled from plain callables; handy for fixtures."""

    def __init__(self, basis, B=None, F=None, sigma=None, noise_modes=0,
                 label="functional"):
        super().__init__(basis, noise_modes)
        self._B, self._F, self._sigma = B, F, sigma
        self.label = label

    def B(self, u, v):
        if self._B is None:
            return np.zeros(np.broadcast_shapes(u.shape, v.shape))
        return self._B(u, v)

    def F(self, t, u):
        return np.zeros_like(u) if self._F is None else self._F(t, u)

    def sigma(self, t, u, K=None):
        if self._sigma is None:
            return super().sigma(t, u, K)
        cols = self._sigma(t, u)
        return cols if K is None else cols[..., :K, :]


# --------------------------------------------------------------------------
# sampling verifiers


class InsufficientSamplesError(RuntimeError):
    pass


@dataclass
class AssumptionReport:
    """Empirical constants of a model; every value is a sampled lower bound."""

    c0_est: float
    samples: int
    seed: int
    growth_F: Optional[float] = None
    growth_sigma_H: Optional[float] = None
    growth_sigma_V: Optional[float] = None
    growth_sigma_DA: Optional[float] = None
    lip_F: Optional[float] = None
    lip_sigma_H: Optional[float] = None
    lip_sigma_V: Optional[float] = None
    lip_sigma_DA: Optional[float] = None
    cancellation_residual: Optional[float] = None
    extra: dict = field(default_factory=dict)

    FIELDS = ("c0_est", "growth_F", "growth_sigma_H", "growth_sigma_V",
              "growth_sigma_DA", "lip_F", "lip_sigma_H", "lip_sigma_V",
              "lip_sigma_DA", "cancellation_residual", "samples", "seed")

    def __post_init__(self):
        if self.samples < 1:
            raise ValueError("samples must be >= 1")
        for name in self.FIELDS[:-2]:
            val = getattr(self, name)
            if val is not None and not val >= 0:
                raise ValueError(f"{name} must be nonnegative, got {val}")

    def to_dict(self) -> dict:
        d = {name: getattr(self, name) for name in self.FIELDS}
        d["empirical"] = True
        if self.extra:
            d["extra"] = self.extra
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=False)

    @classmethod
    def from_dict(cls, d: dict) -> "AssumptionReport":
        kwargs = {k: d.get(k) for k in cls.FIELDS}
        kwargs["extra"] = d.get("extra", {})
        return cls(**kwargs)


def _sample_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), int(index)])))


def sample_state(basis: EigenbasisSpec, n: int, rng: np.random.Generator,
                 beta: float = 1.0, size: tuple = ()) -> np.ndarray:
    """Gaussian coefficients with standard deviation lambda_k^(-beta)."""
    sd = basis.weights(-beta, n)
    return rng.standard_normal(size + (n,)) * sd


def _sample_block(basis, n, samples, seed, count, beta):
    """``count`` states per sample; sample i depends only on (seed, i)."""
    out = np.empty((count, samples, n))
    for i in range(samples):
        out[:, i, :] = sample_state(basis, n, _sample_rng(seed, i), beta, (count,))
    return out


def _norms(basis, x, alpha):
    w = basis.weights(2 * alpha, x.shape[-1])
    return np.sqrt(np.sum(w * x * x, axis=-1))


def _check_samples(samples):
    if int(samples) < 1:
        raise ValueError("samples must be >= 1")
    return int(samples)


def _chunks(total, size=256):
    for start in range(0, total, size):
        yield slice(start, min(total, start + size))


def verify_cancellation(model: AbstractModel, n: int, samples: int, rng_seed: int,
                        beta: float = 1.0) -> float:
    """max |<B(U,V),V>| / (1 + ||U|| |AV| ||V||) over sampled pairs."""
    samples = _check_samples(samples)
    basis = model.basis
    u, v = _sample_block(basis, n, samples, rng_seed, 2, beta)
    worst = 0.0
    for sl in _chunks(samples):
        b = model.B(u[sl], v[sl])
        num = np.abs(np.sum(b * v[sl], axis=-1))
        den = 1.0 + _norms(basis, u[sl], 0.5) * _norms(basis, v[sl], 1.0) * _norms(basis, v[sl], 0.5)
        worst = max(worst, float(np.max(num / den)))
    return worst


def estimate_c0(model: AbstractModel, n: int, samples: int, rng_seed: int,
                beta: float = 1.0) -> AssumptionReport:
    """Sampled lower bound for c0 in both trilinear bounds on B.

    For each sampled pair (U, U#) the test direction U-flat is optimised
    exactly: the supremum of |<b, W>| / ||W|| is |b|_{-1/2} and of
    |<b, W>| / |W| is |b|, with b = B(U, U#).
    """
    samples = _check_samples(samples)
    basis = model.basis
    u, us = _sample_block(basis, n, samples, rng_seed, 2, beta)
    best = 0.0
    used = 0
    for sl in _chunks(samples):
        b = model.B(u[sl], us[sl])
        nu_v, nu_a = _norms(basis, u[sl], 0.5), _norms(basis, u[sl], 1.0)
        ns_v, ns_a = _norms(basis, us[sl], 0.5), _norms(basis, us[sl], 1.0)
        den2 = nu_v * ns_a
        den3 = np.sqrt(nu_v * nu_a * ns_v * ns_a)
        ok = (den2 > 0) & (den3 > 0)
        used += int(np.count_nonzero(ok))
        if not np.any(ok):
            continue
        r2 = _norms(basis, b[ok], -0.5) / den2[ok]
        r3 = _norms(basis, b[ok], 0.0) / den3[ok]
        best = max(best, float(np.max(r2)), float(np.max(r3)))
    if used == 0:
        raise InsufficientSamplesError("every sample had a zero denominator")
    return AssumptionReport(c0_est=best, samples=samples, seed=int(rng_seed))


_SPACE_ALPHA = {"H": 0.0, "V": 0.5, "DA": 1.0}


def _times(samples, seed, t_max):
    rng = _sample_rng(seed, -1 % (2**63))
    return rng.uniform(0.0, t_max, samples)


def _sigma_norms(model, t, x, K, alpha):
    cols = model.sigma(t, x, K)
    w = model.basis.weights(2 * alpha, cols.shape[-1])
    return np.sqrt(np.sum(w * cols * cols, axis=(-1, -2)))


def verify_growth(model: AbstractModel, cls: str, samples: int, rng_seed: int,
                  n: Optional[int] = None, beta: float = 1.0, t_max: float = 1.0):
    """Empirical Bnd_u constant sup |Psi(t,x)|_Y / (1 + |x|_X).

    ``cls`` is "F_in_Bnd" (V -> H, returns a float) or "sigma_in_Bnd"
    (returns a dict over the pairs H, V, DA).
    """
    samples = _check_samples(samples)
    n = model.declared_dim if n is None else n
    basis = model.basis
    (x,) = _sample_block(basis, n, samples, rng_seed, 1, beta)
    ts = _times(samples, rng_seed, t_max)
    if cls == "F_in_Bnd":
        vals = []
        for i in range(samples):
            f = model.F(ts[i], x[i])
            vals.append(_norms(basis, f, 0.0) / (1.0 + _norms(basis, x[i], 0.5)))
        return float(np.max(vals))
    if cls == "sigma_in_Bnd":
        out = {}
        for space, alpha in _SPACE_ALPHA.items():
            vals = [_sigma_norms(model, ts[i], x[i], model.noise_modes, alpha)
                    / (1.0 + _norms(basis, x[i], alpha)) for i in range(samples)]
            out[space] = float(np.max(vals))
        return out
    raise ValueError(f"unknown growth class {cls!r}")


def verify_lipschitz(model: AbstractModel, cls: str, samples: int, rng_seed: int,
                     n: Optional[int] = None, beta: float = 1.0, t_max: float = 1.0,
                     spaces: tuple = ("V", "H")):
    """Empirical Lip_u constant sup |Psi(t,x) - Psi(t,y)|_Y / |x - y|_X.

    ``spaces`` = (X, Y) applies to F; sigma is always measured at the
    matching pairs H, V, DA."""
    samples = _check_samples(samples)
    n = model.declared_dim if n is None else n
    basis = model.basis
    x, y = _sample_block(basis, n, samples, rng_seed, 2, beta)
    ts = _times(samples, rng_seed, t_max)
    if cls == "F_in_Lip":
        ax, ay = _SPACE_ALPHA[spaces[0]], _SPACE_ALPHA[spaces[1]]
        vals = []
        for i in range(samples):
            d = model.F(ts[i], x[i]) - model.F(ts[i], y[i])
            vals.append(_norms(basis, d, ay) / _norms(basis, x[i] - y[i], ax))
        return float(np.max(vals))
    if cls == "sigma_in_Lip":
        out = {}
        K = model.noise_modes
        for space, alpha in _SPACE_ALPHA.items():
            w = basis.weights(2 * alpha, n)
            vals = []
            for i in range(samples):
                d = model.sigma(ts[i], x[i], K) - model.sigma(ts[i], y[i], K)
                num = math.sqrt(float(np.sum(w * d * d)))
                vals.append(num / _norms(basis, x[i] - y[i], alpha))
            out[space] = float(np.max(vals))
        return out
    raise ValueError(f"unknown Lipschitz class {cls!r}")


def verify_bilinearity(model: AbstractModel, n: int, samples: int, rng_seed: int,
                       beta: float = 1.0) -> float:
    """Largest relative defect of additivity/homogeneity in either slot."""
    basis = model.basis
    u, u2, v = _sample_block(basis, n, samples, rng_seed, 3, beta)
    a = _sample_rng(rng_seed, 2**62).uniform(-2.0, 2.0, (samples, 1))
    worst = 0.0
    for sl in _chunks(samples):
        lhs1 = model.B(a[sl] * u[sl] + u2[sl], v[sl])
        rhs1 = a[sl] * model.B(u[sl], v[sl]) + model.B(u2[sl], v[sl])
        lhs2 = model.B(v[sl], a[sl] * u[sl] + u2[sl])
        rhs2 = a[sl] * model.B(v[sl], u[sl]) + model.B(v[sl], u2[sl])
        for lhs, rhs in ((lhs1, rhs1), (lhs2, rhs2)):
            scale = np.maximum(np.linalg.norm(rhs, axis=-1), np.linalg.norm(lhs, axis=-1))
            scale = np.where(scale > 0, scale, 1.0)
            worst = max(worst, float(np.max(np.linalg.norm(lhs - rhs, axis=-1) / scale)))
    return worst


def choose_noise_modes(model: AbstractModel, k_probe: int, tol: float = 1e-6,
                       samples: int = 64, rng_seed: int = 0, n: Optional[int] = None,
                       beta: float = 1.0) -> int:
    """Smallest K whose Hilbert-Schmidt tail sum_{k>K} |sigma_k|^2 is at most
    ``tol`` of the total, worst case over sampled states."""
    n = model.declared_dim if n is None else n
    (x,) = _sample_block(model.basis, n, samples, rng_seed, 1, beta)
    cols = model.sigma(0.0, x, k_probe)
    col_sq = np.sum(cols * cols, axis=-1)
    total = np.sum(col_sq, axis=-1, keepdims=True)
    total = np.where(total > 0, total, 1.0)
    tail = (total - np.cumsum(col_sq, axis=-1)) / total
    worst = np.max(tail, axis=0)
    ok = np.nonzero(worst <= tol)[0]
    return int(ok[0]) + 1 if len(ok) else k_probe


def check_model(model: AbstractModel, n: Optional[int] = None, samples: int = 1000,
                rng_seed: int = 0, classes=("F_in_Bnd", "sigma_in_Bnd", "F_in_Lip",
                                            "sigma_in_Lip"), beta: float = 1.0) -> AssumptionReport:
    """Run every verifier and collect the constants into one report."""
    n = model.declared_dim if n is None else n
    if samples < 1000:
        warnings.warn(f"c0 estimated from only {samples} samples; kappa_max may be optimistic",
                      stacklevel=2)
    report = estimate_c0(model, n, samples, rng_seed, beta)
    report.cancellation_residual = verify_cancellation(model, n, samples, rng_seed + 1, beta)
    if "F_in_Bnd" in classes:
        report.growth_F = verify_growth(model, "F_in_Bnd", samples, rng_seed + 2, n, beta)
    if "sigma_in_Bnd" in classes:
        g = verify_growth(model, "sigma_in_Bnd", samples, rng_seed + 3, n, beta)
        report.growth_sigma_H, report.growth_sigma_V, report.growth_sigma_DA = g["H"], g["V"], g["DA"]
    if "F_in_Lip" in classes:
        report.lip_F = verify_lipschitz(model, "F_in_Lip", samples, rng_seed + 4, n, beta)
    if "sigma_in_Lip" in classes:
        g = verify_lipschitz(model, "sigma_in_Lip", samples, rng_seed + 5, n, beta)
        report.lip_sigma_H, report.lip_sigma_V, report.lip_sigma_DA = g["H"], g["V"], g["DA"]
    report.extra = {"n": int(n), "beta": beta, "model": model.label}
    return report
