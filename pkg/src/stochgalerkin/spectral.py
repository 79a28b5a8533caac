"""Diagonal spectral calculus for a positive self-adjoint operator A.

States are coefficient vectors over the eigenbasis {Phi_k} of A, so the
spaces D(A^alpha) (H at alpha = 0, V at 1/2, D(A) at 1, V' at -1/2) share a
single representation and differ only in the weights lambda_k^(2 alpha).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "InvalidStateError",
    "SpectralDomainError",
    "EigenbasisSpec",
    "SpectralVector",
    "squares_basis",
    "frac_norm",
    "frac_norms",
    "project_low",
    "project_high",
    "apply_A_frac",
    "heat_semigroup",
    "inner",
    "poincare_constant",
    "tail_poincare_constant",
]

#: Above this many modes norms use compensated summation.
COMPENSATED_THRESHOLD = 1000


class InvalidStateError(ValueError):
    """A state has non-finite coefficients."""


class SpectralDomainError(ValueError):
    """An argument lies outside the domain of a spectral operation."""


@dataclass(frozen=True, eq=False)
class EigenbasisSpec:
    """Eigenvalues lambda_1 <= lambda_2 <= ... of A, truncated at ``dim_max``."""

    eigenvalues: np.ndarray
    dim_max: int = field(default=-1)

    def __post_init__(self):
        lam = np.array(self.eigenvalues, dtype=np.float64).ravel()
        dim_max = len(lam) if self.dim_max == -1 else int(self.dim_max)
        if dim_max < 1:
            raise SpectralDomainError("dim_max must be a positive integer")
        if len(lam) < dim_max:
            raise SpectralDomainError(
                f"need at least dim_max={dim_max} eigenvalues, got {len(lam)}")
        if not np.all(np.isfinite(lam)) or np.any(lam <= 0):
            raise SpectralDomainError("eigenvalues must be finite and strictly positive")
        if np.any(np.diff(lam) < 0):
            raise SpectralDomainError("eigenvalues must be nondecreasing")
        lam = lam[:dim_max]
        lam.setflags(write=False)
        object.__setattr__(self, "eigenvalues", lam)
        object.__setattr__(self, "dim_max", dim_max)

    def __eq__(self, other):
        if not isinstance(other, EigenbasisSpec):
            return NotImplemented
        return self.dim_max == other.dim_max and np.array_equal(
            self.eigenvalues, other.eigenvalues)

    def __hash__(self):
        return hash((self.dim_max, self.eigenvalues.tobytes()))

    def weights(self, alpha: float, n: int | None = None) -> np.ndarray:
        """lambda_k^alpha for the first ``n`` modes."""
        lam = self.eigenvalues if n is None else self.eigenvalues[:n]
        if alpha == 0:
            return np.ones_like(lam)
        return lam ** alpha

    def zeros(self, n: int | None = None) -> "SpectralVector":
        return SpectralVector(np.zeros(self.dim_max if n is None else n), self)

    def unit(self, k: int, scale: float = 1.0) -> "SpectralVector":
        """``scale * Phi_k`` (1-based mode index)."""
        if not 1 <= k <= self.dim_max:
            raise SpectralDomainError(f"mode {k} outside 1..{self.dim_max}")
        c = np.zeros(self.dim_max)
        c[k - 1] = scale
        return SpectralVector(c, self)


def squares_basis(dim_max: int, scale: float = 1.0) -> EigenbasisSpec:
    """Synthetic layout lambda_k = scale * k**2."""
    k = np.arange(1, dim_max + 1, dtype=np.float64)
    return EigenbasisSpec(scale * k * k, dim_max)


@dataclass(frozen=True, eq=False)
class SpectralVector:
    """Coefficients U_k = (U, Phi_k) of a state, k = 1..len(coeffs)."""

    coeffs: np.ndarray
    basis: EigenbasisSpec

    def __post_init__(self):
        c = np.array(self.coeffs, dtype=np.float64).ravel()
        if len(c) > self.basis.dim_max:
            raise SpectralDomainError(
                f"{len(c)} coefficients exceed dim_max={self.basis.dim_max}")
        if not np.all(np.isfinite(c)):
            raise InvalidStateError("state has non-finite coefficients")
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    def __len__(self):
        return len(self.coeffs)

    def __eq__(self, other):
        if not isinstance(other, SpectralVector):
            return NotImplemented
        return self.basis == other.basis and np.array_equal(self.coeffs, other.coeffs)

    __hash__ = None

    def _lift(self, other: "SpectralVector"):
        if self.basis != other.basis:
            raise SpectralDomainError("vectors live on different bases")
        n = max(len(self), len(other))
        return _pad(self.coeffs, n), _pad(other.coeffs, n)

    def __add__(self, other):
        a, b = self._lift(other)
        return SpectralVector(a + b, self.basis)

    def __sub__(self, other):
        a, b = self._lift(other)
        return SpectralVector(a - b, self.basis)

    def __mul__(self, scalar):
        return SpectralVector(self.coeffs * float(scalar), self.basis)

    __rmul__ = __mul__

    def __neg__(self):
        return SpectralVector(-self.coeffs, self.basis)

    def padded(self, n: int) -> "SpectralVector":
        """Same state viewed with ``n`` coefficient slots (zero-extended or cut)."""
        return SpectralVector(_pad(self.coeffs, n), self.basis)


def _pad(c: np.ndarray, n: int) -> np.ndarray:
    if len(c) >= n:
        return np.array(c[:n])
    out = np.zeros(n)
    out[: len(c)] = c
    return out


def _check_alpha(alpha: float) -> float:
    alpha = float(alpha)
    if not math.isfinite(alpha) or alpha < -0.5:
        raise SpectralDomainError(f"fractional order must be finite and >= -1/2, got {alpha}")
    return alpha


def _sum_squares(terms: np.ndarray) -> float:
    if terms.shape[-1] > COMPENSATED_THRESHOLD:
        return math.fsum(terms.tolist())
    return float(np.sum(terms))


def frac_norm(U: SpectralVector, alpha: float) -> float:
    """|U|_alpha = (sum_k lambda_k^(2 alpha) U_k^2)^(1/2)."""
    alpha = _check_alpha(alpha)
    c = U.coeffs
    w = U.basis.weights(2 * alpha, len(c))
    total = _sum_squares(w * c * c)
    if not math.isfinite(total):
        raise InvalidStateError("norm overflowed")
    return math.sqrt(total)


def frac_norms(coeffs: np.ndarray, basis: EigenbasisSpec, alpha: float) -> np.ndarray:
    """Batched |.|_alpha over the trailing axis of a raw coefficient array."""
    coeffs = np.asarray(coeffs, dtype=np.float64)
    w = basis.weights(2 * alpha, coeffs.shape[-1])
    return np.sqrt(np.sum(w * coeffs * coeffs, axis=-1))


def inner(U: SpectralVector, V: SpectralVector, alpha: float = 0.0) -> float:
    """(A^alpha U, A^alpha V); the H inner product at alpha = 0."""
    a, b = U._lift(V)
    w = U.basis.weights(2 * _check_alpha(alpha), len(a))
    return float(np.sum(w * a * b))


def _check_level(U: SpectralVector, n: int) -> int:
    if isinstance(n, bool) or int(n) != n:
        raise SpectralDomainError("projection level must be an integer")
    n = int(n)
    if n < 1 or n > U.basis.dim_max:
        raise SpectralDomainError(f"projection level {n} outside 1..{U.basis.dim_max}")
    return n


def project_low(U: SpectralVector, n: int) -> SpectralVector:
    """P_n: keep modes 1..n, zero the rest."""
    n = _check_level(U, n)
    c = np.array(U.coeffs)
    c[n:] = 0.0
    return SpectralVector(c, U.basis)


def project_high(U: SpectralVector, n: int) -> SpectralVector:
    """Q_n = I - P_n."""
    n = _check_level(U, n)
    c = np.array(U.coeffs)
    c[:n] = 0.0
    return SpectralVector(c, U.basis)


def apply_A_frac(U: SpectralVector, alpha: float) -> SpectralVector:
    alpha = float(alpha)
    if not math.isfinite(alpha):
        raise SpectralDomainError("fractional order must be finite")
    if alpha == 0:
        return U
    out = U.basis.weights(alpha, len(U)) * U.coeffs
    if not np.all(np.isfinite(out)):
        raise InvalidStateError("A^alpha overflowed")
    return SpectralVector(out, U.basis)


def heat_semigroup(U0: SpectralVector, t: float) -> SpectralVector:
    """exp(-tA) U0, the exact solution of dU/dt + AU = 0."""
    t = float(t)
    if not t >= 0:
        raise SpectralDomainError(f"time must be nonnegative, got {t}")
    if t == 0:
        return U0
    lam = U0.basis.eigenvalues[: len(U0)]
    return SpectralVector(np.exp(-t * lam) * U0.coeffs, U0.basis)


def poincare_constant(basis: EigenbasisSpec, n: int, alpha1: float, alpha2: float) -> float:
    """lambda_n^(alpha2 - alpha1): |P_n U|_{alpha2} <= this * |P_n U|_{alpha1}."""
    return float(basis.eigenvalues[n - 1] ** (alpha2 - alpha1))


def tail_poincare_constant(basis: EigenbasisSpec, n: int, alpha1: float, alpha2: float,
                           sharp: bool = False) -> float:
    """Constant c with |Q_n U|_{alpha1} <= c |Q_n U|_{alpha2}.

    The default uses lambda_n; ``sharp=True`` uses lambda_{n+1}, which is the
    best constant but only available when n < dim_max.
    """
    idx = n if sharp and n < basis.dim_max else n - 1
    return float(basis.eigenvalues[idx] ** -(alpha2 - alpha1))
