"""A finite-support triad model whose cancellation is exact by construction.

B_k(U, V) = sum_{i,j} gamma_{ijk} U_i V_j with gamma_{ijk} = -gamma_{ikj}.
Triads couple (i, j, i + j); each one contributes gamma_{i,j,i+j} = a and the
mirrored gamma_{i,i+j,j} = -a, so <B(U,V),V> vanishes identically.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sp

from ..model_api import AbstractModel
from ..spectral import EigenbasisSpec, squares_basis

__all__ = ["SyntheticSpec", "SyntheticModel", "build_structure_constants", "synthetic_B"]


@dataclass(frozen=True)
class SyntheticSpec:
    dim: int = 64
    gamma_scale: float = 1.0
    decay_exponent: float = 0.0
    random_amplitudes: bool = True
    seed: int = 0
    # forcing F(t, U) = f0 Phi_1 + coupling * R U, R skew tridiagonal
    forcing: float = 0.0
    coupling: float = 0.5
    # noise column k: additive * k^-noise_decay Phi_k + multiplicative * k^-noise_decay U
    noise_additive: float = 0.02
    noise_multiplicative: float = 0.0
    noise_decay: float = 3.0
    noise_modes: Optional[int] = None
    explicit_constants: tuple = field(default=())

    @classmethod
    def from_dict(cls, d: dict) -> "SyntheticSpec":
        d = dict(d)
        if "explicit_constants" in d:
            d["explicit_constants"] = tuple(tuple(x) for x in d["explicit_constants"])
        return cls(**d)


def build_structure_constants(spec: SyntheticSpec) -> dict:
    """{(i, j, k): gamma} with 1-based indices and exact antisymmetry in (j, k)."""
    gamma = {}
    if spec.explicit_constants:
        for i, j, k, val in spec.explicit_constants:
            gamma[(int(i), int(j), int(k))] = float(val)
        for (i, j, k), val in list(gamma.items()):
            if gamma.get((i, k, j), -val) != -val:
                raise ValueError(f"constants not antisymmetric at {(i, j, k)}")
            gamma[(i, k, j)] = -val
        return gamma
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([int(spec.seed), 7])))
    d = spec.dim
    for i in range(1, d + 1):
        for j in range(1, d + 1 - i):
            k = i + j
            amp = spec.gamma_scale * float(i) ** (-spec.decay_exponent)
            if spec.random_amplitudes:
                amp *= rng.uniform(0.5, 1.5) * (1.0 if rng.random() < 0.5 else -1.0)
            gamma[(i, j, k)] = amp
            gamma[(i, k, j)] = -amp
    return gamma


class SyntheticModel(AbstractModel):
    label = "synthetic"

    def __init__(self, spec: SyntheticSpec = SyntheticSpec(), basis: Optional[EigenbasisSpec] = None):
        basis = squares_basis(spec.dim) if basis is None else basis
        K = spec.noise_modes if spec.noise_modes is not None else spec.dim
        super().__init__(basis, K)
        self.spec = spec
        gamma = build_structure_constants(spec)
        keys = sorted(gamma)
        self._I = np.array([k[0] for k in keys], dtype=np.int64) - 1
        self._J = np.array([k[1] for k in keys], dtype=np.int64) - 1
        self._K = np.array([k[2] for k in keys], dtype=np.int64) - 1
        self._G = np.array([gamma[k] for k in keys])
        self._cache = {}
        kk = np.arange(1, spec.dim + 1, dtype=np.float64)
        self._noise_amp = kk ** (-spec.noise_decay)
        self._r = kk[:-1] ** (-1.0)

    def _operator(self, n):
        op = self._cache.get(n)
        if op is None:
            keep = (self._I < n) & (self._J < n) & (self._K < n)
            idx = np.nonzero(keep)[0]
            scatter = sp.csr_matrix((self._G[idx], (np.arange(len(idx)), self._K[idx])),
                                    shape=(len(idx), n))
            op = (self._I[idx], self._J[idx], scatter)
            self._cache[n] = op
        return op

    def B(self, u, v):
        u, v = np.broadcast_arrays(np.asarray(u, float), np.asarray(v, float))
        n = u.shape[-1]
        I, J, scatter = self._operator(n)
        lead = u.shape[:-1]
        prod = (u[..., I] * v[..., J]).reshape(-1, len(I))
        out = np.asarray(prod @ scatter) if len(I) else np.zeros((prod.shape[0], n))
        return out.reshape(lead + (n,))

    def F(self, t, u):
        u = np.asarray(u, float)
        n = u.shape[-1]
        out = np.zeros_like(u)
        if self.spec.coupling and n > 1:
            r = self.spec.coupling * self._r[: n - 1]
            out[..., :-1] += r * u[..., 1:]
            out[..., 1:] -= r * u[..., :-1]
        if self.spec.forcing:
            out[..., 0] += self.spec.forcing
        return out

    def sigma(self, t, u, K=None):
        u = np.asarray(u, float)
        K = self.noise_modes if K is None else K
        n = u.shape[-1]
        amp = np.zeros(K)
        m = min(K, len(self._noise_amp))
        amp[:m] = self._noise_amp[:m]
        cols = np.zeros(u.shape[:-1] + (K, n))
        if self.spec.noise_multiplicative:
            cols += (self.spec.noise_multiplicative * amp)[:, None] * u[..., None, :]
        if self.spec.noise_additive:
            d = min(K, n)
            idx = np.arange(d)
            cols[..., idx, idx] += self.spec.noise_additive * amp[:d]
        return cols

    def describe(self):
        d = super().describe()
        d["spec"] = {k: v for k, v in self.spec.__dict__.items()}
        return d


def synthetic_B(spec: SyntheticSpec, U, V):
    """B(U, V) for coefficient arrays of equal length."""
    U, V = np.asarray(U, float), np.asarray(V, float)
    if U.shape[-1] != V.shape[-1]:
        raise ValueError(f"dimension mismatch: {U.shape[-1]} vs {V.shape[-1]}")
    if U.shape[-1] > spec.dim:
        raise ValueError(f"vectors longer than model dimension {spec.dim}")
    return SyntheticModel(spec).B(U, V)
