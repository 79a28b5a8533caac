"""Incompressible Navier-Stokes on the 2*pi-periodic square.

The eigenbasis of the Stokes operator nu*(-Delta) on divergence-free,
mean-zero fields is written in real form,

    Phi_{k,c} = c_k grad^perp cos(k.x),   Phi_{k,s} = c_k grad^perp sin(k.x),

with c_k = 1 / (|k| pi sqrt 2) (unit L2 norm) and eigenvalue nu |k|^2, one
pair per wavevector in the upper half plane. Only wavevectors with
max(|kx|, |ky|) < N/3 are retained, so every quadratic product is resolved
exactly on the N x N grid and aliasing never reaches a retained mode.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..model_api import AbstractModel
from ..spectral import EigenbasisSpec

__all__ = ["NS2DSpec", "NS2DModel", "ns2d_B"]


@dataclass(frozen=True)
class NS2DSpec:
    modes_per_axis: int = 32
    viscosity: float = 1.0
    forcing: float = 0.0
    noise_amplitude: float = 0.05
    noise_decay: float = 3.0
    noise_modes: int = 16

    def __post_init__(self):
        if self.modes_per_axis < 4 or self.modes_per_axis % 2:
            raise ValueError("modes_per_axis must be an even integer >= 4")
        if not self.viscosity > 0:
            raise ValueError("viscosity must be positive")

    @property
    def kmax(self) -> int:
        return (self.modes_per_axis - 1) // 3

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


class NS2DModel(AbstractModel):
    label = "ns2d"

    def __init__(self, spec: NS2DSpec = NS2DSpec()):
        self.spec = spec
        N, K = spec.modes_per_axis, spec.kmax
        waves = [(kx, ky) for kx in range(-K, K + 1) for ky in range(0, K + 1)
                 if ky > 0 or kx > 0]
        modes = sorted(((kx * kx + ky * ky, kx, ky, trig) for kx, ky in waves for trig in (0, 1)))
        self.modes = [(kx, ky, trig) for _, kx, ky, trig in modes]
        lam = np.array([spec.viscosity * ksq for ksq, *_ in modes], dtype=np.float64)
        super().__init__(EigenbasisSpec(lam), min(spec.noise_modes, len(lam)))

        index = {m: i for i, m in enumerate(self.modes)}
        self._kx = np.array([kx for kx, ky in waves])
        self._ky = np.array([ky for kx, ky in waves])
        self._ic = np.array([index[(kx, ky, 0)] for kx, ky in waves])
        self._is = np.array([index[(kx, ky, 1)] for kx, ky in waves])
        self._ck = 1.0 / (np.hypot(self._kx, self._ky) * math.pi * math.sqrt(2.0))
        # positions of +k and -k in numpy FFT ordering
        self._px, self._py = self._kx % N, self._ky % N
        self._mx, self._my = (-self._kx) % N, (-self._ky) % N
        freq = np.fft.fftfreq(N, 1.0 / N)
        self._KX = freq[:, None] * np.ones((1, N))
        self._KY = np.ones((N, 1)) * freq[None, :]
        ksq = self._KX ** 2 + self._KY ** 2
        ksq[0, 0] = 1.0
        self._ksq = ksq
        self._N = N

    # ------------------------------------------------------------------
    # coefficient <-> Fourier maps

    def _pad(self, u):
        d = self.declared_dim
        if u.shape[-1] == d:
            return u
        out = np.zeros(u.shape[:-1] + (d,))
        out[..., : u.shape[-1]] = u
        return out

    def psi_hat(self, u):
        """Streamfunction Fourier coefficients of coefficient array(s) ``u``."""
        u = self._pad(np.asarray(u, float))
        a, b = u[..., self._ic], u[..., self._is]
        half = 0.5 * self._ck * (a - 1j * b)
        out = np.zeros(u.shape[:-1] + (self._N, self._N), dtype=complex)
        out[..., self._px, self._py] = half
        out[..., self._mx, self._my] = np.conj(half)
        return out

    def coeffs_from_psi_hat(self, psi_hat, n=None):
        h = psi_hat[..., self._px, self._py]
        d = self.declared_dim
        out = np.zeros(psi_hat.shape[:-2] + (d,))
        out[..., self._ic] = 2.0 * h.real / self._ck
        out[..., self._is] = -2.0 * h.imag / self._ck
        return out if n is None else out[..., :n]

    def velocity_hat(self, psi_hat):
        return 1j * self._KY * psi_hat, -1j * self._KX * psi_hat

    def _to_grid(self, fhat):
        return np.fft.ifft2(fhat, axes=(-2, -1)).real * (self._N * self._N)

    def _to_hat(self, f):
        return np.fft.fft2(f, axes=(-2, -1)) / (self._N * self._N)

    def velocity(self, u):
        """Grid velocity (ux, uy), each of shape (..., N, N); x along axis -2."""
        uxh, uyh = self.velocity_hat(self.psi_hat(u))
        return self._to_grid(uxh), self._to_grid(uyh)

    def leray_coeffs(self, ux_hat, uy_hat, n=None):
        """Coefficients of the divergence-free part of a Fourier velocity field."""
        psi = (self._KY * ux_hat - self._KX * uy_hat) / (1j * self._ksq)
        psi[..., 0, 0] = 0.0
        return self.coeffs_from_psi_hat(psi, n)

    def from_grid(self, ux, uy, n=None, tol=1e-10):
        """Project a grid velocity onto the basis; warns when input had divergence."""
        uxh, uyh = self._to_hat(ux), self._to_hat(uy)
        div = 1j * (self._KX * uxh + self._KY * uyh)
        scale = max(float(np.max(np.abs(uxh))), float(np.max(np.abs(uyh))), 1.0)
        if float(np.max(np.abs(div))) > tol * scale:
            warnings.warn("velocity field is not divergence-free; Leray projection applied",
                          stacklevel=2)
        return self.leray_coeffs(uxh, uyh, n)

    # ------------------------------------------------------------------

    def advect_hat(self, u, v):
        """Fourier coefficients of (u . grad) v before projection."""
        uxh, uyh = self.velocity_hat(self.psi_hat(u))
        vxh, vyh = self.velocity_hat(self.psi_hat(v))
        ux, uy = self._to_grid(uxh), self._to_grid(uyh)
        out = []
        for vh in (vxh, vyh):
            dx = self._to_grid(1j * self._KX * vh)
            dy = self._to_grid(1j * self._KY * vh)
            out.append(self._to_hat(ux * dx + uy * dy))
        return out

    def B(self, u, v):
        u, v = np.broadcast_arrays(np.asarray(u, float), np.asarray(v, float))
        n = u.shape[-1]
        px, py = self.advect_hat(u, v)
        return self.leray_coeffs(px, py, n)

    def F(self, t, u):
        out = np.zeros_like(np.asarray(u, float))
        if self.spec.forcing:
            out[..., 0] += self.spec.forcing
        return out

    def sigma(self, t, u, K=None):
        u = np.asarray(u, float)
        K = self.noise_modes if K is None else K
        n = u.shape[-1]
        cols = np.zeros(u.shape[:-1] + (K, n))
        d = min(K, n)
        k = np.arange(1, d + 1, dtype=float)
        cols[..., np.arange(d), np.arange(d)] = self.spec.noise_amplitude * k ** (-self.spec.noise_decay)
        return cols

    def describe(self):
        d = super().describe()
        d["spec"] = dict(self.spec.__dict__)
        return d


def ns2d_B(spec: NS2DSpec, U, V, model: Optional[NS2DModel] = None):
    model = NS2DModel(spec) if model is None else model
    return model.B(U, V)
