"""Reference models with known answers: the pure heat flow and a negative
control whose nonlinearity breaks the cancellation property."""

from __future__ import annotations

import numpy as np

from ..model_api import AbstractModel
from ..spectral import squares_basis


class ZeroModel(AbstractModel):
    """B = F = sigma = 0 with lambda_k = k^2: the flow is exp(-tA) exactly."""

    label = "zero"

    def __init__(self, dim: int = 32, noise_modes: int = 1):
        super().__init__(squares_basis(dim), noise_modes)

    def B(self, u, v):
        return np.zeros(np.broadcast_shapes(np.shape(u), np.shape(v)))


class BrokenModel(AbstractModel):
    """B(U, V) = V, which is bilinear in neither slot and has <B(U,V),V> = |V|^2."""

    label = "broken"

    def __init__(self, dim: int = 16, noise_modes: int = 1):
        super().__init__(squares_basis(dim), noise_modes)

    def B(self, u, v):
        return np.broadcast_to(np.asarray(v, float), np.broadcast_shapes(np.shape(u), np.shape(v))).copy()
