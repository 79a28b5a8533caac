"""Concrete models: synthetic triads, 2D Navier-Stokes, primitive equations."""

from .fixtures import BrokenModel, ZeroModel
from .ns2d import NS2DModel, NS2DSpec, ns2d_B
from .pe import PE3DSpec, PEModel, PEState
from .synthetic import SyntheticModel, SyntheticSpec, synthetic_B

__all__ = [
    "BrokenModel", "ZeroModel", "NS2DModel", "NS2DSpec", "ns2d_B", "PE3DSpec",
    "PEModel", "PEState", "SyntheticModel", "SyntheticSpec", "synthetic_B",
    "build_model",
]


def build_model(label: str, spec: dict | None = None):
    """Instantiate a shipped model from its label and JSON spec block."""
    spec = dict(spec or {})
    if label == "synthetic":
        return SyntheticModel(SyntheticSpec.from_dict(spec))
    if label == "ns2d":
        return NS2DModel(NS2DSpec.from_dict(spec))
    if label == "pe3d":
        return PEModel(PE3DSpec.from_dict(spec))
    if label == "zero":
        return ZeroModel(**spec)
    if label == "broken":
        return BrokenModel(**spec)
    raise ValueError(f"unknown model label {label!r}")
