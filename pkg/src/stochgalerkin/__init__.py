"""Spectral Galerkin simulation and statistical verification for abstract
stochastic evolution equations dU + (AU + B(U,U) + F(U)) dt = sigma(U) dW."""

__version__ = "0.1.0"
