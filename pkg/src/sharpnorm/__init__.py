"""Numerics for the sharp operator norm pi^2/4 + 1 of the reduced
Brown-Ravenhall kernel: special functions, quadrature, Schur bounds,
trial-function lower bounds and Nystrom eigenvalues."""

__version__ = "0.1.0"

from .kernels import SHARP_CONSTANT, KernelSpec, PartialWaveIndex, PhysicalParams  # noqa: E402

__all__ = ["SHARP_CONSTANT", "KernelSpec", "PartialWaveIndex", "PhysicalParams", "__version__"]
