"""Simulation and verification laboratory for low moments of random
multiplicative functions and the associated critical multiplicative chaos.

The package samples Steinhaus and Rademacher random multiplicative functions,
evaluates random Euler products and their increments, estimates moments, tail
probabilities and barrier-walk probabilities by Monte Carlo, and validates the
estimates against exact identities and independent oracles.
"""

from .estimates import (
    MomentEstimate,
    RunManifest,
    TailEstimate,
    UnstableEstimateError,
)
from .rmf import RmfModel

__version__ = "0.1.0"

__all__ = [
    "MomentEstimate",
    "TailEstimate",
    "RunManifest",
    "UnstableEstimateError",
    "RmfModel",
    "__version__",
]
