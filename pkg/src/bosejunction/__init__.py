"""Open quantum system: one bosonic mode coupled to several free Bose reservoirs."""

from .model import (
    GCS,
    SSB,
    CombZdZ,
    ContinuumRd,
    CoupledModel,
    GraphExplicit,
    GraphKDelta,
    LatticeZd,
    NoPhase,
    RadialContinuum,
    ReservoirSpec,
    SystemSpec,
    Tabulated,
    validate,
)
from .ness import ConditionFailure, NessEvaluator, ProfileVector, TestVector
from .spectral import SpectralOptions

__all__ = [
    "GCS",
    "SSB",
    "CombZdZ",
    "ConditionFailure",
    "ContinuumRd",
    "CoupledModel",
    "GraphExplicit",
    "GraphKDelta",
    "LatticeZd",
    "NessEvaluator",
    "NoPhase",
    "ProfileVector",
    "RadialContinuum",
    "ReservoirSpec",
    "SpectralOptions",
    "SystemSpec",
    "Tabulated",
    "TestVector",
    "validate",
]
__version__ = "0.1.0"
