"""Gibbs partitions with a giant component: exact series, samplers and diagnostics."""

__version__ = "0.1.0"

from .errors import (
    GibbsError,
    PreconditionError,
    ResourceCapError,
    SamplingExhausted,
    SpecError,
)
from .powerseries import Series, SupportLattice, RadiusInfo

__all__ = [
    "__version__",
    "GibbsError",
    "PreconditionError",
    "ResourceCapError",
    "SamplingExhausted",
    "SpecError",
    "Series",
    "SupportLattice",
    "RadiusInfo",
]
