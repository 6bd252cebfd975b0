"""Numerical laboratory for FENE dumbbells in synthetic Kraichnan turbulence."""

from .errors import (DomainViolation, FeneLabError, InvalidArgument, NumericalBreakdown,
                     RegimeViolation, UnsolvableStep)
from .params import PhysParams

__version__ = "0.1.0"

__all__ = [
    "PhysParams",
    "FeneLabError",
    "InvalidArgument",
    "DomainViolation",
    "UnsolvableStep",
    "NumericalBreakdown",
    "RegimeViolation",
    "__version__",
]
