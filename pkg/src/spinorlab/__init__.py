"""Harmonic spinors on asymptotically Melvin 3-manifolds: geometry, spinor
calculus, a least-squares Dirac solver and asymptotic diagnostics."""

__version__ = "0.1.0"

from .errors import (ConfigError, DegenerateData, DomainError, FrameMismatch, InvalidParameter,
                     NonConvergence, NonpositiveConformalFactor, NonpositiveWarp, NotHarmonic,
                     RangeError, SpinorLabError)
from .geometry import Family, MetricSpec, PerturbationSpec, make_metric

__all__ = ["ConfigError", "DegenerateData", "DomainError", "FrameMismatch", "InvalidParameter",
           "NonConvergence", "NonpositiveConformalFactor", "NonpositiveWarp", "NotHarmonic",
           "RangeError", "SpinorLabError", "Family", "MetricSpec", "PerturbationSpec", "make_metric"]
