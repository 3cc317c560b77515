"""Exception types raised across the package."""


class SpinorLabError(Exception):
    pass


class InvalidParameter(SpinorLabError, ValueError):
    pass


class DomainError(SpinorLabError, ValueError):
    """Evaluation outside a metric's valid region (axis, horizon, r <= 0)."""


class FrameMismatch(SpinorLabError, ValueError):
    """Spinor components refer to a different metric's orthonormal frame."""


class NonpositiveConformalFactor(SpinorLabError, ValueError):
    pass


class NonpositiveWarp(SpinorLabError, ValueError):
    pass


class RangeError(SpinorLabError, ValueError):
    """Requested radius or band lies outside the grid."""


class DegenerateData(SpinorLabError, ValueError):
    pass


class NonConvergence(SpinorLabError, RuntimeError):
    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class NotHarmonic(SpinorLabError, ValueError):
    pass


class ConfigError(SpinorLabError, ValueError):
    pass
