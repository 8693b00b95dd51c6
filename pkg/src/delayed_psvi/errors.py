"""Exception types raised across the package."""


class NotPositiveDefinite(ValueError):
    pass


class DimensionMismatch(ValueError):
    pass


class NoConvergence(RuntimeError):
    pass


class TooManyActions(ValueError):
    pass


class IndexOutOfRange(IndexError):
    pass


class NonMonotoneEpisode(ValueError):
    pass


class Divergence(FloatingPointError):
    """LMC iterate left the ball of radius 1e6; the step size is too large."""


class StepTooLarge(ValueError):
    """I - 2*eta*Omega is not positive definite."""


class InvalidDelta(ValueError):
    pass


class ConfigError(ValueError):
    pass
