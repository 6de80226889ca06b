"""Exception types raised by lrsd."""


class LrsdError(Exception):
    """Base class for all lrsd errors."""


class DimensionMismatch(LrsdError, ValueError):
    pass


class InvalidConfig(LrsdError, ValueError):
    pass


class SvdNonConvergence(LrsdError, RuntimeError):
    pass


class ThetaSearchFailure(LrsdError, RuntimeError):
    """The breakpoint search did not bracket the multiplier.

    This indicates broken input (NaN magnitudes, unsorted data) since the
    constraint function is continuous and strictly decreasing.
    """


class FormatError(LrsdError, ValueError):
    pass


class MaxIterations(LrsdError, RuntimeWarning):
    """Warning category used when a solver hits its iteration budget."""
