"""Exception hierarchy shared by all modules."""


class AffineLimitsError(Exception):
    """Base class for package errors."""


class InputError(AffineLimitsError, ValueError):
    """Malformed input: dimension mismatch, bad config, invalid argument."""


class StructureError(AffineLimitsError):
    """Scale group cannot be determined (for example all scales equal one)."""


class HypothesisError(AffineLimitsError):
    """The driving measure violates one of the standing assumptions."""


class RegimeError(AffineLimitsError):
    """Operation not defined for the tail exponent regime of the model."""


class EstimationError(AffineLimitsError):
    """Too few or degenerate samples for a requested estimate."""


class NumericError(AffineLimitsError, ArithmeticError):
    """Linear algebra or iteration failure."""


class UnsupportedError(AffineLimitsError, NotImplementedError):
    """Requested combination is outside what the implementation supports."""
