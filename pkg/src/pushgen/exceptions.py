"""Exception types raised by pushgen.

All of them derive from ``ValueError`` so callers that only care about bad
input can catch that.
"""


class PushgenError(ValueError):
    """Base class for every error raised by the package."""


class InvalidDimension(PushgenError):
    pass


class OutOfDomain(PushgenError):
    pass


class InvalidSpec(PushgenError):
    pass


class HypothesisViolation(PushgenError):
    pass


class DimensionMismatch(PushgenError):
    pass


class UnnormalizedMeasure(PushgenError):
    pass


class CapExceeded(PushgenError):
    """A combinatorial or problem-size guard was hit."""


class StepUnderflow(PushgenError):
    pass
