"""Exception types shared across the package."""


class NoBroadcastError(Exception):
    """Base class for all errors raised by this package."""


class ValidationError(NoBroadcastError, ValueError):
    """An input violates a structural invariant."""


class NotHermitian(ValidationError):
    pass


class NotUnitTrace(ValidationError):
    pass


class NotPositive(ValidationError):
    pass


class NotUnitary(ValidationError):
    pass


class DimensionMismatch(ValidationError):
    pass


class EmptyKeepSet(ValidationError):
    pass


class IndexOutOfRange(ValidationError, IndexError):
    pass


class LengthMismatch(ValidationError):
    pass


class GridMismatch(ValidationError):
    pass


class BadParamLength(ValidationError):
    pass


class BadDimension(ValidationError):
    pass


class BadSize(ValidationError):
    pass


class EigensolverFailure(NoBroadcastError, ArithmeticError):
    pass


class InfiniteEntropy(NoBroadcastError, ArithmeticError):
    """A relative entropy needed as a finite number came out as +inf."""


class ConsistencyError(NoBroadcastError, ArithmeticError):
    """A numerically guaranteed identity failed by more than round-off."""


class TruncationInsufficient(NoBroadcastError, ValueError):
    """The Fock cutoff drops more coherent-state weight than allowed."""


class GridTooCoarse(NoBroadcastError, ValueError):
    pass


class VerificationFailure(NoBroadcastError, AssertionError):
    pass


class UnstableStep(NoBroadcastError, ArithmeticError):
    pass


class OutsideGrid(NoBroadcastError, ValueError):
    """An evolved distribution carries weight up to the edge of its grid."""
