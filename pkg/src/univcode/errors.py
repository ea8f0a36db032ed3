"""Exception types shared across the package."""


class UnivCodeError(Exception):
    """Base class for all package errors."""


class DomainError(UnivCodeError, ValueError):
    """An argument lies outside the domain of the operation."""


class UnboundedEntropyError(UnivCodeError, ArithmeticError):
    """The entropy (or a tail entropy) of a distribution diverges."""


class ResourceError(UnivCodeError, MemoryError):
    """An enumeration or construction would exceed its guard rail."""


class ModeError(UnivCodeError, ValueError):
    """The requested computation mode does not apply to the input."""


class PreconditionError(UnivCodeError, ValueError):
    """A stated precondition of an operation does not hold."""


class ZeroProbabilityError(UnivCodeError, ArithmeticError):
    """A model assigned zero probability to an observed symbol."""

    def __init__(self, message, position=None, symbol=None):
        super().__init__(message)
        self.position = position
        self.symbol = symbol


class InfiniteDivergenceError(UnivCodeError, ArithmeticError):
    """A KL divergence or redundancy is infinite."""

    def __init__(self, message, path=None):
        super().__init__(message)
        self.path = path


class CodecError(UnivCodeError, ValueError):
    """A bitstream is malformed, truncated or bound to another model."""
