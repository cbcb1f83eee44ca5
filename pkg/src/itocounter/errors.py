"""Exception types shared across the package."""


class DomainError(ValueError):
    """Argument outside the mathematical domain of an operation."""


class PrecisionError(DomainError):
    """A requested conversion would round the result out of (0, 1)."""


class RangeError(ValueError):
    """Argument is valid mathematically but outside the numerically simulable range.

    ``index`` locates the first offending element when the call was vectorized.
    """

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index
