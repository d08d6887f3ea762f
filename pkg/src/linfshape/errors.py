"""Exception types shared across the package."""


class InvalidArgumentError(ValueError):
    """Raised when an input violates a documented precondition."""


class NumericalError(ArithmeticError):
    """Raised on a numerical breakdown (bad pivot, non-finite iterate).

    ``index`` carries the offending pivot or iteration number.
    """

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class FeasibilityError(ValueError):
    """Raised when a linear program has no feasible point."""
