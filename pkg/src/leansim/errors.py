"""Exception hierarchy shared by all leansim modules."""


class LeanSimError(Exception):
    """Base class for every error raised by leansim."""


class DomainError(LeanSimError, ValueError):
    """Argument outside the mathematical domain of an operation."""


class DecompositionError(LeanSimError, ArithmeticError):
    """Matrix is not symmetric positive definite."""

    def __init__(self, message: str, pivot: int | None = None):
        super().__init__(message)
        self.pivot = pivot


class FitError(LeanSimError):
    """A regression could not be fitted."""

    def __init__(self, message: str, state: str | None = None):
        super().__init__(message)
        self.state = state


class StatTestError(LeanSimError, ValueError):
    """A statistical test received degenerate input."""


class DataError(LeanSimError, ValueError):
    """Malformed or inconsistent input data."""


class DegeneratePosteriorError(LeanSimError):
    """The posterior collapses to a point mass (zero residual variance)."""

    def __init__(self, message: str, state: str | None = None):
        super().__init__(message)
        self.state = state
