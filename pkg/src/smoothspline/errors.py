"""Exception hierarchy shared by the fitting, model and CLI layers."""


class SplineError(Exception):
    """Base class for all package errors."""


class InvalidOrderError(SplineError, ValueError):
    """Raised when the smoothness order does not satisfy 2m > d."""


class NotUnisolventError(SplineError, ValueError):
    """Raised when a point set cannot determine a polynomial of degree m-1."""


class DuplicatePointError(SplineError, ValueError):
    def __init__(self, i: int, j: int):
        self.pair = (i, j)
        super().__init__(f"design points {i} and {j} coincide")


class SingularSystemError(SplineError, ArithmeticError):
    """The bordered linear system could not be solved, even with a ridge."""


class RootFindingError(SplineError, ArithmeticError):
    def __init__(self, message: str, bracket: tuple[float, float]):
        self.bracket = bracket
        super().__init__(f"{message} (last bracket: lambda in [{bracket[0]:.6g}, {bracket[1]:.6g}])")


class UnsupportedDerivativeError(SplineError, ValueError):
    """Requested derivative order exceeds what the kernel supports."""


class ModelFormatError(SplineError, ValueError):
    """A serialized model document is malformed."""

    def __init__(self, message: str, field: str | None = None):
        self.field = field
        super().__init__(message)


class VersionMismatchError(ModelFormatError):
    pass
