"""Exception hierarchy shared by all fsvvix modules."""


class FsvError(Exception):
    """Base class for every error raised by the package."""


class DomainError(FsvError, ValueError):
    """An argument lies outside the mathematical domain of the operation."""


class ConvergenceError(FsvError, ArithmeticError):
    """A series, root finder or quadrature did not reach its tolerance."""


class ValidityError(DomainError):
    """A transform was requested beyond its finite validity horizon."""


class ModelKindError(FsvError, ValueError):
    """Operation called with parameters of the wrong model kind."""


class ArbitrageError(DomainError):
    """An option price violates static no-arbitrage bounds."""


class NoConvergence(ConvergenceError):
    """Iterative solver hit its iteration cap."""


class SingularWeightError(FsvError, ArithmeticError):
    """The GMM long-run covariance estimate cannot be inverted."""


class OptimizationError(FsvError, RuntimeError):
    """The inner minimiser failed."""


class NestingError(FsvError, ValueError):
    """Restricted and unrestricted GMM specs are not nested."""


class InfeasibleStartError(FsvError, RuntimeError):
    """No start point satisfying the calibration constraints was found."""


class NonConvergence(FsvError, RuntimeError):
    """Calibration finished without converging; ``best`` holds the best result so far."""

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


class ParseError(FsvError, ValueError):
    """A quote or returns file row could not be parsed."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class SchemaError(FsvError, ValueError):
    """A file header or JSON document does not follow the expected schema."""
