"""Exception hierarchy shared across the package."""


class CircGofError(Exception):
    """Base class for all package errors."""


class InvalidArgumentError(CircGofError, ValueError):
    pass


class DegenerateDirectionError(CircGofError, ValueError):
    """The resultant vector is too short to define a direction."""


class ParseError(CircGofError, ValueError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class InsufficientDataError(CircGofError, ValueError):
    pass


class NonConvergenceError(CircGofError, RuntimeError):
    """Raised when no optimizer start converged.

    ``best`` carries the lowest-objective iterate that was reached.
    """

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


class EmptyNeighborhoodError(CircGofError, ValueError):
    """All kernel weights vanish at the evaluation point."""


class SingularDesignError(CircGofError, ValueError):
    pass


class UnreliableStatisticError(CircGofError, RuntimeError):
    pass


class BootstrapFailure(CircGofError, RuntimeError):
    pass


class NotPositiveDefiniteError(CircGofError, RuntimeError):
    pass


class ChainFailureError(CircGofError, RuntimeError):
    pass


class DomainError(CircGofError, ValueError):
    pass
