"""Exception hierarchy shared by every finflex module."""


class FinflexError(Exception):
    """Base class for all finflex errors."""


class DomainError(FinflexError, ValueError):
    """An argument lies outside the domain of the operation."""


class ConvergenceError(FinflexError, RuntimeError):
    """An iterative scheme did not converge within its iteration budget."""


class SingularGradientError(DomainError):
    """The log-likelihood gradient is unbounded at the requested point."""


class FitConvergenceError(ConvergenceError):
    """No multistart run converged.

    The best (possibly unconverged) result is kept on ``best``.
    """

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


class ParseError(FinflexError, ValueError):
    """Malformed input file."""


class ValidationError(FinflexError, ValueError):
    """Input parsed but violates a data invariant."""
