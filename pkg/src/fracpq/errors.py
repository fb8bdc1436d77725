class FracPQError(Exception):
    """Base class for errors raised by fracpq."""


class ValidationError(FracPQError, ValueError):
    """Invalid input: domain, mesh, parameters or configuration."""


class ConvergenceError(FracPQError, RuntimeError):
    """A solver did not reach its tolerance, or found no admissible iterate."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report
