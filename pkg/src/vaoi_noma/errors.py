"""Exception types shared across the package."""


class InvalidInputError(ValueError):
    """A value violates a documented domain constraint."""


class StateSpaceTooLargeError(ValueError):
    """An enumeration would exceed its configured cap."""


class ConvergenceError(RuntimeError):
    """An iterative routine hit its iteration cap or diverged.

    Attributes:
        best: best iterate seen before giving up (may be None).
        residual: residual norm of ``best``.
        trace: residual history, newest last.
    """

    def __init__(self, message, best=None, residual=float("nan"), trace=None):
        super().__init__(message)
        self.best = best
        self.residual = residual
        self.trace = list(trace or [])


class PolicyFormatError(ValueError):
    """A policy or solution file could not be parsed."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line
