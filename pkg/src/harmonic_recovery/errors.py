"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """Invalid input parameters (mesh level, sensor count, config file)."""


class DomainError(ValueError):
    """A point lies outside the closed unit square."""


class SolverError(RuntimeError):
    """A linear solve did not reach its residual target.

    ``residual`` holds the achieved relative residual, when known.
    """

    def __init__(self, message, residual=None, index=None):
        super().__init__(message)
        self.residual = residual
        self.index = index


class RecoveryError(RuntimeError):
    """The Gramian system could not be solved (numerically singular)."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics


class IllConditionedGramianWarning(RuntimeWarning):
    pass
