"""Exception types shared across the package."""


class FairrankError(Exception):
    """Base class for all package errors."""


class InvalidInputError(FairrankError, ValueError):
    """Inputs violate a documented precondition (shape, domain, finiteness)."""


class ConvergenceError(FairrankError, RuntimeError):
    """An iterative solver hit its iteration cap without meeting tolerances."""

    def __init__(self, message, iterations=None, primal_residual=None,
                 dual_residual=None):
        super().__init__(message)
        self.iterations = iterations
        self.primal_residual = primal_residual
        self.dual_residual = dual_residual


class SchemaError(FairrankError, ValueError):
    """A dataset schema file is malformed or does not match the CSV."""


class ConfigError(FairrankError, ValueError):
    """An experiment configuration is malformed (CLI exits with code 2)."""
