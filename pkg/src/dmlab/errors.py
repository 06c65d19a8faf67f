"""Exception types shared across the package."""


class CapExceededError(RuntimeError):
    """A construction would exceed a configured resource cap."""


class BudgetError(RuntimeError):
    """A requested accuracy budget cannot be certified with the given inputs."""

    def __init__(self, message, required_radius=None):
        super().__init__(message)
        self.required_radius = required_radius


class EigensolverError(RuntimeError):
    """Eigensolver failed to converge; carries the achieved residual."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class PreconditionError(ValueError):
    """A mathematical precondition of a check failed (not a check violation)."""


class ConfigError(ValueError):
    """An experiment configuration is malformed; message names the field."""
