"""Shared exception types."""


class ConfigError(ValueError):
    """Raised when a configuration file or value is invalid."""


class SolverError(RuntimeError):
    """Raised when a linear or nonlinear solve fails.

    The optional ``stage`` tag identifies which subproblem failed inside
    a cascaded solve (continuity / momentum / plate / lift / bogovskii).
    """

    def __init__(self, message, stage=None, residual=None):
        self.stage = stage
        self.residual = residual
        if stage is not None:
            message = f"[{stage}] {message}"
        super().__init__(message)
