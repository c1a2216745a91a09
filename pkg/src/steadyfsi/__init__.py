"""Desk-scale laboratory for steady compressible flow interacting with a
clamped elastic beam: hard-sphere pressure, domain-correction barrier,
fixed-point and continuation solvers, and runtime verification of the
identities behind the construction."""

__version__ = "0.1.0"

from .config import RunConfig, parse_config
from .eos import PressureLaw, Regularization
from .errors import ConfigError, SolverError

__all__ = [
    "RunConfig",
    "parse_config",
    "PressureLaw",
    "Regularization",
    "ConfigError",
    "SolverError",
    "__version__",
]
