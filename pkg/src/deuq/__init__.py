"""Neural differential-equation solving with uncertainty bands.

Two-stage pipeline: a deterministic network minimizes the squared residual
of the equation with initial/boundary conditions enforced exactly by a
transform, then a probabilistic regressor (variational, conjugate
last-layer, or evidential) treats that solution as observed data and emits
a posterior predictive band that is itself condition-enforced.
"""

from . import autodiff, experiment, metrics, nets, problems, stage1, uq
from .errors import (
    ConfigError,
    DeuqError,
    DivergenceError,
    DomainError,
    OracleError,
    StructuralError,
)

__all__ = [
    "ConfigError",
    "DeuqError",
    "DivergenceError",
    "DomainError",
    "OracleError",
    "StructuralError",
    "autodiff",
    "experiment",
    "metrics",
    "nets",
    "problems",
    "stage1",
    "uq",
]

__version__ = "0.1.0"
