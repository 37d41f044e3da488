"""Shared stage-two pieces: likelihood/prior/optimizer settings, dataset
normalization, and the enforced regression head."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import problems
from ..errors import ConfigError


@dataclass(frozen=True)
class LikelihoodSpec:
    """Fixed Gaussian observation scale for the stage-two regression."""

    eps: float = 1e-2

    def __post_init__(self):
        if self.eps <= 0.0:
            raise ConfigError("likelihood eps must be positive")


@dataclass(frozen=True)
class GaussianPrior:
    """Zero-mean Gaussian weight prior; std may be one scalar or one scalar
    per layer."""

    std: float | tuple = 1.0

    def __post_init__(self):
        stds = self.std if isinstance(self.std, (tuple, list)) else (self.std,)
        if any(s <= 0.0 for s in stds):
            raise ConfigError("prior std must be positive")
        if isinstance(self.std, list):
            object.__setattr__(self, "std", tuple(self.std))

    def per_param(self, config) -> np.ndarray:
        """Expand to one std per flat parameter in canonical order."""
        shapes = config.layer_shapes()
        if isinstance(self.std, tuple):
            if len(self.std) != len(shapes):
                raise ConfigError("per-layer prior needs one std per layer")
            stds = self.std
        else:
            stds = (self.std,) * len(shapes)
        pieces = [np.full(o * i + o, s) for (o, i), s in zip(shapes, stds)]
        return np.concatenate(pieces)


@dataclass(frozen=True)
class OptConfig:
    """Optimizer settings for the stage-two fits."""

    epochs: int = 4000
    learning_rate: float = 1e-2
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 0:
            raise ConfigError("epochs must be nonnegative")
        if self.learning_rate <= 0.0:
            raise ConfigError("learning_rate must be positive")


def dataset_arrays(dataset) -> tuple[np.ndarray, np.ndarray]:
    """Normalize a dataset (list of (point, values) or an (X, Y) pair) to
    float arrays of shapes (n, d) and (n, k)."""
    if isinstance(dataset, tuple) and len(dataset) == 2:
        X, Y = dataset
    else:
        if len(dataset) == 0:
            raise ConfigError("dataset must not be empty")
        X = [p for p, _ in dataset]
        Y = [v for _, v in dataset]
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Y = np.asarray(Y, dtype=float)
    if Y.ndim == 1:
        Y = Y.reshape(-1, 1)
    if X.shape[0] == 0:
        raise ConfigError("dataset must not be empty")
    if X.shape[0] != Y.shape[0]:
        raise ConfigError("dataset points and values disagree in length")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(Y))):
        raise ConfigError("dataset contains non-finite entries")
    return X, Y


def enforced_head_values(problem: problems.ProblemSpec | None, points: np.ndarray,
                         n_outputs: int) -> tuple[np.ndarray, np.ndarray]:
    """(A, B) arrays for the regression head; identity head when no problem
    transform is supplied (A = 0, B = 1)."""
    if problem is None:
        shape = (points.shape[0], n_outputs)
        return np.zeros(shape), np.ones(shape)
    return problems.transform_values(problem.transform, points, n_outputs)
