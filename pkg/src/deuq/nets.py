"""Dense feed-forward networks evaluated on second-order jets.

The same parameter container serves three roles: the deterministic solver
network, the probabilistic regression head, and the four-channel evidential
head. Parameters flatten to a single vector in a canonical order
(layer-major, weights before biases, row-major within each weight matrix),
which every gradient-based routine in the package relies on.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .autodiff import Jet2, Var, exp, sin, softplus, tanh
from .errors import ConfigError, StructuralError


def rbf(x):
    """Gaussian ridge exp(-x^2): localized response along one direction."""
    return exp(-(x * x))


_ACTIVATIONS = {"tanh": tanh, "sin": sin, "softplus": softplus, "rbf": rbf}


@dataclass(frozen=True)
class MLPConfig:
    input_dim: int
    output_dim: int
    hidden_sizes: tuple[int, ...]
    activation: str = "tanh"
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "hidden_sizes", tuple(self.hidden_sizes))
        if self.input_dim not in (1, 2):
            raise ConfigError("input_dim must be 1 or 2")
        if self.output_dim < 1:
            raise ConfigError("output_dim must be positive")
        if not 1 <= len(self.hidden_sizes) <= 3:
            raise ConfigError("hidden_sizes must contain 1 to 3 layers")
        if any(h < 1 for h in self.hidden_sizes):
            raise ConfigError("hidden layer widths must be positive")
        if self.activation not in _ACTIVATIONS:
            raise ConfigError(f"unknown activation {self.activation!r}")

    def layer_shapes(self) -> list[tuple[int, int]]:
        dims = [self.input_dim, *self.hidden_sizes, self.output_dim]
        return [(dims[i + 1], dims[i]) for i in range(len(dims) - 1)]

    @property
    def n_params(self) -> int:
        return sum(o * i + o for o, i in self.layer_shapes())


@dataclass
class MLPParams:
    config: MLPConfig
    weights: list = field(default_factory=list)  # per layer, shape (out, in)
    biases: list = field(default_factory=list)  # per layer, shape (out,)

    def flat(self) -> np.ndarray:
        pieces = []
        for W, b in zip(self.weights, self.biases):
            pieces.append(np.asarray(W).ravel())
            pieces.append(np.asarray(b).ravel())
        return np.concatenate(pieces)

    @classmethod
    def from_flat(cls, config: MLPConfig, flat: np.ndarray) -> "MLPParams":
        flat = np.asarray(flat, dtype=float)
        if flat.size != config.n_params:
            raise StructuralError(
                f"expected {config.n_params} parameters, got {flat.size}"
            )
        weights, biases, off = [], [], 0
        for out, inn in config.layer_shapes():
            weights.append(flat[off : off + out * inn].reshape(out, inn))
            off += out * inn
            biases.append(flat[off : off + out])
            off += out
        return cls(config, weights, biases)


def init(config: MLPConfig) -> MLPParams:
    """Zero-mean uniform weights with half-width sqrt(6/(fan_in+fan_out)),
    zero biases. Deterministic for a fixed config seed."""
    rng = np.random.default_rng(config.seed)
    weights, biases = [], []
    for out, inn in config.layer_shapes():
        half = np.sqrt(6.0 / (inn + out))
        weights.append(rng.uniform(-half, half, size=(out, inn)))
        biases.append(np.zeros(out))
    return MLPParams(config, weights, biases)


def rbf_feature_init(config: MLPConfig, domain) -> MLPParams:
    """Initialization for rbf networks: first-layer units become
    coordinate-aligned Gaussian ridges tiling the given domain.

    Units are assigned round-robin to input coordinates; each unit's center
    runs over an equispaced tiling of that coordinate's interval, with the
    length scale set to 1.5 tiling steps so neighboring ridges overlap.
    Centers beyond the data keep prior-scale posterior weight uncertainty,
    which is what lets predictive bands flare outside the training region.
    Remaining layers fall back to the standard fan-based init.
    """
    if config.activation != "rbf":
        raise ConfigError("rbf_feature_init requires the rbf activation")
    params = init(config)
    domain = [tuple(map(float, iv)) for iv in domain]
    if len(domain) != config.input_dim:
        raise ConfigError("domain dimension does not match input_dim")
    width = config.hidden_sizes[0]
    coords = [axis for axis in range(config.input_dim)]
    per_coord = {axis: [] for axis in coords}
    for j in range(width):
        per_coord[coords[j % len(coords)]].append(j)
    W1 = np.zeros((width, config.input_dim))
    b1 = np.zeros(width)
    for axis, units in per_coord.items():
        lo, hi = domain[axis]
        n = len(units)
        centers = np.linspace(lo, hi, n) if n > 1 else np.array([(lo + hi) / 2.0])
        step = (hi - lo) / max(n - 1, 1)
        scale = 1.0 / (1.5 * step) if step > 0 else 1.0
        for j, c in zip(units, centers):
            W1[j, axis] = scale
            b1[j] = -scale * c
    params.weights[0] = W1
    params.biases[0] = b1
    return params


def split_flat_var(config: MLPConfig, flat: Var) -> tuple[list, list]:
    """Slice a flat parameter Var into per-layer (out, in) weight and (out,)
    bias views, preserving the canonical ordering."""
    weights, biases, off = [], [], 0
    for out, inn in config.layer_shapes():
        weights.append(flat[off : off + out * inn].reshape((out, inn)))
        off += out * inn
        biases.append(flat[off : off + out])
        off += out
    return weights, biases


def _affine_jet(h: Jet2, W, b) -> Jet2:
    # the layer is linear, so each jet component maps through it independently
    Wt = W.T
    return Jet2(h.value @ Wt + b, h.d1 @ Wt, h.d2 @ Wt)


def forward_batch(config: MLPConfig, weights: Sequence, biases: Sequence, x: Jet2) -> Jet2:
    """Evaluate the network on a batch jet with components of shape (n, input_dim).

    Weights may be numpy arrays or Var nodes; returns a jet with components
    of shape (n, output_dim).
    """
    act = _ACTIVATIONS[config.activation]
    h = x
    last = len(weights) - 1
    for i, (W, b) in enumerate(zip(weights, biases)):
        h = _affine_jet(h, W, b)
        if i != last:
            h = act(h)
    return h


def forward(params: MLPParams, inputs: Sequence[Jet2]) -> list[Jet2]:
    """Evaluate on one point given as a jet per input coordinate."""
    if len(inputs) != params.config.input_dim:
        raise StructuralError(
            f"expected {params.config.input_dim} input jets, got {len(inputs)}"
        )
    batch = Jet2(
        np.array([[float(j.value) for j in inputs]]),
        np.array([[float(j.d1) for j in inputs]]),
        np.array([[float(j.d2) for j in inputs]]),
    )
    out = forward_batch(params.config, params.weights, params.biases, batch)
    return [
        Jet2(float(out.value[0, k]), float(out.d1[0, k]), float(out.d2[0, k]))
        for k in range(params.config.output_dim)
    ]


def values_batch(config: MLPConfig, weights: Sequence, biases: Sequence, x) -> np.ndarray:
    """Plain value-only forward pass on points of shape (n, input_dim)."""
    act = _ACTIVATIONS[config.activation]
    h = np.asarray(x, dtype=float) if not isinstance(x, Var) else x
    last = len(weights) - 1
    for i, (W, b) in enumerate(zip(weights, biases)):
        h = h @ W.T + b
        if i != last:
            h = act(h)
    return h


def evaluate(params: MLPParams, points: np.ndarray) -> np.ndarray:
    """Network values on (n, input_dim) points; returns (n, output_dim)."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    if points.shape[1] != params.config.input_dim:
        raise StructuralError("point dimension does not match input_dim")
    return values_batch(params.config, params.weights, params.biases, points)


def save(params: MLPParams, path) -> None:
    """Write {config, flat_params} JSON for the stage-1 -> stage-2 handoff."""
    payload = {
        "config": {
            "input_dim": params.config.input_dim,
            "output_dim": params.config.output_dim,
            "hidden_sizes": list(params.config.hidden_sizes),
            "activation": params.config.activation,
            "seed": params.config.seed,
        },
        "flat_params": params.flat().tolist(),
    }
    Path(path).write_text(json.dumps(payload, sort_keys=True))


def load(path) -> MLPParams:
    payload = json.loads(Path(path).read_text())
    config = MLPConfig(
        input_dim=payload["config"]["input_dim"],
        output_dim=payload["config"]["output_dim"],
        hidden_sizes=tuple(payload["config"]["hidden_sizes"]),
        activation=payload["config"]["activation"],
        seed=payload["config"]["seed"],
    )
    return MLPParams.from_flat(config, np.array(payload["flat_params"]))
