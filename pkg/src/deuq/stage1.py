"""Stage one: deterministic solve by minimizing the mean squared residual.

Trains a dense network on collocation points so that the enforced solution
u~ = A + B * net drives the residual operator to zero, then evaluates u~ on
a dense grid. That grid of (point, value) pairs is the observed dataset the
stage-two probabilistic regressors consume.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import nets, problems
from .autodiff import Jet2, Var, grad_params
from .errors import ConfigError, DivergenceError
from .optim import Adam

_SAMPLERS = ("equispaced", "uniform_random", "equispaced_jitter")


@dataclass(frozen=True)
class TrainConfig:
    n_collocation: int = 64  # per input dimension
    sampler: str = "equispaced"
    epochs: int = 6000
    learning_rate: float = 2e-3
    optimizer: str = "adam"
    seed: int = 0
    tolerance: float = 0.0
    dataset_grid: int | None = None  # per input dimension; None = preset default

    def __post_init__(self):
        if self.n_collocation < 2:
            raise ConfigError("n_collocation must be at least 2")
        if self.learning_rate <= 0.0:
            raise ConfigError("learning_rate must be positive")
        if self.sampler not in _SAMPLERS:
            raise ConfigError(f"unknown sampler {self.sampler!r}; valid: {_SAMPLERS}")
        if self.optimizer != "adam":
            raise ConfigError("only the adam optimizer is supported")
        if self.tolerance < 0.0:
            raise ConfigError("tolerance must be nonnegative")


@dataclass
class Stage1Result:
    problem: problems.ProblemSpec
    params: nets.MLPParams
    loss_history: list  # (epoch, mean squared residual)
    dataset_points: np.ndarray  # (n, input_dim)
    dataset_values: np.ndarray  # (n, n_outputs), enforced solution values


def sample_collocation(domain: Sequence[problems.Interval], n: int,
                       sampler: str = "equispaced", seed: int = 0) -> np.ndarray:
    """Collocation points inside the training domain, n per dimension
    (product grid in several dimensions). Deterministic for a fixed seed."""
    if n < 2:
        raise ConfigError("need at least 2 collocation points per dimension")
    if sampler not in _SAMPLERS:
        raise ConfigError(f"unknown sampler {sampler!r}; valid: {_SAMPLERS}")
    rng = np.random.default_rng(seed)
    if sampler == "equispaced":
        return problems.grid_points(domain, n)
    if sampler == "uniform_random":
        cols = [rng.uniform(lo, hi, size=n ** len(domain)) for lo, hi in domain]
        return np.stack(cols, axis=1)
    # equispaced_jitter: perturb the grid by up to half a spacing, clipped
    pts = problems.grid_points(domain, n)
    for axis, (lo, hi) in enumerate(domain):
        half = (hi - lo) / (n - 1) / 2.0
        pts[:, axis] = np.clip(pts[:, axis] + rng.uniform(-half, half, pts.shape[0]), lo, hi)
    return pts


def _seeded_jets(points: np.ndarray, direction: int) -> list[Jet2]:
    """One jet per coordinate with d1 = 1 along the seeded direction."""
    jets = []
    for axis in range(points.shape[1]):
        col = points[:, axis]
        one = np.ones_like(col) if axis == direction else np.zeros_like(col)
        jets.append(Jet2(col, one, np.zeros_like(col)))
    return jets


def _stack_jets(jets: Sequence[Jet2]) -> Jet2:
    return Jet2(
        np.stack([j.value for j in jets], axis=1),
        np.stack([j.d1 for j in jets], axis=1),
        np.stack([j.d2 for j in jets], axis=1),
    )


def residual_loss(problem: problems.ProblemSpec, config: nets.MLPConfig,
                  weights, biases, points: np.ndarray):
    """Mean over collocation points of the summed squared residuals of the
    enforced solution. Works on plain arrays or Var parameters."""
    loss = None
    point_cols = tuple(points[:, i] for i in range(points.shape[1]))
    u_by_dir = {}
    for direction in problem.required_directions:
        in_jets = _seeded_jets(points, direction)
        out = nets.forward_batch(config, weights, biases, _stack_jets(in_jets))
        raw = [Jet2(out.value[:, k], out.d1[:, k], out.d2[:, k])
               for k in range(problem.n_outputs)]
        u_by_dir[direction] = problems.enforce(raw, in_jets, problem.transform)
    residuals = problems.residual(problem, u_by_dir, point_cols)
    for r in residuals:
        term = (r * r).mean()
        loss = term if loss is None else loss + term
    return loss


def train_deterministic(problem: problems.ProblemSpec, net_config: nets.MLPConfig,
                        train_config: TrainConfig) -> Stage1Result:
    """Full-batch Adam on the mean squared residual; raises DivergenceError
    (carrying the last finite state) if the loss leaves the finite range."""
    if net_config.input_dim != problem.input_dim:
        raise ConfigError("net input_dim does not match the problem")
    if net_config.output_dim != problem.n_outputs:
        raise ConfigError("net output_dim does not match the problem outputs")
    points = sample_collocation(
        problem.train_domain, train_config.n_collocation,
        train_config.sampler, train_config.seed,
    )
    params = nets.init(net_config)
    flat = params.flat()
    opt = Adam(flat.size, train_config.learning_rate)
    history: list = []

    def loss_and_grad(flat_vec):
        leaf = Var(flat_vec)
        Ws, bs = nets.split_flat_var(net_config, leaf)
        loss = residual_loss(problem, net_config, Ws, bs, points)
        g = grad_params(loss, [leaf])
        return float(loss.data), g

    loss, grad = loss_and_grad(flat)
    if not np.isfinite(loss):
        raise DivergenceError("initial residual loss is non-finite", params, history)
    history.append((0, loss))
    for epoch in range(1, train_config.epochs + 1):
        new_flat = opt.step(flat, grad)
        loss, grad = loss_and_grad(new_flat)
        if not np.isfinite(loss):
            raise DivergenceError(
                f"training diverged at epoch {epoch}",
                nets.MLPParams.from_flat(net_config, flat),
                history,
            )
        flat = new_flat
        history.append((epoch, loss))
        if loss <= train_config.tolerance:
            break

    final = nets.MLPParams.from_flat(net_config, flat)
    grid_n = train_config.dataset_grid or (128 if problem.input_dim == 1 else 48)
    grid = problems.grid_points(problem.train_domain, grid_n)
    values = evaluate_enforced(problem, final, grid)
    return Stage1Result(problem, final, history, grid, values)


def evaluate_enforced(problem: problems.ProblemSpec, params: nets.MLPParams,
                      points: np.ndarray) -> np.ndarray:
    """Values of the enforced solution A + B * net on (n, d) points."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    raw = nets.evaluate(params, points)
    A, B = problems.transform_values(problem.transform, points, problem.n_outputs)
    return A + B * raw


def emit_dataset(result: Stage1Result, grid_spec: int) -> list:
    """Re-evaluate the enforced solution on a grid of the requested density;
    returns [(point tuple, value vector), ...] in grid order."""
    grid = problems.grid_points(result.problem.train_domain, grid_spec)
    values = evaluate_enforced(result.problem, result.params, grid)
    return [(tuple(p), v.copy()) for p, v in zip(grid, values)]


def save_result(result: Stage1Result, path, problem_overrides: dict | None = None) -> None:
    """JSON handoff file: {net_config, flat_params, loss_history, dataset}.

    The problem is recorded by preset name plus the overrides used to build
    it, which is enough to reconstruct every preset.
    """
    cfg = result.params.config
    payload = {
        "net_config": {
            "input_dim": cfg.input_dim,
            "output_dim": cfg.output_dim,
            "hidden_sizes": list(cfg.hidden_sizes),
            "activation": cfg.activation,
            "seed": cfg.seed,
        },
        "flat_params": result.params.flat().tolist(),
        "loss_history": [[int(e), float(l)] for e, l in result.loss_history],
        "dataset": {
            "points": result.dataset_points.tolist(),
            "values": result.dataset_values.tolist(),
        },
        "problem": {
            "name": result.problem.name,
            "overrides": problem_overrides or {},
        },
    }
    tmp = Path(str(path) + ".tmp")
    tmp.write_text(json.dumps(payload, sort_keys=True))
    tmp.replace(path)


def load_result(path) -> Stage1Result:
    payload = json.loads(Path(path).read_text())
    cfg = nets.MLPConfig(
        input_dim=payload["net_config"]["input_dim"],
        output_dim=payload["net_config"]["output_dim"],
        hidden_sizes=tuple(payload["net_config"]["hidden_sizes"]),
        activation=payload["net_config"]["activation"],
        seed=payload["net_config"]["seed"],
    )
    problem = problems.make_preset(
        payload["problem"]["name"], **payload["problem"]["overrides"]
    )
    return Stage1Result(
        problem=problem,
        params=nets.MLPParams.from_flat(cfg, np.array(payload["flat_params"])),
        loss_history=[(int(e), float(l)) for e, l in payload["loss_history"]],
        dataset_points=np.array(payload["dataset"]["points"], dtype=float),
        dataset_values=np.array(payload["dataset"]["values"], dtype=float),
    )
