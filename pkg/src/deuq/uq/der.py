"""Evidential regression with a Normal-Inverse-Gamma head.

A four-channel network output parametrizes the NIG hyperparameters
(gamma, nu, alpha, beta); maximizing the analytic model evidence (a
Student-t marginal) plus an evidence penalty on wrong predictions trains
them directly, with no weight sampling. The same loss expression runs on
plain numbers and on tape nodes, so hand-value checks exercise the exact
code the trainer differentiates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any

import numpy as np

from .. import nets
from ..autodiff import Var, absolute, grad_params, lgamma, log, softplus
from ..errors import ConfigError, DivergenceError, DomainError
from ..optim import Adam
from .common import OptConfig, dataset_arrays, enforced_head_values


@dataclass(frozen=True)
class EvidentialOutput:
    """NIG hyperparameters; the output mapping guarantees nu > 0, alpha > 1,
    beta > 0 for any finite raw network output."""

    gamma: Any
    nu: Any
    alpha: Any
    beta: Any


def der_head(raw) -> EvidentialOutput:
    """Map raw 4-channel output(s) to valid NIG hyperparameters.

    ``raw`` may be a length-4 vector, an (n, 4) array, or a Var with a
    trailing axis of size 4.
    """
    return EvidentialOutput(
        gamma=raw[..., 0],
        nu=softplus(raw[..., 1]),
        alpha=1.0 + softplus(raw[..., 2]),
        beta=softplus(raw[..., 3]),
    )


def der_loss(out: EvidentialOutput, target, lam: float = 0.0):
    """Negative log marginal likelihood of the NIG evidence plus the
    evidence regularizer lam * |target - gamma| * (2 nu + alpha)."""
    if lam < 0.0:
        raise ConfigError("regularizer weight must be nonnegative")
    err = target - out.gamma
    two_beta_l = 2.0 * out.beta * (1.0 + out.nu)
    nll = (
        0.5 * log(math.pi / out.nu)
        - out.alpha * log(two_beta_l)
        + (out.alpha + 0.5) * log(out.nu * err * err + two_beta_l)
        + lgamma(out.alpha)
        - lgamma(out.alpha + 0.5)
    )
    if lam == 0.0:
        return nll
    return nll + lam * absolute(err) * (2.0 * out.nu + out.alpha)


def der_predictive(out: EvidentialOutput) -> tuple:
    """Posterior predictive mean gamma and std of the Student-t marginal,
    var = beta (1 + nu) / (nu (alpha - 1)). Requires alpha > 1."""
    alpha = np.asarray(out.alpha, dtype=float)
    if np.any(alpha <= 1.0):
        raise DomainError("predictive variance requires alpha > 1")
    var = np.asarray(out.beta) * (1.0 + np.asarray(out.nu)) / (np.asarray(out.nu) * (alpha - 1.0))
    return out.gamma, np.sqrt(var)


def der_train(dataset, net_config: nets.MLPConfig, lam: float,
              opt_config: OptConfig, problem=None, n_outputs: int = 1,
              init_params=None) -> nets.MLPParams:
    """Train a 4*n_outputs-channel head on the dataset.

    The raw NIG output is mapped through the condition-enforcement affine
    exactly as the band will report it: (gamma, nu, alpha, beta) becomes
    (A + B*gamma, nu, alpha, B^2*beta), so the learned scale is calibrated
    in the same units as the enforced predictive std. Points where B = 0
    are excluded: the enforced value is exact there by construction, so
    the observation carries no evidence (and the marginal is singular).
    """
    X, Y = dataset_arrays(dataset)
    if net_config.output_dim != 4 * n_outputs:
        raise ConfigError("evidential head needs output_dim = 4 * n_outputs")
    A, B = enforced_head_values(problem, X, n_outputs)
    keep = [np.flatnonzero(B[:, k] != 0.0) for k in range(n_outputs)]
    if any(idx.size == 0 for idx in keep):
        raise ConfigError("every dataset point sits on a condition surface")
    flat = np.array(init_params, dtype=float) if init_params is not None else nets.init(net_config).flat()
    opt = Adam(flat.size, opt_config.learning_rate)
    history: list = []
    for step in range(opt_config.epochs):
        leaf = Var(flat)
        Ws, bs = nets.split_flat_var(net_config, leaf)
        raw = nets.values_batch(net_config, Ws, bs, X)
        loss = None
        for k in range(n_outputs):
            idx = keep[k]
            head = der_head(raw[idx, 4 * k : 4 * k + 4])
            head = EvidentialOutput(
                gamma=A[idx, k] + B[idx, k] * head.gamma,
                nu=head.nu, alpha=head.alpha,
                beta=B[idx, k] ** 2 * head.beta,
            )
            term = der_loss(head, Y[idx, k], lam).mean()
            loss = term if loss is None else loss + term
        value = float(loss.data)
        if not np.isfinite(value):
            raise DivergenceError(
                f"evidential objective became non-finite at step {step}",
                nets.MLPParams.from_flat(net_config, flat), history,
            )
        grad = grad_params(loss, [leaf])
        flat = opt.step(flat, grad)
        history.append(value)
    params = nets.MLPParams.from_flat(net_config, flat)
    params.loss_history = history
    return params


def der_evaluate(params: nets.MLPParams, points: np.ndarray,
                 n_outputs: int = 1) -> list[EvidentialOutput]:
    """NIG hyperparameters per output on (n, d) grid points."""
    raw = nets.evaluate(params, points)
    return [der_head(raw[:, 4 * k : 4 * k + 4]) for k in range(n_outputs)]
