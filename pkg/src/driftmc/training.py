"""Variance-minimization loop for the drift networks.

The objective is the empirical second moment of the re-weighted payoff plus a
soft cap on extreme measure changes,

    loss = mean((g * exp(-log Z))^2) + lambda * ln(1 + mean((exp(-log Z) - C)^+)),

estimated on one batch of frozen Gaussian draws. Each outer iteration fetches
a fresh batch; each inner step re-simulates the trajectories from the same
draws (the drift changed), rebuilds the tape, and applies one plain
gradient-descent update. Training samples are discarded; pricing uses fresh
evaluation substreams.

When lambda is "auto", a pilot batch under the null drift estimates the payoff
standard deviation sigma_hat and lambda = base * 10^(-floor(log10 sigma_hat)).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import rng
from .autodiff import Tape, exp, log, relu, square, value_of
from .diffusion import TimeGrid, simulate, simulate_graph
from .drift_nets import DriftStack, init_stack, tape_parameters
from .errors import NumericalError, TrainingDivergedError, ValidationError
from .payoffs import payoff_on_columns, payoff_values

__all__ = [
    "TrainConfig",
    "TrainReport",
    "loss",
    "auto_lambda",
    "train",
]


@dataclass(frozen=True)
class TrainConfig:
    n_batches: int
    steps_per_batch: int
    batch_size: int
    learning_rate: float
    lam: float | str          # a number, or "auto"
    lambda_base: float
    constraint: float         # the cap C on 1/Z
    seed: int

    def __post_init__(self):
        for name in ("n_batches", "steps_per_batch", "batch_size"):
            v = getattr(self, name)
            if not (isinstance(v, int) and v >= 1):
                raise ValidationError(f"train.{name} must be an integer >= 1, got {v}")
        if not (self.learning_rate >= 0.0):
            raise ValidationError(f"train.learning_rate must be >= 0, got {self.learning_rate}")
        if self.lam != "auto" and not (float(self.lam) >= 0.0):
            raise ValidationError(f"train.lambda must be >= 0 or 'auto', got {self.lam}")
        if not (self.lambda_base > 0.0):
            raise ValidationError(f"train.lambda_base must be > 0, got {self.lambda_base}")
        if not (self.constraint > 0.0):
            raise ValidationError(f"train.constraint must be > 0, got {self.constraint}")

    @property
    def total_steps(self) -> int:
        return self.n_batches * self.steps_per_batch


@dataclass
class TrainReport:
    loss_history: list = field(default_factory=list)
    grad_norm_history: list = field(default_factory=list)
    stack: DriftStack | None = None
    lam: float = 0.0
    sigma_pilot: float | None = None

    def as_dict(self) -> dict:
        return {
            "loss_history": self.loss_history,
            "grad_norm_history": self.grad_norm_history,
            "lambda": self.lam,
            "sigma_pilot": self.sigma_pilot,
        }


def loss(payoff_vals, log_weights, lam: float, constraint: float):
    """Second moment of the re-weighted payoff plus the soft 1/Z cap; works on
    tape variables (training) and on plain arrays (finite-difference checks)."""
    inv_z = exp(-log_weights)
    v = payoff_vals * inv_z
    base = square(v).mean()
    penalty = log(1.0 + relu(inv_z - constraint).mean())
    return base + lam * penalty


def auto_lambda(sigma_hat: float, base: float) -> float:
    """base * 10^(-floor(log10 sigma_hat)), scaling the penalty to the payoff's
    own magnitude."""
    if not (sigma_hat > 0.0):
        raise ValidationError(
            "payoff standard deviation is zero on the pilot batch: the payoff is "
            "constant, so plain Monte Carlo is already exact and there is nothing to train"
        )
    return base * 10.0 ** (-math.floor(math.log10(sigma_hat)))


def _update(stack: DriftStack, tstack, grads: dict, lr: float) -> float:
    """Apply one gradient step in a fixed parameter order; returns the global
    gradient norm."""
    sq_norm = 0.0
    g0 = grads[tstack.step0.index]
    sq_norm += float(np.sum(g0 * g0))
    stack.step0 -= lr * float(g0)
    for net, tnet in zip(stack.nets, tstack.nets):
        for name in ("w1", "b1", "w2", "b2", "w3"):
            g = grads[getattr(tnet, name).index]
            sq_norm += float(np.sum(g * g))
            getattr(net, name)[...] -= lr * g
    return math.sqrt(sq_norm)


def train(model, payoff, grid: TimeGrid, mode: str, config: TrainConfig) -> TrainReport:
    """Run the full batch schedule and return the trained stack with its loss
    and gradient-norm histories.

    Within one inner loop the Gaussian draws are frozen but trajectories are
    re-simulated every step, because the drift parameters moved.
    """
    report = TrainReport()
    if config.lam == "auto":
        pilot = simulate(model, grid, None, config.batch_size, config.seed,
                         domain=rng.DOMAIN_PILOT)
        g = payoff_values(payoff, pilot.values, grid)
        sigma_hat = float(np.std(g))
        report.sigma_pilot = sigma_hat
        lam = auto_lambda(sigma_hat, config.lambda_base)
    else:
        lam = float(config.lam)
    report.lam = lam

    stack = init_stack(grid, mode, config.seed, x0_reference=model.x0)
    step = 0
    for batch_index in range(config.n_batches):
        gaussians = rng.gaussian_matrix(
            config.seed, config.batch_size, grid.n_steps,
            domain=rng.DOMAIN_TRAIN, path_offset=batch_index * config.batch_size,
        )
        for _ in range(config.steps_per_batch):
            tape = Tape()
            tstack = tape_parameters(stack, tape)
            try:
                paths = simulate_graph(model, grid, tstack, gaussians)
                g = payoff_on_columns(payoff, paths.columns, grid)
                objective = loss(g, paths.log_weight, lam, config.constraint)
            except NumericalError as err:
                raise TrainingDivergedError(
                    f"training step {step}: {err} (learning rate too large?)", step=step
                ) from err
            value = float(value_of(objective))
            if not math.isfinite(value):
                raise TrainingDivergedError(
                    f"training step {step}: loss is {value}", step=step
                )
            grads = tape.backward(objective)
            grad_norm = _update(stack, tstack, grads, config.learning_rate)
            report.loss_history.append(value)
            report.grad_norm_history.append(grad_norm)
            step += 1
    report.stack = stack
    return report
