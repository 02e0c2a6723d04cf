"""Euler simulation of the Bachelier and local-volatility dynamics, under the
base measure or under a drift-modified measure, with per-path accumulation of
the Girsanov log-weight.

The drifted Bachelier scheme is

    X_{i+1} = X_i + a_i * sigma * dt + sigma * sqrt(dt) * g_i,

and the local-volatility scheme diffuses the log process

    Y_{i+1} = Y_i + sigma_loc(t_i, Y_i - ln x0) * (a_i * dt + sqrt(dt) * g_i),
    X_i = exp(Y_i),

exactly as stated, with no Ito correction term: the scheme bias is shared by
the plain and re-weighted estimators, so it cancels from variance-ratio
comparisons. The local-vol argument is log-moneyness against spot (zero rates,
forward = spot).

Each step contributes a_i * g_i * sqrt(dt) + a_i^2 * dt / 2 to log Z; the paths
being simulated under the drifted measure, g_i is the driver of the drifted
Brownian increment, and the estimator later divides payoffs by Z. A null drift
leaves log Z identically zero and reproduces the plain scheme bit for bit.

The same loop builds either concrete numpy paths or a differentiable graph on
a tape, depending on what the drift parameters are.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from . import rng
from .autodiff import Var, exp, square, stack_columns
from .drift_nets import forward as drift_forward
from .errors import ArbitrageError, NumericalError, ValidationError
from .volsurface import SviParams, local_vol

__all__ = [
    "TimeGrid",
    "BachelierParams",
    "LocalVolParams",
    "PathBatch",
    "GraphPaths",
    "accumulate_log_weight",
    "simulate_bachelier",
    "simulate_local_vol",
    "simulate",
    "simulate_graph",
    "is_estimator",
    "write_path_dump",
]


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid t_i = i * maturity / n_steps, i = 0..n_steps."""

    maturity: float
    n_steps: int

    def __post_init__(self):
        if not (self.maturity > 0.0):
            raise ValidationError(f"grid.maturity must be > 0, got {self.maturity}")
        if not (isinstance(self.n_steps, int) and self.n_steps >= 1):
            raise ValidationError(f"grid.n_steps must be a positive integer, got {self.n_steps}")

    @property
    def dt(self) -> float:
        return self.maturity / self.n_steps

    @property
    def sqrt_dt(self) -> float:
        return math.sqrt(self.dt)

    def times(self) -> np.ndarray:
        return np.arange(self.n_steps + 1) * self.dt


@dataclass(frozen=True)
class BachelierParams:
    x0: float
    sigma: float

    def __post_init__(self):
        if not (self.sigma > 0.0):
            raise ValidationError(f"model.sigma must be > 0, got {self.sigma}")
        if not math.isfinite(self.x0):
            raise ValidationError("model.x0 must be finite")


@dataclass(frozen=True)
class LocalVolParams:
    x0: float
    chi: SviParams

    def __post_init__(self):
        if not (self.x0 > 0.0):
            raise ValidationError(f"model.x0 must be > 0, got {self.x0}")


@dataclass
class PathBatch:
    """Concrete simulated trajectories plus everything the estimator needs."""

    values: np.ndarray       # (n_paths, n_steps+1) underlying levels
    gaussians: np.ndarray    # (n_paths, n_steps) standard normal drivers
    log_weights: np.ndarray  # (n_paths,) accumulated log Z_T
    drift_evals: np.ndarray  # (n_paths, n_steps) drift values used

    @property
    def n_paths(self) -> int:
        return self.values.shape[0]

    @property
    def terminal(self) -> np.ndarray:
        return self.values[:, -1]

    @property
    def weights(self) -> np.ndarray:
        return np.exp(self.log_weights)


@dataclass
class GraphPaths:
    """Tape-resident counterpart of PathBatch used while training."""

    columns: list        # per-node levels, Var or ndarray
    log_weight: object   # Var (or 0.0 for a null drift)
    drift: list          # per-step drift values


def accumulate_log_weight(a, g, dt):
    """One step's increment to log Z: a*g*sqrt(dt) + a^2*dt/2."""
    return a * g * math.sqrt(dt) + 0.5 * square(a) * dt


def _check_finite_level(level, step_index):
    # tape nodes are checked at creation; plain numpy needs the same guard so
    # a runaway drift surfaces as an error, not as nan-filled reports
    if isinstance(level, Var):
        return
    values = np.asarray(level)
    if not np.all(np.isfinite(values)):
        bad = int(np.argmin(np.isfinite(values)))
        raise NumericalError(
            f"simulated level became non-finite at step {step_index + 1}, path {bad} "
            "(drift too large for this model?)"
        )


def _drift_at_step(stack, step_index, columns):
    if stack is None:
        return 0.0
    if step_index == 0:
        return drift_forward(stack, 0, None)
    if stack.mode == "full":
        prefix = stack_columns(columns[: step_index + 1])
        return drift_forward(stack, step_index, prefix)
    return drift_forward(stack, step_index, columns[step_index])


def _bachelier_columns(params, grid, stack, gaussians):
    n = gaussians.shape[0]
    dt = grid.dt
    sig_dt = params.sigma * dt
    sig_sqdt = params.sigma * grid.sqrt_dt
    columns = [np.full(n, params.x0, dtype=np.float64)]
    drift = []
    log_weight = 0.0
    for i in range(grid.n_steps):
        a = _drift_at_step(stack, i, columns)
        g = gaussians[:, i]
        nxt = columns[i] + a * sig_dt + sig_sqdt * g
        _check_finite_level(nxt, i)
        columns.append(nxt)
        log_weight = log_weight + accumulate_log_weight(a, g, dt)
        drift.append(a)
    return columns, log_weight, drift


def _local_vol_columns(params, grid, stack, gaussians):
    n = gaussians.shape[0]
    dt = grid.dt
    sqdt = grid.sqrt_dt
    ln_x0 = math.log(params.x0)
    y = np.full(n, ln_x0, dtype=np.float64)
    columns = [np.full(n, params.x0, dtype=np.float64)]
    drift = []
    log_weight = 0.0
    for i in range(grid.n_steps):
        k = y - ln_x0
        try:
            sig = local_vol(i * dt, k, params.chi)
        except ArbitrageError as err:
            path = f", path {err.index}" if err.index is not None else ""
            raise ArbitrageError(f"local vol failed at step {i}{path}: {err}", index=err.index) from err
        a = _drift_at_step(stack, i, columns)
        g = gaussians[:, i]
        y = y + sig * (a * dt + sqdt * g)
        nxt = exp(y)
        _check_finite_level(nxt, i)
        columns.append(nxt)
        log_weight = log_weight + accumulate_log_weight(a, g, dt)
        drift.append(a)
    return columns, log_weight, drift


def _to_batch(columns, log_weight, drift, gaussians):
    n = gaussians.shape[0]
    values = np.column_stack([np.broadcast_to(np.asarray(c, dtype=np.float64), (n,)) for c in columns])
    lw = np.broadcast_to(np.asarray(log_weight, dtype=np.float64), (n,)).copy()
    if drift:
        evals = np.column_stack(
            [np.broadcast_to(np.asarray(a, dtype=np.float64), (n,)) for a in drift]
        )
    else:
        evals = np.zeros((n, 0))
    return PathBatch(values=values, gaussians=gaussians, log_weights=lw, drift_evals=evals)


def simulate_bachelier(params: BachelierParams, grid: TimeGrid, drift, n_paths: int,
                       seed: int, domain: int = rng.DOMAIN_TRAIN, path_offset: int = 0) -> PathBatch:
    """Simulate the (possibly drifted) Bachelier scheme; ``drift`` is a
    DriftStack or None for the plain measure."""
    if n_paths < 1:
        raise ValidationError(f"n_paths must be >= 1, got {n_paths}")
    gaussians = rng.gaussian_matrix(seed, n_paths, grid.n_steps, domain, path_offset)
    return _to_batch(*_bachelier_columns(params, grid, drift, gaussians), gaussians)


def simulate_local_vol(params: LocalVolParams, grid: TimeGrid, drift, n_paths: int,
                       seed: int, domain: int = rng.DOMAIN_TRAIN, path_offset: int = 0) -> PathBatch:
    """Simulate the (possibly drifted) log-Euler local-volatility scheme."""
    if n_paths < 1:
        raise ValidationError(f"n_paths must be >= 1, got {n_paths}")
    gaussians = rng.gaussian_matrix(seed, n_paths, grid.n_steps, domain, path_offset)
    return _to_batch(*_local_vol_columns(params, grid, drift, gaussians), gaussians)


def simulate(model, grid: TimeGrid, drift, n_paths: int, seed: int,
             domain: int = rng.DOMAIN_TRAIN, path_offset: int = 0) -> PathBatch:
    if isinstance(model, BachelierParams):
        return simulate_bachelier(model, grid, drift, n_paths, seed, domain, path_offset)
    if isinstance(model, LocalVolParams):
        return simulate_local_vol(model, grid, drift, n_paths, seed, domain, path_offset)
    raise ValidationError(f"unknown model type {type(model).__name__}")


def simulate_graph(model, grid: TimeGrid, stack, gaussians) -> GraphPaths:
    """Build the simulation as a differentiable graph; ``stack`` carries tape
    parameters (see drift_nets.tape_parameters) and ``gaussians`` is the frozen
    (n_paths, n_steps) noise matrix."""
    if isinstance(model, BachelierParams):
        cols, lw, drift = _bachelier_columns(model, grid, stack, gaussians)
    elif isinstance(model, LocalVolParams):
        cols, lw, drift = _local_vol_columns(model, grid, stack, gaussians)
    else:
        raise ValidationError(f"unknown model type {type(model).__name__}")
    return GraphPaths(columns=cols, log_weight=lw, drift=drift)


def is_estimator(batch: PathBatch, payoff_values: np.ndarray):
    """Importance-sampling estimator: per-sample values g * exp(-log Z).

    Returns (mean, per-sample std, standard error); with a null drift the
    weights are 1 and this reduces to the plain Monte Carlo statistics.
    """
    payoff_values = np.asarray(payoff_values, dtype=np.float64)
    if payoff_values.shape != (batch.n_paths,):
        raise ValidationError(
            f"payoff values have shape {payoff_values.shape}, want ({batch.n_paths},)"
        )
    v = payoff_values * np.exp(-batch.log_weights)
    mean = float(np.mean(v))
    std = float(np.std(v))
    return mean, std, std / math.sqrt(batch.n_paths)


def write_path_dump(path, batch: PathBatch, grid: TimeGrid):
    """CSV dump of trajectories with the running log-weight per node."""
    times = grid.times()
    dt = grid.dt
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["path_id", "step", "t", "x", "log_weight_running"])
        for p in range(batch.n_paths):
            running = 0.0
            for step in range(grid.n_steps + 1):
                if step > 0:
                    a = batch.drift_evals[p, step - 1]
                    g = batch.gaussians[p, step - 1]
                    running += a * g * math.sqrt(dt) + 0.5 * a * a * dt
                writer.writerow([
                    p, step, f"{times[step]:.17g}",
                    f"{batch.values[p, step]:.17g}", f"{running:.17g}",
                ])
