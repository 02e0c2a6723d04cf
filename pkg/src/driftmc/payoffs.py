"""Payoff evaluation on terminal values or whole paths.

Three payoff families are supported: a call, a combination of calls and puts,
and a smoothed AutoCall paying a Phoenix coupon at the first observation date
the underlying clears its barrier, with a short put-down-and-in if it survives
to maturity. Barrier indicators use the piecewise-linear ramp

    ind(x; b, S) = ((x - b)^+ - (x - b - S)^+) / S,

which is 0 below b, 1 above b + S and linear in between, so the whole payoff
is continuous in every path coordinate and usable in pathwise gradients.

Payoffs are pure functions; they run on floats, per-path numpy vectors, or
autodiff variables alike.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .autodiff import relu
from .errors import ValidationError

__all__ = [
    "CallSpec",
    "CallsPutsSpec",
    "AutoCallSpec",
    "smooth_indicator",
    "call_payoff",
    "calls_puts_payoff",
    "autocall_payoff",
    "observation_indices",
    "payoff_on_columns",
    "payoff_values",
]


@dataclass(frozen=True)
class CallSpec:
    K: float

    def __post_init__(self):
        if not (self.K > 0.0):
            raise ValidationError(f"payoff.K must be > 0, got {self.K}")


@dataclass(frozen=True)
class CallsPutsSpec:
    N1: float
    K1: float
    N2: float
    K2: float

    def __post_init__(self):
        if self.N1 < 0.0 or self.N2 < 0.0:
            raise ValidationError("payoff quantities N1, N2 must be >= 0")
        if not (self.K1 > 0.0 and self.K2 > 0.0):
            raise ValidationError("payoff strikes K1, K2 must be > 0")


@dataclass(frozen=True)
class AutoCallSpec:
    observation_dates: tuple
    barriers: tuple
    smoothings: tuple
    coupons: tuple
    K_PDI: float
    S_PDI: float

    def __post_init__(self):
        object.__setattr__(self, "observation_dates", tuple(float(t) for t in self.observation_dates))
        object.__setattr__(self, "barriers", tuple(float(b) for b in self.barriers))
        object.__setattr__(self, "smoothings", tuple(float(s) for s in self.smoothings))
        object.__setattr__(self, "coupons", tuple(float(c) for c in self.coupons))
        n = len(self.observation_dates)
        if n == 0:
            raise ValidationError("payoff.observation_dates must be non-empty")
        if not (len(self.barriers) == len(self.smoothings) == len(self.coupons) == n):
            raise ValidationError(
                "payoff.barriers, payoff.smoothings and payoff.coupons must all "
                f"have the same length as observation_dates ({n})"
            )
        if any(t2 <= t1 for t1, t2 in zip(self.observation_dates, self.observation_dates[1:])):
            raise ValidationError("payoff.observation_dates must be strictly increasing")
        if any(b <= 0.0 for b in self.barriers):
            raise ValidationError("payoff.barriers must be positive")
        if any(s <= 0.0 for s in self.smoothings):
            raise ValidationError("payoff.smoothings must be positive")
        if not (self.K_PDI > 0.0):
            raise ValidationError(f"payoff.K_PDI must be > 0, got {self.K_PDI}")
        if not (self.S_PDI > 0.0):
            raise ValidationError(f"payoff.S_PDI must be > 0, got {self.S_PDI}")

    @property
    def n_coupons(self):
        return len(self.observation_dates)


def smooth_indicator(x, barrier, smoothing):
    """Ramp from 0 at ``barrier`` to 1 at ``barrier + smoothing``."""
    if not (smoothing > 0.0):
        raise ValidationError(f"smoothing width must be > 0, got {smoothing}")
    return (relu(x - barrier) - relu(x - barrier - smoothing)) / smoothing


def call_payoff(x_t, spec: CallSpec):
    return relu(x_t - spec.K)


def calls_puts_payoff(x_t, spec: CallsPutsSpec):
    return spec.N1 * relu(x_t - spec.K1) + spec.N2 * relu(spec.K2 - x_t)


def observation_indices(grid, spec: AutoCallSpec):
    """Map observation dates to grid node indices.

    Dates are snapped to the nearest node (with a warning if they were not on
    a node); a distance beyond dt/2 or colliding dates are errors. The last
    date must land on the final node.
    """
    dt = grid.dt
    indices = []
    for date in spec.observation_dates:
        idx = int(round(date / dt))
        if idx < 0 or idx > grid.n_steps:
            raise ValidationError(
                f"payoff.observation_dates: {date} lies outside the time grid [0, {grid.maturity}]"
            )
        dist = abs(idx * dt - date)
        if dist > 0.5 * dt * (1.0 + 1e-9):
            raise ValidationError(
                f"payoff.observation_dates: {date} is {dist} away from the nearest grid node"
            )
        if dist > 1e-12 * max(1.0, grid.maturity):
            warnings.warn(
                f"observation date {date} snapped to grid node {idx} (t={idx * dt})",
                stacklevel=2,
            )
        indices.append(idx)
    if any(j2 <= j1 for j1, j2 in zip(indices, indices[1:])):
        raise ValidationError(
            "payoff.observation_dates: two dates snap to the same grid node; refine the grid"
        )
    if indices[-1] != grid.n_steps:
        raise ValidationError(
            f"payoff.observation_dates: last date {spec.observation_dates[-1]} must "
            f"be the maturity {grid.maturity}"
        )
    return indices


def _autocall_core(obs_values, terminal_value, spec: AutoCallSpec):
    """Coupon legs plus the short put-down-and-in, all with smoothed barriers.

    ``survival`` holds the running product of (1 - indicator) over earlier
    observation dates, so each coupon is paid with the probability-like weight
    of being the first crossing; after the loop it multiplies the PDI leg.
    """
    total = 0.0
    survival = 1.0
    for x, barrier, smoothing, coupon in zip(
        obs_values, spec.barriers, spec.smoothings, spec.coupons
    ):
        ind = smooth_indicator(x, barrier, smoothing)
        total = total + coupon * ind * survival
        survival = survival * (1.0 - ind)
    slope = (1.0 - spec.K_PDI) / spec.S_PDI
    bracket = (1.0 + slope) * relu(spec.K_PDI + spec.S_PDI - terminal_value) - slope * relu(
        spec.K_PDI - terminal_value
    )
    return total - bracket * survival


def autocall_payoff(path, grid, spec: AutoCallSpec):
    """Payoff of a single path given as the grid-node values (length n_steps+1)."""
    path = np.asarray(path, dtype=np.float64)
    if path.shape != (grid.n_steps + 1,):
        raise ValidationError(
            f"path has {path.shape[0]} nodes but the grid expects {grid.n_steps + 1}"
        )
    idx = observation_indices(grid, spec)
    obs = [float(path[j]) for j in idx]
    return float(_autocall_core(obs, float(path[-1]), spec))


def payoff_on_columns(spec, columns, grid):
    """Evaluate a payoff on per-node path columns (floats, vectors, or tape
    variables); ``columns[j]`` holds the underlying level at grid node j."""
    if isinstance(spec, CallSpec):
        return call_payoff(columns[-1], spec)
    if isinstance(spec, CallsPutsSpec):
        return calls_puts_payoff(columns[-1], spec)
    if isinstance(spec, AutoCallSpec):
        idx = observation_indices(grid, spec)
        return _autocall_core([columns[j] for j in idx], columns[-1], spec)
    raise ValidationError(f"unknown payoff spec {type(spec).__name__}")


def payoff_values(spec, values, grid):
    """Vectorized payoff over a batch: ``values`` is (n_paths, n_steps+1)."""
    values = np.asarray(values, dtype=np.float64)
    cols = [values[:, j] for j in range(values.shape[1])]
    return np.asarray(payoff_on_columns(spec, cols, grid), dtype=np.float64)


def payoff_description(spec) -> str:
    if isinstance(spec, CallSpec):
        return f"call K={spec.K}"
    if isinstance(spec, CallsPutsSpec):
        return f"calls_puts N1={spec.N1} K1={spec.K1} N2={spec.N2} K2={spec.K2}"
    if isinstance(spec, AutoCallSpec):
        return f"autocall {spec.n_coupons} dates, K_PDI={spec.K_PDI}"
    return type(spec).__name__


def max_abs_slope(spec: AutoCallSpec) -> float:
    """Crude Lipschitz bound of the autocall payoff in any one coordinate."""
    slope = (1.0 - spec.K_PDI) / spec.S_PDI
    bracket_max = (1.0 + slope) * (spec.K_PDI + spec.S_PDI)
    coupon_scale = (sum(abs(c) for c in spec.coupons) + bracket_max) / min(spec.smoothings)
    return coupon_scale + (1.0 + slope) + slope
