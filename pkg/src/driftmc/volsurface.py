"""Raw-SVI implied variance surface and the Dupire local volatility derived
from it.

Total implied variance uses one smile for every maturity,

    w(t, k) = t * (a + b * (rho * (k - m) + sqrt((k - m)^2 + sigma^2))),

so implied volatility sqrt(w / t) is t-independent. The local variance is the
ratio of d w / d t to the Dupire denominator

    1 - (k / w) w_k + 1/4 (-1/4 - 1/w + k^2 / w^2) w_k^2 + 1/2 w_kk,

with the closed-form derivatives of w in k and t; at t = 0 the denominator is
replaced by its limit, written in terms of the finite ratio w_k / w. A
non-positive denominator or variance means the surface admits butterfly
arbitrage and is reported as a hard error rather than clamped, since clamping
would silently corrupt variance-ratio experiments.

All formula code accepts floats, numpy arrays, or autodiff variables.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .autodiff import sqrt, square, value_of
from .errors import ArbitrageError, ValidationError

__all__ = [
    "SviParams",
    "svi_total_variance",
    "implied_vol",
    "local_vol",
    "surface_grid",
    "write_surface_csv",
]

T_ZERO_THRESHOLD = 1e-12


@dataclass(frozen=True)
class SviParams:
    """Raw SVI parameters {a, b, rho, m, sigma} of the total variance smile."""

    a: float
    b: float
    rho: float
    m: float
    sigma: float

    def __post_init__(self):
        if not math.isfinite(self.a):
            raise ValidationError("svi.a must be finite")
        if not (self.b >= 0.0):
            raise ValidationError(f"svi.b must be >= 0, got {self.b}")
        if not (abs(self.rho) < 1.0):
            raise ValidationError(f"svi.rho must satisfy |rho| < 1, got {self.rho}")
        if not math.isfinite(self.m):
            raise ValidationError("svi.m must be finite")
        if not (self.sigma > 0.0):
            raise ValidationError(f"svi.sigma must be > 0, got {self.sigma}")
        floor = self.a + self.b * self.sigma * math.sqrt(1.0 - self.rho**2)
        if not (floor >= 0.0):
            raise ValidationError(
                "svi parameters violate a + b*sigma*sqrt(1-rho^2) >= 0 "
                f"(got {floor})"
            )


def _smile(k, chi: SviParams):
    """a + b * (rho (k - m) + sqrt((k - m)^2 + sigma^2)); equals both w/t and
    the time derivative of w."""
    d = k - chi.m
    return chi.a + chi.b * (chi.rho * d + sqrt(square(d) + chi.sigma**2))


def svi_total_variance(t, k, chi: SviParams):
    """Total implied variance w(t, k)."""
    if t < 0.0:
        raise ValidationError(f"t must be >= 0, got {t}")
    return t * _smile(k, chi)


def implied_vol(t, k, chi: SviParams):
    """Implied volatility sqrt(w(t, k) / t); t-independent for this surface."""
    if not (t > 0.0):
        raise ValidationError(f"implied_vol requires t > 0, got {t}")
    radicand = _smile(k, chi)
    if np.any(value_of(radicand) < 0.0):
        raise ArbitrageError(f"negative implied variance at t={t}")
    return sqrt(radicand)


def _dk_w_over_t(k, chi: SviParams):
    """d w / d k divided by t: b * (rho + (k - m)/sqrt((k - m)^2 + sigma^2))."""
    d = k - chi.m
    return chi.b * (chi.rho + d / sqrt(square(d) + chi.sigma**2))


def _dkk_w_over_t(k, chi: SviParams):
    """Second k-derivative of w divided by t: b sigma^2 / ((k-m)^2 + sigma^2)^(3/2)."""
    d = k - chi.m
    root = sqrt(square(d) + chi.sigma**2)
    return chi.b * chi.sigma**2 / (root * root * root)


def _check_positive(quantity, what, t):
    vals = np.asarray(value_of(quantity))
    if np.any(vals <= 0.0):
        bad = int(np.argmin(vals)) if vals.ndim else None
        worst = float(vals.min()) if vals.ndim else float(vals)
        raise ArbitrageError(
            f"non-positive {what} ({worst}) at t={t}; surface admits arbitrage",
            index=bad,
        )


def local_vol(t, k, chi: SviParams):
    """Dupire local volatility sigma(t, k).

    For t below ``T_ZERO_THRESHOLD`` the t -> 0 limit of the denominator is
    used, in which every w_k / w ratio is finite and t-free.
    """
    if t < 0.0:
        raise ValidationError(f"t must be >= 0, got {t}")
    dt_w = _smile(k, chi)
    if t < T_ZERO_THRESHOLD:
        # t -> 0 limit of the denominator: w_k and w both scale with t, so only
        # the terms in the finite ratio w_k / w survive.
        _check_positive(dt_w, "total variance slope", t)
        ratio = _dk_w_over_t(k, chi) / dt_w
        denom = 1.0 - k * ratio + 0.25 * square(k) * square(ratio)
    else:
        w = t * dt_w
        _check_positive(w, "total variance", t)
        dk_w = t * _dk_w_over_t(k, chi)
        dkk_w = t * _dkk_w_over_t(k, chi)
        denom = (
            1.0
            - (k / w) * dk_w
            + 0.25 * (-0.25 - 1.0 / w + square(k) / square(w)) * square(dk_w)
            + 0.5 * dkk_w
        )
    _check_positive(denom, "Dupire denominator", t)
    variance = dt_w / denom
    _check_positive(variance, "local variance", t)
    return sqrt(variance)


def surface_grid(chi: SviParams, t_grid, k_grid):
    """Evaluate implied and local vol on the product grid, row-major in t then
    k. Returns a list of (t, k, implied_vol, local_vol) rows."""
    t_grid = np.asarray(t_grid, dtype=np.float64)
    k_grid = np.asarray(k_grid, dtype=np.float64)
    if t_grid.size == 0 or k_grid.size == 0:
        raise ValidationError("surface grids must be non-empty")
    if t_grid.size > 1 and not np.all(np.diff(t_grid) > 0):
        raise ValidationError("t grid must be strictly increasing")
    if k_grid.size > 1 and not np.all(np.diff(k_grid) > 0):
        raise ValidationError("k grid must be strictly increasing")
    rows = []
    for t in t_grid:
        t = float(t)
        try:
            iv = implied_vol(t, k_grid, chi) if t > 0 else np.sqrt(_smile(k_grid, chi))
            lv = local_vol(t, k_grid, chi)
        except ArbitrageError as err:
            raise ArbitrageError(f"surface export failed at t={t}: {err}") from err
        iv = np.broadcast_to(np.asarray(iv, dtype=np.float64), k_grid.shape)
        lv = np.broadcast_to(np.asarray(lv, dtype=np.float64), k_grid.shape)
        for k, ivk, lvk in zip(k_grid, iv, lv):
            rows.append((t, float(k), float(ivk), float(lvk)))
    return rows


def write_surface_csv(path, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "k", "implied_vol", "local_vol"])
        for t, k, iv, lv in rows:
            writer.writerow([f"{t:.17g}", f"{k:.17g}", f"{iv:.17g}", f"{lv:.17g}"])
