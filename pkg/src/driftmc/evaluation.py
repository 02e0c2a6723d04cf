"""Plain-vs-importance-sampling comparison, robustness sweeps with frozen
networks, and the histogram / density tables behind the report figures.

Evaluation draws come from counter domains disjoint from the training stream,
so pricing is out-of-sample by construction. Reported standard deviations are
per-sample standard deviations of the estimator's summands (population
convention); the standard error std/sqrt(n) is carried alongside for
confidence-interval arithmetic. The headline number is

    std_ratio = std_plain / std_is,    variance_ratio = std_ratio^2.

Paths are processed in fixed-size blocks so memory stays flat at large path
counts; the counter-based generator makes the result independent of the
blocking.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np
from scipy.stats import norm

from . import rng
from .diffusion import BachelierParams, LocalVolParams, TimeGrid, simulate
from .errors import ValidationError
from .payoffs import payoff_values
from .volsurface import SviParams

__all__ = [
    "EvalReport",
    "SweepSpec",
    "compare",
    "sweep",
    "histogram",
    "theoretical_terminal_density",
    "write_report_csv",
    "write_sweep_csv",
    "write_histogram_csv",
]

EVAL_BLOCK = 1 << 17

SWEEP_PARAMETERS = {
    BachelierParams: ("x0", "sigma"),
    LocalVolParams: ("x0", "sigma", "a", "b", "m", "rho"),
}


@dataclass(frozen=True)
class EvalReport:
    price_plain: float
    std_plain: float
    se_plain: float
    price_is: float
    std_is: float
    se_is: float
    n_paths: int

    @property
    def std_ratio(self) -> float:
        if self.std_is == 0.0:
            # degenerate all-zero estimator: identical sides count as 1
            return 1.0 if self.std_plain == 0.0 else math.inf
        return self.std_plain / self.std_is

    @property
    def variance_ratio(self) -> float:
        return self.std_ratio**2

    def as_dict(self) -> dict:
        return {
            "price_plain": self.price_plain,
            "std_plain": self.std_plain,
            "se_plain": self.se_plain,
            "price_is": self.price_is,
            "std_is": self.std_is,
            "se_is": self.se_is,
            "std_ratio": self.std_ratio,
            "variance_ratio": self.variance_ratio,
            "n_paths": self.n_paths,
        }


@dataclass(frozen=True)
class SweepSpec:
    """One-parameter robustness sweep: scale ``parameter`` by each entry of
    ``rel_grid`` (1.0 = the training value) without retraining."""

    parameter: str
    rel_grid: tuple

    def __post_init__(self):
        object.__setattr__(self, "rel_grid", tuple(float(r) for r in self.rel_grid))
        if len(self.rel_grid) == 0:
            raise ValidationError("sweep.rel_grid must be non-empty")

    @classmethod
    def symmetric(cls, parameter: str, span: float = 0.5, points: int = 21) -> "SweepSpec":
        if not (0.0 < span < 1.0):
            raise ValidationError(f"sweep span must be in (0, 1), got {span}")
        if points < 1:
            raise ValidationError(f"sweep points must be >= 1, got {points}")
        return cls(parameter, tuple(np.linspace(1.0 - span, 1.0 + span, points)))


@dataclass(frozen=True)
class SweepRow:
    parameter: str
    value: float
    report: EvalReport | None

    @property
    def valid(self) -> bool:
        return self.report is not None


class _RunningStats:
    """Streaming mean / second central moment, combined block by block in a
    fixed order (Chan-Golub-LeVeque update)."""

    def __init__(self):
        self.n = 0
        self.mean = 0.0
        self.m2 = 0.0

    def add_block(self, v: np.ndarray):
        nb = v.size
        if nb == 0:
            return
        mb = float(np.mean(v))
        m2b = float(np.sum((v - mb) ** 2))
        if self.n == 0:
            self.n, self.mean, self.m2 = nb, mb, m2b
            return
        delta = mb - self.mean
        total = self.n + nb
        self.mean += delta * nb / total
        self.m2 += m2b + delta * delta * self.n * nb / total
        self.n = total

    @property
    def std(self) -> float:
        return math.sqrt(self.m2 / self.n)

    @property
    def se(self) -> float:
        return self.std / math.sqrt(self.n)


def _estimator_stats(model, grid, drift, payoff, n_paths, seed, domain):
    """Simulate in blocks and accumulate the per-sample estimator statistics."""
    stats = _RunningStats()
    offset = 0
    while offset < n_paths:
        block = min(EVAL_BLOCK, n_paths - offset)
        batch = simulate(model, grid, drift, block, seed, domain=domain, path_offset=offset)
        g = payoff_values(payoff, batch.values, grid)
        v = g * np.exp(-batch.log_weights)
        stats.add_block(v)
        offset += block
    return stats


def compare(model, payoff, grid: TimeGrid, stack, n_paths: int, seed: int) -> EvalReport:
    """Price with plain Monte Carlo and with the re-weighted drifted simulation
    on disjoint seed substreams.

    With ``stack=None`` (baseline-only) both sides run the null drift on the
    same substream and agree bit for bit.
    """
    if n_paths < 1:
        raise ValidationError(f"eval.n_paths must be >= 1, got {n_paths}")
    plain = _estimator_stats(model, grid, None, payoff, n_paths, seed, rng.DOMAIN_EVAL_PLAIN)
    if stack is None:
        weighted = plain
    else:
        weighted = _estimator_stats(model, grid, stack, payoff, n_paths, seed, rng.DOMAIN_EVAL_IS)
    return EvalReport(
        price_plain=plain.mean, std_plain=plain.std, se_plain=plain.se,
        price_is=weighted.mean, std_is=weighted.std, se_is=weighted.se,
        n_paths=n_paths,
    )


def _perturbed_model(model, parameter: str, factor: float):
    names = SWEEP_PARAMETERS.get(type(model))
    if names is None:
        raise ValidationError(f"unknown model type {type(model).__name__}")
    if parameter not in names:
        raise ValidationError(
            f"sweep parameter {parameter!r} not available for this model; choose from {names}"
        )
    if isinstance(model, BachelierParams):
        return replace(model, **{parameter: getattr(model, parameter) * factor})
    if parameter == "x0":
        return replace(model, x0=model.x0 * factor)
    chi = model.chi
    new_chi = SviParams(**{
        name: getattr(chi, name) * (factor if name == parameter else 1.0)
        for name in ("a", "b", "rho", "m", "sigma")
    })
    return replace(model, chi=new_chi)


def sweep(base_model, payoff, grid: TimeGrid, stack, spec: SweepSpec,
          n_paths: int, seed: int, threads: int = 1) -> list[SweepRow]:
    """One compare() per grid point with the perturbed model and the frozen
    stack; points whose parameters leave the validity domain are marked
    invalid instead of failing the sweep."""
    names = SWEEP_PARAMETERS.get(type(base_model))
    if names is None:
        raise ValidationError(f"unknown model type {type(base_model).__name__}")
    if spec.parameter not in names:
        raise ValidationError(
            f"sweep parameter {spec.parameter!r} not available for this model; "
            f"choose from {names}"
        )
    base_value = _base_value(base_model, spec.parameter)

    def run(factor: float) -> SweepRow:
        try:
            model = _perturbed_model(base_model, spec.parameter, factor)
        except ValidationError:
            return SweepRow(spec.parameter, base_value * factor, None)
        report = compare(model, payoff, grid, stack, n_paths, seed)
        return SweepRow(spec.parameter, base_value * factor, report)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(run, spec.rel_grid))
    return [run(f) for f in spec.rel_grid]


def _base_value(model, parameter: str) -> float:
    if isinstance(model, BachelierParams) or parameter == "x0":
        return float(getattr(model, parameter))
    return float(getattr(model.chi, parameter))


def histogram(values, n_bins: int, log_scale: bool = False):
    """Equal-width bin counts over [min, max]; with ``log_scale`` the binning
    (and the reported edges) live in the log10 domain. Returns a list of
    (bin_left, bin_right, count) with counts summing to len(values)."""
    values = np.asarray(values, dtype=np.float64)
    if n_bins < 1:
        raise ValidationError(f"n_bins must be >= 1, got {n_bins}")
    if values.size == 0:
        raise ValidationError("histogram needs at least one value")
    if log_scale:
        if np.any(values <= 0.0):
            raise ValidationError("log-scale histogram requires strictly positive values")
        values = np.log10(values)
    counts, edges = np.histogram(values, bins=n_bins)
    return [
        (float(edges[i]), float(edges[i + 1]), int(counts[i]))
        for i in range(n_bins)
    ]


def theoretical_terminal_density(model, grid: TimeGrid, x_grid):
    """Closed-form terminal density of the simulated scheme under the base
    measure: normal for Bachelier, exact lognormal for a flat-smile local-vol
    scheme (whose log-Euler construction has no Ito correction)."""
    x_grid = np.asarray(x_grid, dtype=np.float64)
    if isinstance(model, BachelierParams):
        scale = model.sigma * math.sqrt(grid.maturity)
        dens = norm.pdf(x_grid, loc=model.x0, scale=scale)
    elif isinstance(model, LocalVolParams):
        if model.chi.b != 0.0:
            raise ValidationError(
                "no closed form for the terminal density of a non-flat local-vol surface"
            )
        s = math.sqrt(model.chi.a * grid.maturity)
        dens = np.where(
            x_grid > 0.0,
            norm.pdf((np.log(np.maximum(x_grid, 1e-300)) - math.log(model.x0)) / s)
            / (np.maximum(x_grid, 1e-300) * s),
            0.0,
        )
    else:
        raise ValidationError(f"unknown model type {type(model).__name__}")
    return [(float(x), float(d)) for x, d in zip(x_grid, dens)]


# -- CSV writers -------------------------------------------------------------------

def write_report_csv(path, report: EvalReport):
    fields = ["price_plain", "std_plain", "se_plain", "price_is", "std_is",
              "se_is", "std_ratio", "variance_ratio", "n_paths"]
    data = report.as_dict()
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(fields)
        writer.writerow([
            f"{data[f]:.17g}" if f != "n_paths" else str(data[f]) for f in fields
        ])


def write_sweep_csv(path, rows: list[SweepRow]):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["param", "value", "price_plain", "std_plain",
                         "price_is", "std_is", "std_ratio", "valid"])
        for row in rows:
            if row.report is None:
                writer.writerow([row.parameter, f"{row.value:.17g}", "", "", "", "", "", "false"])
            else:
                r = row.report
                writer.writerow([
                    row.parameter, f"{row.value:.17g}",
                    f"{r.price_plain:.17g}", f"{r.std_plain:.17g}",
                    f"{r.price_is:.17g}", f"{r.std_is:.17g}",
                    f"{r.std_ratio:.17g}", "true",
                ])


def write_histogram_csv(path, bins):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["bin_left", "bin_right", "count"])
        for left, right, count in bins:
            writer.writerow([f"{left:.17g}", f"{right:.17g}", str(count)])
