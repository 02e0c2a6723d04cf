import math

import numpy as np
import pytest

import driftmc.evaluation as evaluation
from driftmc.diffusion import BachelierParams, LocalVolParams, TimeGrid, simulate
from driftmc.drift_nets import init_stack
from driftmc.errors import ValidationError
from driftmc.evaluation import (
    SweepSpec,
    compare,
    histogram,
    sweep,
    theoretical_terminal_density,
    write_histogram_csv,
    write_report_csv,
    write_sweep_csv,
)
from driftmc.payoffs import CallSpec
from driftmc.volsurface import SviParams
from driftmc import rng

CALL = CallSpec(K=1.4)


@pytest.fixture
def grid():
    return TimeGrid(maturity=1.0, n_steps=6)


@pytest.fixture
def bach():
    return BachelierParams(x0=1.0, sigma=0.2)


class TestCompare:
    def test_null_stack_gives_unit_ratio_exactly(self, bach, grid):
        report = compare(bach, CALL, grid, None, 20000, seed=3)
        assert report.price_is == report.price_plain
        assert report.std_is == report.std_plain
        assert report.variance_ratio == 1.0
        assert report.std_ratio == 1.0

    def test_prices_agree_within_combined_error(self, bach, grid):
        stack = init_stack(grid, "full", seed=15, x0_reference=1.0)
        report = compare(bach, CALL, grid, stack, 100000, seed=5)
        gap = abs(report.price_is - report.price_plain)
        assert gap <= 3.0 * math.hypot(report.se_is, report.se_plain)

    def test_variance_ratio_is_squared_std_ratio(self, bach, grid):
        stack = init_stack(grid, "full", seed=15, x0_reference=1.0)
        report = compare(bach, CALL, grid, stack, 20000, seed=5)
        assert report.variance_ratio == report.std_ratio**2

    def test_block_partition_independence(self, bach, grid, monkeypatch):
        stack = init_stack(grid, "full", seed=15, x0_reference=1.0)
        whole = compare(bach, CALL, grid, stack, 50000, seed=5)
        monkeypatch.setattr(evaluation, "EVAL_BLOCK", 7001)
        blocked = compare(bach, CALL, grid, stack, 50000, seed=5)
        assert blocked.price_is == pytest.approx(whole.price_is, rel=1e-12)
        assert blocked.std_is == pytest.approx(whole.std_is, rel=1e-12)

    def test_report_csv_round_trips(self, bach, grid, tmp_path):
        report = compare(bach, CALL, grid, None, 1000, seed=3)
        out = tmp_path / "report.csv"
        write_report_csv(out, report)
        header, row = out.read_text().strip().split("\n")
        cells = dict(zip(header.split(","), row.split(",")))
        assert float(cells["price_plain"]) == report.price_plain
        assert cells["n_paths"] == "1000"


class TestSweep:
    def test_identity_point_bit_matches_compare(self, bach, grid):
        stack = init_stack(grid, "full", seed=15, x0_reference=1.0)
        base = compare(bach, CALL, grid, stack, 20000, seed=5)
        rows = sweep(bach, CALL, grid, stack, SweepSpec("sigma", (0.8, 1.0, 1.2)),
                     20000, seed=5)
        mid = rows[1]
        assert mid.value == 0.2
        assert mid.report.price_is == base.price_is
        assert mid.report.std_plain == base.std_plain
        assert mid.report.std_is == base.std_is

    def test_rho_half_span_stays_valid(self, grid):
        chi = SviParams(a=0.05, b=0.15, rho=0.4, m=0.3, sigma=0.45)
        model = LocalVolParams(x0=1.0, chi=chi)
        stack = init_stack(grid, "full", seed=15, x0_reference=1.0)
        rows = sweep(model, CALL, grid, stack, SweepSpec.symmetric("rho", 0.5, 5),
                     2000, seed=5)
        assert all(r.valid for r in rows)
        assert [round(r.value, 3) for r in rows] == [0.2, 0.3, 0.4, 0.5, 0.6]

    def test_invalid_points_are_marked_not_fatal(self, grid):
        chi = SviParams(a=0.05, b=0.15, rho=0.8, m=0.3, sigma=0.45)
        model = LocalVolParams(x0=1.0, chi=chi)
        stack = init_stack(grid, "full", seed=15, x0_reference=1.0)
        rows = sweep(model, CALL, grid, stack, SweepSpec("rho", (1.0, 1.3)),
                     1000, seed=5)
        assert rows[0].valid
        assert not rows[1].valid  # rho = 1.04 breaks |rho| < 1

    def test_threads_do_not_change_results(self, bach, grid):
        stack = init_stack(grid, "full", seed=15, x0_reference=1.0)
        spec = SweepSpec.symmetric("sigma", 0.5, 5)
        serial = sweep(bach, CALL, grid, stack, spec, 10000, seed=5, threads=1)
        threaded = sweep(bach, CALL, grid, stack, spec, 10000, seed=5, threads=4)
        for a, b in zip(serial, threaded):
            assert a.value == b.value
            assert a.report.price_is == b.report.price_is
            assert a.report.std_is == b.report.std_is

    def test_unknown_parameter_rejected(self, bach, grid):
        stack = init_stack(grid, "full", seed=15, x0_reference=1.0)
        with pytest.raises(ValidationError):
            sweep(bach, CALL, grid, stack, SweepSpec("rho", (1.0,)), 100, seed=5)

    def test_sweep_csv_marks_invalid_rows(self, grid, tmp_path):
        chi = SviParams(a=0.05, b=0.15, rho=0.8, m=0.3, sigma=0.45)
        model = LocalVolParams(x0=1.0, chi=chi)
        stack = init_stack(grid, "full", seed=15, x0_reference=1.0)
        rows = sweep(model, CALL, grid, stack, SweepSpec("rho", (1.0, 1.3)), 500, seed=5)
        out = tmp_path / "sweep.csv"
        write_sweep_csv(out, rows)
        lines = out.read_text().strip().split("\n")
        assert lines[0] == "param,value,price_plain,std_plain,price_is,std_is,std_ratio,valid"
        assert lines[1].endswith("true")
        assert lines[2].endswith("false")


class TestHistogram:
    def test_constant_vector_single_populated_bin(self):
        bins = histogram(np.full(500, 2.5), 7)
        populated = [b for b in bins if b[2] > 0]
        assert len(populated) == 1
        assert populated[0][2] == 500
        assert populated[0][0] <= 2.5 <= populated[0][1]

    def test_null_drift_weights_concentrate_at_log10_zero(self, bach, grid):
        batch = simulate(bach, grid, None, 2000, seed=9, domain=rng.DOMAIN_EVAL_IS)
        bins = histogram(batch.weights, 9, log_scale=True)
        populated = [b for b in bins if b[2] > 0]
        assert len(populated) == 1
        assert populated[0][0] <= 0.0 <= populated[0][1]
        assert populated[0][2] == 2000

    def test_counts_conserve_samples(self):
        values = np.random.default_rng(1).normal(size=4321)
        bins = histogram(values, 31)
        assert sum(b[2] for b in bins) == 4321

    def test_terminal_histogram_mean_near_x0(self, bach, grid):
        batch = simulate(bach, grid, None, 100000, seed=21, domain=rng.DOMAIN_EVAL_PLAIN)
        bins = histogram(batch.terminal, 200)
        mids = np.array([(b[0] + b[1]) / 2 for b in bins])
        counts = np.array([b[2] for b in bins], dtype=float)
        binned_mean = float((mids * counts).sum() / counts.sum())
        se = 0.2 / math.sqrt(batch.n_paths)
        assert abs(binned_mean - 1.0) <= 3 * se + 0.004  # half-bin smearing slack

    def test_log_scale_requires_positive(self):
        with pytest.raises(ValidationError):
            histogram(np.array([1.0, 0.0]), 4, log_scale=True)

    def test_bad_bin_count(self):
        with pytest.raises(ValidationError):
            histogram(np.ones(3), 0)

    def test_csv_format(self, tmp_path):
        bins = histogram(np.array([0.0, 1.0, 2.0, 3.0]), 2)
        out = tmp_path / "h.csv"
        write_histogram_csv(out, bins)
        lines = out.read_text().strip().split("\n")
        assert lines[0] == "bin_left,bin_right,count"
        assert len(lines) == 3


class TestTerminalDensity:
    def test_bachelier_peak_value(self, bach, grid):
        rows = theoretical_terminal_density(bach, grid, [1.0])
        expected = 1.0 / (0.2 * math.sqrt(2 * math.pi))
        assert rows[0][1] == pytest.approx(expected, rel=1e-12)
        assert rows[0][1] == pytest.approx(1.994711, abs=5e-7)

    def test_symmetry(self, bach, grid):
        for delta in (0.1, 0.35, 0.8):
            lo = theoretical_terminal_density(bach, grid, [1.0 - delta])[0][1]
            hi = theoretical_terminal_density(bach, grid, [1.0 + delta])[0][1]
            assert lo == pytest.approx(hi, rel=1e-12)

    def test_integrates_to_one(self, bach, grid):
        xs = np.linspace(1.0 - 1.8, 1.0 + 1.8, 8001)
        dens = np.array([d for _, d in theoretical_terminal_density(bach, grid, xs)])
        assert np.trapezoid(dens, xs) == pytest.approx(1.0, abs=1e-6)

    def test_flat_local_vol_lognormal(self, grid):
        model = LocalVolParams(x0=1.0, chi=SviParams(a=0.04, b=0.0, rho=0.0, m=0.0, sigma=0.1))
        xs = np.linspace(1e-3, 5.0, 20001)
        dens = np.array([d for _, d in theoretical_terminal_density(model, grid, xs)])
        assert np.trapezoid(dens, xs) == pytest.approx(1.0, abs=1e-5)
        # peak of the zero-drift lognormal sits at exp(-s^2) * x0
        peak_x = xs[np.argmax(dens)]
        assert peak_x == pytest.approx(math.exp(-0.04), abs=2e-3)

    def test_smiled_surface_has_no_closed_form(self, grid):
        chi = SviParams(a=0.05, b=0.15, rho=0.4, m=0.3, sigma=0.45)
        with pytest.raises(ValidationError, match="closed form"):
            theoretical_terminal_density(LocalVolParams(x0=1.0, chi=chi), grid, [1.0])
