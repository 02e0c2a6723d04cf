import json

import numpy as np
import pytest

from driftmc.autodiff import Tape
from driftmc.diffusion import TimeGrid
from driftmc.drift_nets import (
    HIDDEN_WIDTH,
    forward,
    init_stack,
    load_stack,
    save_stack,
    stack_from_dict,
    stack_to_dict,
    straight_line_prefix,
    surface,
    tape_parameters,
    zero_stack,
)
from driftmc.errors import ValidationError


@pytest.fixture
def grid():
    return TimeGrid(maturity=1.0, n_steps=4)


class TestInit:
    def test_step0_starts_at_zero(self, grid):
        stack = init_stack(grid, "full", seed=3, x0_reference=1.0)
        assert stack.step0 == 0.0

    def test_network_count_and_input_dims(self, grid):
        full = init_stack(grid, "full", seed=3, x0_reference=1.0)
        local = init_stack(grid, "local", seed=3, x0_reference=1.0)
        assert len(full.nets) == len(local.nets) == grid.n_steps - 1
        assert [n.d_in for n in full.nets] == [2, 3, 4]
        assert [n.d_in for n in local.nets] == [1, 1, 1]

    def test_xavier_bounds(self, grid):
        stack = init_stack(grid, "full", seed=12, x0_reference=1.0)
        for net in stack.nets:
            d_in = net.d_in
            for arr, fan in [
                (net.w1, (d_in, HIDDEN_WIDTH)),
                (net.b1, (d_in, HIDDEN_WIDTH)),
                (net.w2, (HIDDEN_WIDTH, HIDDEN_WIDTH)),
                (net.b2, (HIDDEN_WIDTH, HIDDEN_WIDTH)),
                (net.w3, (HIDDEN_WIDTH, 1)),
            ]:
                bound = np.sqrt(6.0 / sum(fan))
                assert np.all(np.abs(arr) <= bound)

    def test_same_seed_identical_stacks(self, grid):
        a = init_stack(grid, "full", seed=9, x0_reference=1.0)
        b = init_stack(grid, "full", seed=9, x0_reference=1.0)
        assert a.step0 == b.step0
        for na, nb in zip(a.nets, b.nets):
            for xa, xb in zip(na.arrays(), nb.arrays()):
                assert np.array_equal(xa, xb)

    def test_different_seed_differs(self, grid):
        a = init_stack(grid, "full", seed=9, x0_reference=1.0)
        b = init_stack(grid, "full", seed=10, x0_reference=1.0)
        assert not np.array_equal(a.nets[0].w1, b.nets[0].w1)


class TestForward:
    def test_zero_parameters_give_zero_drift(self, grid):
        stack = zero_stack(grid, "full", x0_reference=1.0)
        prefix = np.random.default_rng(0).normal(1.0, 0.1, size=(7, 3))
        out = forward(stack, 2, prefix)
        assert np.array_equal(out, np.zeros(7))

    def test_step0_returns_constant_regardless_of_inputs(self, grid):
        stack = init_stack(grid, "full", seed=4, x0_reference=1.0)
        stack.step0 = 0.37
        assert forward(stack, 0, None) == 0.37
        assert forward(stack, 0, np.ones((5, 1))) == 0.37

    def test_inputs_at_reference_reduce_to_bias_chain(self, grid):
        # prefix == x0 leaves only the bias path:
        # w3' relu(w2' relu(b1) + b2)
        stack = init_stack(grid, "full", seed=8, x0_reference=1.0)
        net = stack.nets[1]
        expected = (
            np.maximum(np.maximum(net.b1, 0.0) @ net.w2 + net.b2, 0.0) @ net.w3
        )[0]
        out = forward(stack, 2, np.full((3, 3), 1.0))
        assert np.allclose(out, expected, rtol=1e-14)

    def test_arity_mismatch_rejected(self, grid):
        stack = init_stack(grid, "full", seed=4, x0_reference=1.0)
        with pytest.raises(ValidationError):
            forward(stack, 2, np.ones((5, 2)))  # needs 3 columns
        local = init_stack(grid, "local", seed=4, x0_reference=1.0)
        with pytest.raises(ValidationError):
            forward(local, 2, np.ones((5, 3)))
        with pytest.raises(ValidationError):
            forward(stack, grid.n_steps, np.ones((5, 5)))

    def test_local_mode_sees_only_last_value(self, grid):
        stack = init_stack(grid, "local", seed=6, x0_reference=1.0)
        xs = np.array([0.7, 1.0, 1.4])
        direct = forward(stack, 2, xs)
        again = forward(stack, 2, xs.reshape(-1, 1))
        assert np.array_equal(direct, again)

    def test_full_mode_depends_on_early_coordinates(self, grid):
        # the wiring must pass the whole prefix, not just the last value
        stack = init_stack(grid, "full", seed=21, x0_reference=1.0)
        a = np.array([[1.0, 1.1, 1.2]])
        b = np.array([[0.8, 0.9, 1.2]])  # same last value, different history
        assert forward(stack, 2, a)[0] != forward(stack, 2, b)[0]

    def test_piecewise_linear_in_inputs(self, grid):
        # along a 1-d slice the second difference vanishes except at kinks
        stack = init_stack(grid, "full", seed=13, x0_reference=1.0)
        xs = np.linspace(0.5, 1.5, 801)
        prefix = np.column_stack([np.full_like(xs, 1.0), np.full_like(xs, 1.05), xs])
        vals = forward(stack, 2, prefix)
        second = np.abs(vals[2:] - 2 * vals[1:-1] + vals[:-2])
        flat = second < 1e-10
        assert flat.sum() > 0.9 * flat.size  # linear almost everywhere
        assert (~flat).sum() <= 64  # at most twice the hidden unit count


class TestStraightLinePrefix:
    def test_constant_when_target_equals_start(self, grid):
        assert np.array_equal(straight_line_prefix(1.0, 3, 1.0, grid), np.ones(4))

    def test_linear_interpolation(self, grid):
        got = straight_line_prefix(1.0, 2, 1.4, grid)
        assert got == pytest.approx([1.0, 1.2, 1.4], abs=1e-15)

    def test_single_step(self, grid):
        assert np.array_equal(straight_line_prefix(1.0, 1, 1.7, grid), [1.0, 1.7])

    def test_index_out_of_range(self, grid):
        with pytest.raises(ValidationError):
            straight_line_prefix(1.0, 0, 1.4, grid)
        with pytest.raises(ValidationError):
            straight_line_prefix(1.0, grid.n_steps, 1.4, grid)


class TestSurface:
    def test_zero_stack_surface_is_zero(self, grid):
        stack = zero_stack(grid, "full", x0_reference=1.0)
        rows, step0 = surface(stack, grid, 0.5, 1.5, 11)
        assert step0 == 0.0
        assert len(rows) == (grid.n_steps - 1) * 11
        assert all(r[2] == 0.0 for r in rows)

    def test_local_surface_matches_direct_forward(self, grid):
        stack = init_stack(grid, "local", seed=5, x0_reference=1.0)
        xs = np.linspace(0.5, 1.5, 7)
        rows, _ = surface(stack, grid, 0.5, 1.5, 7)
        for t_index in range(1, grid.n_steps):
            t = t_index * grid.dt
            direct = forward(stack, t_index, xs)
            got = [r[2] for r in rows if r[0] == t]
            assert np.allclose(got, direct, rtol=1e-15)

    def test_full_surface_uses_straight_line_history(self, grid):
        stack = init_stack(grid, "full", seed=5, x0_reference=1.0)
        rows, _ = surface(stack, grid, 0.5, 1.5, 5)
        t_index = 3
        x = 1.5
        prefix = straight_line_prefix(1.0, t_index, x, grid).reshape(1, -1)
        expected = forward(stack, t_index, prefix)[0]
        got = [r[2] for r in rows if r[0] == t_index * grid.dt and r[1] == x]
        assert got == [pytest.approx(expected, rel=1e-15)]

    def test_bad_grid_rejected(self, grid):
        stack = zero_stack(grid, "full", x0_reference=1.0)
        with pytest.raises(ValidationError):
            surface(stack, grid, 1.0, 1.0, 5)
        with pytest.raises(ValidationError):
            surface(stack, grid, 0.5, 1.5, 1)


class TestSerialization:
    def test_round_trip_is_value_exact(self, grid, tmp_path):
        stack = init_stack(grid, "full", seed=77, x0_reference=1.0)
        stack.step0 = -0.123456789123456789
        path = tmp_path / "stack.json"
        save_stack(path, stack)
        loaded = load_stack(path)
        assert loaded.mode == stack.mode
        assert loaded.step0 == stack.step0
        assert (loaded.maturity, loaded.n_steps) == (stack.maturity, stack.n_steps)
        assert loaded.x0_reference == stack.x0_reference
        for a, b in zip(stack.nets, loaded.nets):
            for xa, xb in zip(a.arrays(), b.arrays()):
                assert np.array_equal(xa, xb)

    def test_dict_round_trip_through_json_text(self, grid):
        stack = init_stack(grid, "local", seed=2, x0_reference=0.9)
        text = json.dumps(stack_to_dict(stack))
        loaded = stack_from_dict(json.loads(text))
        for a, b in zip(stack.nets, loaded.nets):
            assert np.array_equal(a.w1, b.w1)

    def test_malformed_file_rejected(self):
        with pytest.raises(ValidationError):
            stack_from_dict({"mode": "full"})


class TestTapeParameters:
    def test_mirrors_shapes_and_registers_in_order(self, grid):
        stack = init_stack(grid, "full", seed=1, x0_reference=1.0)
        tape = Tape()
        tstack = tape_parameters(stack, tape)
        assert tstack.step0.index == 0
        n_params = 1 + 5 * len(stack.nets)
        assert len(tape._param_indices) == n_params
        for net, tnet in zip(stack.nets, tstack.nets):
            assert tnet.w1.value.shape == net.w1.shape
            assert np.array_equal(tnet.w1.value, net.w1)


class TestTrainedSurface:
    def test_trained_call_surface_is_positive(self, trained_bachelier_call, grid6):
        # a call needs upward-drifted trajectories, so the learned drift
        # surface should not dip meaningfully below zero anywhere
        rows, step0 = surface(trained_bachelier_call.stack, grid6, 0.1, 1.9, 41)
        assert min(r[2] for r in rows) >= -0.05
        assert step0 > 0.0
