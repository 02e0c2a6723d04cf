"""The parametrized drift: one small MLP per time step plus a trainable
constant at step 0.

In "full" mode the step-i network reads the whole path prefix
(X_{t_0}, ..., X_{t_i}), centered by the reference spot, so it has i+1 inputs;
in "local" mode it reads only the centered current level. Every network has
two ReLU hidden layers of 16 units and a linear output with no bias. Step 0 is
a single trainable scalar shared by all paths, since every trajectory starts
at the same point.

Weights and biases are both drawn Xavier-uniform (bound sqrt(6/(fan_in +
fan_out)) of the owning layer); the step-0 constant starts at zero.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .autodiff import Tape, Var, affine, flatten, relu, stack_columns, value_of
from .errors import ValidationError

__all__ = [
    "HIDDEN_WIDTH",
    "MlpParams",
    "DriftStack",
    "init_stack",
    "forward",
    "straight_line_prefix",
    "surface",
    "stack_to_dict",
    "stack_from_dict",
    "save_stack",
    "load_stack",
]

HIDDEN_WIDTH = 16
MODES = ("full", "local")


@dataclass
class MlpParams:
    """Parameters of one per-step network; w3 has no companion bias."""

    w1: np.ndarray  # (d_in, 16)
    b1: np.ndarray  # (16,)
    w2: np.ndarray  # (16, 16)
    b2: np.ndarray  # (16,)
    w3: np.ndarray  # (16, 1)

    @property
    def d_in(self) -> int:
        return self.w1.shape[0]

    def arrays(self):
        return (self.w1, self.b1, self.w2, self.b2, self.w3)


@dataclass
class DriftStack:
    """The trainable drift state: step-0 constant plus per-step networks."""

    mode: str
    step0: float
    nets: list  # MlpParams for steps 1 .. n_steps-1
    x0_reference: float
    maturity: float
    n_steps: int

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValidationError(f"drift mode must be one of {MODES}, got {self.mode!r}")
        if len(self.nets) != self.n_steps - 1:
            raise ValidationError(
                f"stack has {len(self.nets)} networks but the grid needs {self.n_steps - 1}"
            )
        for i, net in enumerate(self.nets, start=1):
            want = i + 1 if self.mode == "full" else 1
            if net.w1.shape != (want, HIDDEN_WIDTH):
                raise ValidationError(
                    f"network for step {i} has input dim {net.w1.shape[0]}, expected {want}"
                )

    def forward(self, step_index, inputs):
        return forward(self, step_index, inputs)

    def parameter_arrays(self):
        """All trainable arrays in a fixed order (step0 excluded; it is a
        plain float on the stack)."""
        out = []
        for net in self.nets:
            out.extend(net.arrays())
        return out


def _xavier(rng, shape, fan_in, fan_out):
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=shape)


def init_stack(grid, mode: str, seed: int, x0_reference: float) -> DriftStack:
    """Fresh stack for the given time grid; deterministic in ``seed``."""
    if mode not in MODES:
        raise ValidationError(f"drift mode must be one of {MODES}, got {mode!r}")
    rng = np.random.default_rng(seed)
    nets = []
    for i in range(1, grid.n_steps):
        d_in = i + 1 if mode == "full" else 1
        nets.append(
            MlpParams(
                w1=_xavier(rng, (d_in, HIDDEN_WIDTH), d_in, HIDDEN_WIDTH),
                b1=_xavier(rng, (HIDDEN_WIDTH,), d_in, HIDDEN_WIDTH),
                w2=_xavier(rng, (HIDDEN_WIDTH, HIDDEN_WIDTH), HIDDEN_WIDTH, HIDDEN_WIDTH),
                b2=_xavier(rng, (HIDDEN_WIDTH,), HIDDEN_WIDTH, HIDDEN_WIDTH),
                w3=_xavier(rng, (HIDDEN_WIDTH, 1), HIDDEN_WIDTH, 1),
            )
        )
    return DriftStack(
        mode=mode,
        step0=0.0,
        nets=nets,
        x0_reference=float(x0_reference),
        maturity=grid.maturity,
        n_steps=grid.n_steps,
    )


def zero_stack(grid, mode: str, x0_reference: float) -> DriftStack:
    """All-zero parameters: the drift is identically zero."""
    stack = init_stack(grid, mode, seed=0, x0_reference=x0_reference)
    stack.step0 = 0.0
    for net in stack.nets:
        for arr in net.arrays():
            arr[...] = 0.0
    return stack


def _mlp(inputs, net):
    h = relu(affine(inputs, net.w1, net.b1))
    h = relu(affine(h, net.w2, net.b2))
    return flatten(affine(h, net.w3, None))


def forward(stack, step_index: int, inputs):
    """Drift value(s) at one time step.

    ``inputs`` is an (n_paths, step_index+1) prefix matrix in full mode, the
    (n_paths,) current level in local mode, and is ignored at step 0 where the
    shared constant is returned. Accepts numpy arrays or tape variables.
    """
    if step_index == 0:
        return stack.step0
    if not (1 <= step_index < stack.n_steps):
        raise ValidationError(f"step_index {step_index} outside 1..{stack.n_steps - 1}")
    net = stack.nets[step_index - 1]
    if stack.mode == "full":
        shape = np.shape(value_of(inputs))
        if len(shape) != 2 or shape[1] != step_index + 1:
            raise ValidationError(
                f"full-mode drift at step {step_index} expects a prefix with "
                f"{step_index + 1} columns, got shape {shape}"
            )
        x = inputs
    else:
        shape = np.shape(value_of(inputs))
        if len(shape) == 1:
            x = stack_columns([inputs])
        elif len(shape) == 2 and shape[1] == 1:
            x = inputs
        else:
            raise ValidationError(
                f"local-mode drift expects the last value only, got shape {shape}"
            )
    return _mlp(x - stack.x0_reference, net)


def straight_line_prefix(x0: float, t_index: int, x: float, grid) -> np.ndarray:
    """Prefix of a path that starts at x0 and moves linearly to x at node
    ``t_index``: X_{t_j} = x0 + (j / t_index) (x - x0)."""
    if not (1 <= t_index <= grid.n_steps - 1):
        raise ValidationError(f"t_index {t_index} outside 1..{grid.n_steps - 1}")
    j = np.arange(t_index + 1, dtype=np.float64)
    return x0 + (j / t_index) * (x - x0)


def surface(stack: DriftStack, grid, x_min: float, x_max: float, n_x: int):
    """Tabulate the drift on straight-line trajectories (full mode) or on the
    level alone (local mode).

    Returns (rows, step0) where rows are (t, x, a) for t_index = 1 ..
    n_steps-1; the step-0 constant is reported separately since it does not
    depend on x.
    """
    if n_x < 2:
        raise ValidationError(f"n_x must be >= 2, got {n_x}")
    if not (x_min < x_max):
        raise ValidationError(f"x_min must be < x_max, got [{x_min}, {x_max}]")
    xs = np.linspace(x_min, x_max, n_x)
    rows = []
    for t_index in range(1, grid.n_steps):
        t = t_index * grid.dt
        if stack.mode == "full":
            prefix = np.empty((n_x, t_index + 1))
            for i, x in enumerate(xs):
                prefix[i] = straight_line_prefix(stack.x0_reference, t_index, float(x), grid)
            a = forward(stack, t_index, prefix)
        else:
            a = forward(stack, t_index, xs)
        for x, av in zip(xs, np.asarray(a, dtype=np.float64)):
            rows.append((float(t), float(x), float(av)))
    return rows, float(stack.step0)


# -- tape mirroring -------------------------------------------------------------

@dataclass
class TapeStack:
    """Mirror of a DriftStack whose leaves are tape parameters."""

    mode: str
    step0: Var
    nets: list
    x0_reference: float
    maturity: float
    n_steps: int


def tape_parameters(stack: DriftStack, tape: Tape) -> TapeStack:
    """Register every parameter of ``stack`` on ``tape`` (fixed order: step0,
    then per step w1, b1, w2, b2, w3)."""
    step0 = tape.parameter(stack.step0)
    nets = [
        MlpParams(
            w1=tape.parameter(net.w1),
            b1=tape.parameter(net.b1),
            w2=tape.parameter(net.w2),
            b2=tape.parameter(net.b2),
            w3=tape.parameter(net.w3),
        )
        for net in stack.nets
    ]
    return TapeStack(
        mode=stack.mode,
        step0=step0,
        nets=nets,
        x0_reference=stack.x0_reference,
        maturity=stack.maturity,
        n_steps=stack.n_steps,
    )


# -- serialization ----------------------------------------------------------------

def stack_to_dict(stack: DriftStack) -> dict:
    return {
        "mode": stack.mode,
        "grid": {"maturity": stack.maturity, "n_steps": stack.n_steps},
        "x0_reference": stack.x0_reference,
        "step0": stack.step0,
        "nets": [
            {
                "w1": net.w1.tolist(),
                "b1": net.b1.tolist(),
                "w2": net.w2.tolist(),
                "b2": net.b2.tolist(),
                "w3": net.w3.tolist(),
            }
            for net in stack.nets
        ],
    }


def stack_from_dict(data: dict) -> DriftStack:
    try:
        nets = [
            MlpParams(
                w1=np.asarray(net["w1"], dtype=np.float64),
                b1=np.asarray(net["b1"], dtype=np.float64),
                w2=np.asarray(net["w2"], dtype=np.float64),
                b2=np.asarray(net["b2"], dtype=np.float64),
                w3=np.asarray(net["w3"], dtype=np.float64),
            )
            for net in data["nets"]
        ]
        return DriftStack(
            mode=data["mode"],
            step0=float(data["step0"]),
            nets=nets,
            x0_reference=float(data["x0_reference"]),
            maturity=float(data["grid"]["maturity"]),
            n_steps=int(data["grid"]["n_steps"]),
        )
    except (KeyError, TypeError) as err:
        raise ValidationError(f"malformed stack file: missing or bad field {err}") from err


def save_stack(path, stack: DriftStack):
    with open(path, "w") as fh:
        json.dump(stack_to_dict(stack), fh, indent=1)
        fh.write("\n")


def load_stack(path) -> DriftStack:
    with open(path) as fh:
        return stack_from_dict(json.load(fh))
