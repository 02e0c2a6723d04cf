"""Reverse-mode differentiation over the small op set used by the simulation
and training graphs.

A :class:`Tape` records operations as they are executed; node values are
float64 scalars or arrays (one entry per Monte Carlo path), and every recorded
op keeps its operand indices plus a pullback closure with the cached values it
needs. A single :meth:`Tape.backward` sweep then yields exact gradients of a
scalar loss with respect to every registered parameter, for a fixed noise
realization.

The free functions ``exp``, ``log``, ``sqrt``, ``square`` and ``relu`` accept
either a :class:`Var` or a plain number/array, so the same formula code runs
both on the tape (training) and in plain numpy (pricing, finite-difference
checks).

Conventions:
  - everything is float64; non-finite results are a hard error,
  - the ReLU derivative at exactly 0 is 0,
  - backward visits nodes in reverse creation order with a fixed reduction
    order, so identical tapes give bit-identical gradient maps.
"""

from __future__ import annotations

import numpy as np

from .errors import NumericalError

__all__ = [
    "Tape",
    "Var",
    "backward",
    "exp",
    "log",
    "sqrt",
    "square",
    "relu",
    "affine",
    "stack_columns",
    "value_of",
]


def _unbroadcast(grad, shape):
    """Sum ``grad`` over the axes that numpy broadcasting expanded so it
    matches the operand's original ``shape``."""
    grad = np.asarray(grad, dtype=np.float64)
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, (g, s) in enumerate(zip(grad.shape, shape)) if s == 1 and g != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


class Var:
    """Handle to one node on a tape."""

    __slots__ = ("tape", "index")
    # Keep numpy from consuming Var operands in ufuncs; arithmetic must go
    # through our operators so the op gets recorded.
    __array_ufunc__ = None

    def __init__(self, tape: "Tape", index: int):
        self.tape = tape
        self.index = index

    @property
    def value(self) -> np.ndarray:
        return self.tape.values[self.index]

    @property
    def shape(self):
        return self.tape.values[self.index].shape

    def __repr__(self):
        return f"Var(node={self.index}, value={self.value!r})"

    def __add__(self, other):
        return self.tape._add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return self.tape._sub(self, other)

    def __rsub__(self, other):
        return self.tape._rsub(self, other)

    def __mul__(self, other):
        return self.tape._mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return self.tape._div(self, other)

    def __rtruediv__(self, other):
        return self.tape._rdiv(self, other)

    def __neg__(self):
        return self.tape._neg(self)

    def sum(self):
        return self.tape._sum(self)

    def mean(self):
        return self.tape._mean(self)


class Tape:
    """Append-only operation record with per-node adjoint accumulators."""

    def __init__(self):
        self.ops: list[str] = []
        self.parents: list[tuple[int, ...]] = []
        self.values: list[np.ndarray] = []
        self.pullbacks: list = []
        self.adjoints: list = []
        self._param_indices: list[int] = []

    # -- node recording ----------------------------------------------------

    def _record(self, op, parents, value, pullback) -> Var:
        value = np.asarray(value, dtype=np.float64)
        if not np.all(np.isfinite(value)):
            raise NumericalError(
                f"op '{op}' produced a non-finite value at node {len(self.values)}"
            )
        self.ops.append(op)
        self.parents.append(parents)
        self.values.append(value)
        self.pullbacks.append(pullback)
        return Var(self, len(self.values) - 1)

    def constant(self, value) -> Var:
        return self._record("const", (), value, None)

    def parameter(self, value) -> Var:
        var = self._record("param", (), value, None)
        self._param_indices.append(var.index)
        return var

    def _check(self, other):
        if other.tape is not self:
            raise ValueError("operands live on different tapes")

    @staticmethod
    def _const_value(x):
        return np.asarray(x, dtype=np.float64)

    # -- arithmetic ----------------------------------------------------------

    def _add(self, a: Var, b):
        if isinstance(b, Var):
            self._check(b)
            ash, bsh = a.value.shape, b.value.shape
            return self._record(
                "add", (a.index, b.index), a.value + b.value,
                lambda adj: (_unbroadcast(adj, ash), _unbroadcast(adj, bsh)),
            )
        bv = self._const_value(b)
        ash = a.value.shape
        return self._record(
            "add", (a.index,), a.value + bv,
            lambda adj: (_unbroadcast(adj, ash),),
        )

    def _sub(self, a: Var, b):
        if isinstance(b, Var):
            self._check(b)
            ash, bsh = a.value.shape, b.value.shape
            return self._record(
                "sub", (a.index, b.index), a.value - b.value,
                lambda adj: (_unbroadcast(adj, ash), _unbroadcast(-adj, bsh)),
            )
        bv = self._const_value(b)
        ash = a.value.shape
        return self._record(
            "sub", (a.index,), a.value - bv,
            lambda adj: (_unbroadcast(adj, ash),),
        )

    def _rsub(self, a: Var, b):
        # b - a with b constant
        bv = self._const_value(b)
        ash = a.value.shape
        return self._record(
            "sub", (a.index,), bv - a.value,
            lambda adj: (_unbroadcast(-adj, ash),),
        )

    def _mul(self, a: Var, b):
        if isinstance(b, Var):
            self._check(b)
            av, bv = a.value, b.value
            return self._record(
                "mul", (a.index, b.index), av * bv,
                lambda adj: (_unbroadcast(adj * bv, av.shape), _unbroadcast(adj * av, bv.shape)),
            )
        bv = self._const_value(b)
        av = a.value
        return self._record(
            "mul", (a.index,), av * bv,
            lambda adj: (_unbroadcast(adj * bv, av.shape),),
        )

    def _div(self, a: Var, b):
        bv = b.value if isinstance(b, Var) else self._const_value(b)
        if np.any(bv == 0.0):
            raise NumericalError(f"division by zero at node {len(self.values)}")
        av = a.value
        if isinstance(b, Var):
            self._check(b)
            out = av / bv
            return self._record(
                "div", (a.index, b.index), out,
                lambda adj: (
                    _unbroadcast(adj / bv, av.shape),
                    _unbroadcast(-adj * av / (bv * bv), bv.shape),
                ),
            )
        return self._record(
            "div", (a.index,), av / bv,
            lambda adj: (_unbroadcast(adj / bv, av.shape),),
        )

    def _rdiv(self, a: Var, b):
        # b / a with b constant
        av = a.value
        if np.any(av == 0.0):
            raise NumericalError(f"division by zero at node {len(self.values)}")
        bv = self._const_value(b)
        out = bv / av
        return self._record(
            "div", (a.index,), out,
            lambda adj: (_unbroadcast(-adj * bv / (av * av), av.shape),),
        )

    def _neg(self, a: Var):
        ash = a.value.shape
        return self._record("neg", (a.index,), -a.value, lambda adj: (_unbroadcast(-adj, ash),))

    # -- elementwise functions ------------------------------------------------

    def _exp(self, a: Var):
        out = np.exp(a.value)
        return self._record("exp", (a.index,), out, lambda adj: (adj * out,))

    def _log(self, a: Var):
        av = a.value
        if np.any(av <= 0.0):
            raise NumericalError(f"log of non-positive operand at node {len(self.values)}")
        return self._record("log", (a.index,), np.log(av), lambda adj: (adj / av,))

    def _sqrt(self, a: Var):
        av = a.value
        if np.any(av < 0.0):
            raise NumericalError(f"sqrt of negative operand at node {len(self.values)}")
        out = np.sqrt(av)
        return self._record("sqrt", (a.index,), out, lambda adj: (adj * 0.5 / out,))

    def _square(self, a: Var):
        av = a.value
        return self._record("square", (a.index,), av * av, lambda adj: (adj * (2.0 * av),))

    def _relu(self, a: Var):
        av = a.value
        mask = av > 0.0  # derivative at exactly 0 is 0
        return self._record(
            "relu", (a.index,), np.maximum(av, 0.0), lambda adj: (adj * mask,)
        )

    # -- reductions ------------------------------------------------------------

    def _sum(self, a: Var):
        ash = a.value.shape
        return self._record(
            "sum", (a.index,), np.sum(a.value),
            lambda adj: (np.broadcast_to(adj, ash).astype(np.float64, copy=True),),
        )

    def _mean(self, a: Var):
        ash = a.value.shape
        n = a.value.size
        return self._record(
            "mean", (a.index,), np.mean(a.value),
            lambda adj: (np.broadcast_to(adj / n, ash).astype(np.float64, copy=True),),
        )

    # -- structural ops ----------------------------------------------------------

    def _stack_columns(self, cols):
        var_positions = []
        vals = []
        for j, c in enumerate(cols):
            if isinstance(c, Var):
                self._check(c)
                var_positions.append(j)
                vals.append(c.value)
            else:
                vals.append(self._const_value(c))
        for v in vals:
            if v.ndim != 1:
                raise ValueError("stack_columns expects 1-d columns")
        out = np.column_stack(vals)
        parents = tuple(cols[j].index for j in var_positions)
        positions = tuple(var_positions)

        def pullback(adj):
            return tuple(adj[:, j] for j in positions)

        return self._record("stack", parents, out, pullback)

    def _affine(self, x, w, b):
        """x @ w + b with any mix of Var and constant operands."""
        xv = x.value if isinstance(x, Var) else self._const_value(x)
        wv = w.value if isinstance(w, Var) else self._const_value(w)
        out = xv @ wv
        if b is not None:
            bv = b.value if isinstance(b, Var) else self._const_value(b)
            out = out + bv
        parents = []
        grads = []
        if isinstance(x, Var):
            self._check(x)
            parents.append(x.index)
            grads.append(lambda adj: adj @ wv.T)
        if isinstance(w, Var):
            self._check(w)
            parents.append(w.index)
            grads.append(lambda adj: xv.T @ adj)
        if b is not None and isinstance(b, Var):
            self._check(b)
            parents.append(b.index)
            grads.append(lambda adj: adj.sum(axis=0))

        def pullback(adj):
            return tuple(g(adj) for g in grads)

        return self._record("affine", tuple(parents), out, pullback)

    def _flatten(self, a: Var):
        ash = a.value.shape
        return self._record(
            "flatten", (a.index,), a.value.reshape(-1),
            lambda adj: (adj.reshape(ash),),
        )

    # -- backward -----------------------------------------------------------------

    def backward(self, loss: Var) -> dict[int, np.ndarray]:
        """Run the reverse sweep from ``loss`` and return the gradient map
        {parameter node index -> d loss / d parameter}."""
        if not isinstance(loss, Var) or loss.tape is not self:
            raise ValueError("loss is not a node on this tape")
        if np.size(loss.value) != 1:
            raise ValueError("loss must be a scalar node")
        n = len(self.values)
        adjoints: list = [None] * n
        adjoints[loss.index] = np.ones_like(self.values[loss.index])
        for i in range(loss.index, -1, -1):
            adj = adjoints[i]
            if adj is None:
                continue
            pullback = self.pullbacks[i]
            if pullback is None:
                continue
            for p, g in zip(self.parents[i], pullback(adj)):
                if adjoints[p] is None:
                    adjoints[p] = np.array(g, dtype=np.float64)
                else:
                    adjoints[p] = adjoints[p] + g
        self.adjoints = adjoints
        return {
            p: (adjoints[p] if adjoints[p] is not None else np.zeros_like(self.values[p]))
            for p in self._param_indices
        }

    def grad(self, var: Var) -> np.ndarray:
        """Adjoint of ``var`` after :meth:`backward`; exactly 0 for nodes not
        reachable from the loss."""
        a = self.adjoints[var.index]
        return a if a is not None else np.zeros_like(self.values[var.index])


def backward(tape: Tape, loss: Var) -> dict[int, np.ndarray]:
    return tape.backward(loss)


# -- dispatching helpers: accept Var or plain numpy -----------------------------

def value_of(x):
    return x.value if isinstance(x, Var) else x


def exp(x):
    return x.tape._exp(x) if isinstance(x, Var) else np.exp(x)


def log(x):
    if isinstance(x, Var):
        return x.tape._log(x)
    if np.any(np.asarray(x) <= 0.0):
        raise NumericalError("log of non-positive operand")
    return np.log(x)


def sqrt(x):
    if isinstance(x, Var):
        return x.tape._sqrt(x)
    if np.any(np.asarray(x) < 0.0):
        raise NumericalError("sqrt of negative operand")
    return np.sqrt(x)


def square(x):
    return x.tape._square(x) if isinstance(x, Var) else np.square(x)


def relu(x):
    """Positive part max(x, 0); subgradient at 0 is 0."""
    return x.tape._relu(x) if isinstance(x, Var) else np.maximum(x, 0.0)


def affine(x, w, b=None):
    """x @ w (+ b). Falls back to numpy when no operand is on a tape."""
    for operand in (x, w, b):
        if isinstance(operand, Var):
            return operand.tape._affine(x, w, b)
    out = np.asarray(x, dtype=np.float64) @ np.asarray(w, dtype=np.float64)
    if b is not None:
        out = out + np.asarray(b, dtype=np.float64)
    return out


def flatten(x):
    if isinstance(x, Var):
        return x.tape._flatten(x)
    return np.asarray(x).reshape(-1)


def stack_columns(cols):
    """Assemble 1-d columns into an (n_paths, n_cols) matrix."""
    for c in cols:
        if isinstance(c, Var):
            return c.tape._stack_columns(cols)
    return np.column_stack([np.asarray(c, dtype=np.float64) for c in cols])
