"""Dense float64 tensors with reverse-mode differentiation.

Every operation that sees a gradient-bearing input appends one record to a
module-level tape.  ``backward`` replays the tape in reverse, accumulates
vector-Jacobian products into leaf ``grad`` buffers, then clears the tape.
The tape is a single-threaded training context; nothing here is re-entrant.

Binary operations require identical shapes, except that a size-1 operand is
broadcast (the scalar cases).  There is no general broadcasting on purpose:
the shape rules stay small enough to audit.
"""

from __future__ import annotations

import contextlib
import math
from typing import Callable, Sequence

import numpy as np

from .errors import ContractError, DimensionError, DomainError, NumericError

Array = np.ndarray

_GELU_C = math.sqrt(2.0 / math.pi)
_GELU_A = 0.044715

# arccosh arguments this far below 1 are treated as floating-point noise and
# clamped; anything lower is a caller bug.
ARCCOSH_FLOOR = 1.0 + 1e-12
ARCCOSH_NOISE = 1e-9


class _State:
    __slots__ = ("records", "enabled", "finite_checks")

    def __init__(self) -> None:
        self.records: list[tuple] = []
        self.enabled = True
        self.finite_checks = False


_state = _State()


class Tensor:
    """Immutable value node; only ``grad`` mutates after construction."""

    __slots__ = ("data", "requires_grad", "grad", "_leaf")

    def __init__(self, data, requires_grad: bool = False) -> None:
        self.data = np.ascontiguousarray(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad: Array | None = None
        self._leaf = True

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def T(self) -> "Tensor":
        return transpose(self)

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def sum(self, axis=None, keepdims: bool = False) -> "Tensor":
        return reduce_sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims: bool = False) -> "Tensor":
        return reduce_mean(self, axis=axis, keepdims=keepdims)

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(_astensor(other), self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, key):
        return take(self, key)

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.data.shape}{flag})"


def _astensor(x) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=np.float64))


def tape_size() -> int:
    return len(_state.records)


def clear_tape() -> None:
    _state.records.clear()


@contextlib.contextmanager
def no_grad():
    """Suspend tape recording; outputs created inside are constants."""
    prev = _state.enabled
    _state.enabled = False
    try:
        yield
    finally:
        _state.enabled = prev


@contextlib.contextmanager
def finite_checks():
    """Raise NumericError as soon as any op output is non-finite."""
    prev = _state.finite_checks
    _state.finite_checks = True
    try:
        yield
    finally:
        _state.finite_checks = prev


def _emit(name: str, out_data: Array, pairs: Sequence[tuple[Tensor, Callable[[Array], Array] | None]]) -> Tensor:
    out = Tensor(out_data)
    if _state.finite_checks and not np.isfinite(out.data).all():
        raise NumericError(f"non-finite output of op '{name}' with shape {out.data.shape}")
    if _state.enabled and any(p.requires_grad for p, _ in pairs):
        out.requires_grad = True
        out._leaf = False
        parents = tuple(p for p, _ in pairs)
        vjps = tuple(v if p.requires_grad else None for p, v in pairs)
        _state.records.append((name, out, parents, vjps))
    return out


def backward(loss: Tensor) -> None:
    """Accumulate d(loss)/d(leaf) into every reachable leaf, then clear the tape."""
    if loss.data.size != 1:
        raise ContractError(f"backward: loss must be scalar, got shape {loss.data.shape}")
    if not _state.records:
        raise ContractError("backward: tape is empty")
    try:
        adjoint: dict[int, Array] = {id(loss): np.ones_like(loss.data)}
        owner: dict[int, Tensor] = {id(loss): loss}
        for name, out, parents, vjps in reversed(_state.records):
            g = adjoint.pop(id(out), None)
            if g is None:
                continue
            owner.pop(id(out), None)
            for parent, vjp in zip(parents, vjps):
                if vjp is None:
                    continue
                contrib = vjp(g)
                key = id(parent)
                if key in adjoint:
                    adjoint[key] = adjoint[key] + contrib
                else:
                    adjoint[key] = contrib
                    owner[key] = parent
        for key, tensor in owner.items():
            if tensor.requires_grad and tensor._leaf:
                g = adjoint[key]
                tensor.grad = g if tensor.grad is None else tensor.grad + g
    finally:
        clear_tape()


def _scalar_fits(a: Array, b: Array) -> bool:
    return a.shape == b.shape or a.size == 1 or b.size == 1


def _reduce_to(g: Array, shape: tuple[int, ...]) -> Array:
    # shapes only ever differ when the target operand was a broadcast scalar
    if g.shape == shape:
        return g
    return np.sum(g).reshape(shape)


def _binary(name: str, a, b, fwd, da, db) -> Tensor:
    a = _astensor(a)
    b = _astensor(b)
    if not _scalar_fits(a.data, b.data):
        raise DimensionError(f"{name}: shapes {a.data.shape} and {b.data.shape} do not match")
    out = fwd(a.data, b.data)
    return _emit(
        name,
        out,
        [
            (a, lambda g: _reduce_to(da(g, a.data, b.data), a.data.shape)),
            (b, lambda g: _reduce_to(db(g, a.data, b.data), b.data.shape)),
        ],
    )


def add(a, b) -> Tensor:
    return _binary("add", a, b, lambda x, y: x + y, lambda g, x, y: g, lambda g, x, y: g)


def sub(a, b) -> Tensor:
    return _binary("sub", a, b, lambda x, y: x - y, lambda g, x, y: g, lambda g, x, y: -g)


def mul(a, b) -> Tensor:
    """Elementwise product; one operand may be a scalar (size one)."""
    a_t, b_t = _astensor(a), _astensor(b)
    name = "scalar-mul" if (a_t.size == 1 or b_t.size == 1) and a_t.shape != b_t.shape else "elementwise-mul"
    return _binary(name, a_t, b_t, lambda x, y: x * y, lambda g, x, y: g * y, lambda g, x, y: g * x)


def scale(a, c) -> Tensor:
    """Multiply by a scalar constant or a size-1 tensor."""
    c_t = _astensor(c)
    if c_t.size != 1:
        raise DimensionError(f"scalar-mul: scale factor must be size 1, got shape {c_t.data.shape}")
    return mul(a, c_t)


def matmul(a, b) -> Tensor:
    a = _astensor(a)
    b = _astensor(b)
    if a.ndim != 2 or b.ndim != 2 or a.data.shape[1] != b.data.shape[0]:
        raise DimensionError(f"matmul: shapes {a.data.shape} and {b.data.shape} are not composable")
    return _emit(
        "matmul",
        a.data @ b.data,
        [(a, lambda g: g @ b.data.T), (b, lambda g: a.data.T @ g)],
    )


def transpose(a) -> Tensor:
    a = _astensor(a)
    if a.ndim != 2:
        raise DimensionError(f"transpose: expected a matrix, got shape {a.data.shape}")
    return _emit("transpose", a.data.T.copy(), [(a, lambda g: g.T.copy())])


def concat(parts: Sequence, axis: int = 0) -> Tensor:
    tensors = [_astensor(p) for p in parts]
    if not tensors:
        raise ContractError("concat: needs at least one input")
    try:
        out = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError as exc:
        raise DimensionError(f"concat: {exc}") from None
    widths = [t.data.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + widths)

    def make_vjp(i: int):
        lo, hi = offsets[i], offsets[i + 1]
        def vjp(g: Array) -> Array:
            index = [slice(None)] * g.ndim
            index[axis] = slice(lo, hi)
            return g[tuple(index)]
        return vjp

    return _emit("concat", out, [(t, make_vjp(i)) for i, t in enumerate(tensors)])


def take(a, key) -> Tensor:
    """Slice/gather; integers, slices, index lists and 2-tuples thereof."""
    a = _astensor(a)
    try:
        out = np.ascontiguousarray(a.data[key], dtype=np.float64)
    except (IndexError, TypeError) as exc:
        raise DimensionError(f"slice: bad key {key!r} for shape {a.data.shape}: {exc}") from None

    def vjp(g: Array) -> Array:
        z = np.zeros_like(a.data)
        np.add.at(z, key, g)
        return z

    return _emit("slice", out, [(a, vjp)])


def _reduction(name: str, a, axis, keepdims: bool, fwd, grad_expand) -> Tensor:
    a = _astensor(a)
    out = fwd(a.data)
    def vjp(g: Array) -> Array:
        if axis is None:
            return np.broadcast_to(g.reshape((1,) * a.data.ndim), a.data.shape) * grad_expand(a.data)
        gg = g if keepdims else np.expand_dims(g, axis)
        return np.broadcast_to(gg, a.data.shape) * grad_expand(a.data)
    return _emit(name, out, [(a, vjp)])


def reduce_sum(a, axis=None, keepdims: bool = False) -> Tensor:
    return _reduction(
        "sum", a, axis, keepdims,
        lambda x: np.sum(x, axis=axis, keepdims=keepdims),
        lambda x: np.ones_like(x),
    )


def reduce_mean(a, axis=None, keepdims: bool = False) -> Tensor:
    a = _astensor(a)
    n = a.data.size if axis is None else a.data.shape[axis]
    return _reduction(
        "mean", a, axis, keepdims,
        lambda x: np.mean(x, axis=axis, keepdims=keepdims),
        lambda x: np.full_like(x, 1.0 / n),
    )


def squared_norm(a, axis=None, keepdims: bool = False) -> Tensor:
    """Sum of squared entries, optionally per axis."""
    a = _astensor(a)
    out = np.sum(a.data * a.data, axis=axis, keepdims=keepdims)
    def vjp(g: Array) -> Array:
        if axis is None:
            gg = np.broadcast_to(np.asarray(g).reshape((1,) * a.data.ndim), a.data.shape)
        else:
            gg = np.broadcast_to(g if keepdims else np.expand_dims(g, axis), a.data.shape)
        return 2.0 * a.data * gg
    return _emit("squared-norm", np.asarray(out), [(a, vjp)])


def _unary(name: str, a, fwd, deriv) -> Tensor:
    a = _astensor(a)
    out = fwd(a.data)
    return _emit(name, out, [(a, lambda g: g * deriv(a.data, out))])


def exp(a) -> Tensor:
    return _unary("exp", a, np.exp, lambda x, y: y)


def log(a) -> Tensor:
    a = _astensor(a)
    if np.any(a.data <= 0.0):
        raise DomainError("log: argument must be positive")
    return _unary("log", a, np.log, lambda x, y: 1.0 / x)


def sqrt(a) -> Tensor:
    a = _astensor(a)
    if np.any(a.data < 0.0):
        raise DomainError("sqrt: argument must be nonnegative")
    return _unary("sqrt", a, np.sqrt, lambda x, y: 0.5 / np.maximum(y, 1e-300))


def sigmoid(a) -> Tensor:
    def fwd(x: Array) -> Array:
        with np.errstate(over="ignore"):
            pos = 1.0 / (1.0 + np.exp(-np.clip(x, 0.0, None)))
            ez = np.exp(np.clip(x, None, 0.0))
            neg = ez / (1.0 + ez)
        return np.where(x >= 0.0, pos, neg)
    return _unary("sigmoid", a, fwd, lambda x, y: y * (1.0 - y))


def softmax(a, axis: int = 1) -> Tensor:
    a = _astensor(a)
    shifted = a.data - np.max(a.data, axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / np.sum(e, axis=axis, keepdims=True)
    def vjp(g: Array) -> Array:
        return out * (g - np.sum(g * out, axis=axis, keepdims=True))
    return _emit("softmax", out, [(a, vjp)])


def gelu(a) -> Tensor:
    def fwd(x: Array) -> Array:
        return 0.5 * x * (1.0 + np.tanh(_GELU_C * (x + _GELU_A * x**3)))
    def deriv(x: Array, y: Array) -> Array:
        u = _GELU_C * (x + _GELU_A * x**3)
        t = np.tanh(u)
        return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * _GELU_C * (1.0 + 3.0 * _GELU_A * x * x)
    return _unary("gelu", a, fwd, deriv)


def relu(a) -> Tensor:
    return _unary("relu", a, lambda x: np.maximum(x, 0.0), lambda x, y: (x > 0.0).astype(np.float64))


def leaky_relu(a, slope: float) -> Tensor:
    def fwd(x: Array) -> Array:
        return np.where(x > 0.0, x, slope * x)
    def deriv(x: Array, y: Array) -> Array:
        return np.where(x > 0.0, 1.0, slope)
    return _unary("leaky-relu", a, fwd, deriv)


def arccosh(a) -> Tensor:
    """arccosh with the domain floor: noise below 1 is clamped, worse is an error."""
    a = _astensor(a)
    if np.any(a.data < 1.0 - ARCCOSH_NOISE):
        raise DomainError(f"arccosh: argument below 1 by more than {ARCCOSH_NOISE}")
    clamped = np.maximum(a.data, ARCCOSH_FLOOR)
    out = np.arccosh(clamped)
    def vjp(g: Array) -> Array:
        open_region = (a.data >= ARCCOSH_FLOOR).astype(np.float64)
        return g * open_region / np.sqrt(clamped * clamped - 1.0)
    return _emit("arccosh", out, [(a, vjp)])


def cosh(a) -> Tensor:
    return _unary("cosh", a, np.cosh, lambda x, y: np.sinh(x))


def sinh(a) -> Tensor:
    return _unary("sinh", a, np.sinh, lambda x, y: np.cosh(x))


def dropout(a, rate: float, *, training: bool, rng: np.random.Generator | None = None) -> Tensor:
    """Inverted dropout; the identity when not training or rate is zero."""
    a = _astensor(a)
    if not 0.0 <= rate < 1.0:
        raise ContractError(f"dropout: rate must lie in [0, 1), got {rate}")
    if not training or rate == 0.0:
        return a
    if rng is None:
        raise ContractError("dropout: training mode needs an explicit rng")
    mask = (rng.random(a.data.shape) >= rate).astype(np.float64) / (1.0 - rate)
    return _emit("dropout", a.data * mask, [(a, lambda g: g * mask)])


# ---------------------------------------------------------------------------
# Composites built from the primitive set (no new tape record types).

def reciprocal_positive(a) -> Tensor:
    """1/x for strictly positive x, expressed as exp(-log x)."""
    return exp(scale(log(a), -1.0))


def rsqrt_positive(a) -> Tensor:
    """x**-0.5 for strictly positive x."""
    return exp(scale(log(a), -0.5))


def absval(a) -> Tensor:
    """|x| as relu(x) + relu(-x)."""
    return add(relu(a), relu(scale(a, -1.0)))


def clamp(a, lo: float, hi: float) -> Tensor:
    """Clamp into [lo, hi]; gradient is 1 inside the interval, 0 outside."""
    if not lo < hi:
        raise ContractError(f"clamp: need lo < hi, got [{lo}, {hi}]")
    above = add(relu(sub(a, lo)), _astensor(lo))
    return sub(_astensor(hi), relu(sub(_astensor(hi), above)))


def tile_rows(column: Tensor, width: int) -> Tensor:
    """Broadcast a (T, 1) column across ``width`` columns via matmul."""
    if column.ndim != 2 or column.data.shape[1] != 1:
        raise DimensionError(f"tile_rows: expected a column, got shape {column.data.shape}")
    return matmul(column, Tensor(np.ones((1, width))))


def tile_bias(bias: Tensor, rows: int) -> Tensor:
    """Broadcast a (1, D) bias row across ``rows`` rows via matmul."""
    if bias.ndim != 2 or bias.data.shape[0] != 1:
        raise DimensionError(f"tile_bias: expected a row, got shape {bias.data.shape}")
    return matmul(Tensor(np.ones((rows, 1))), bias)


def affine(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """x @ weight plus an optional broadcast bias row."""
    out = matmul(x, weight)
    if bias is not None:
        out = add(out, tile_bias(bias, out.data.shape[0]))
    return out


# ---------------------------------------------------------------------------
# Named-op dispatch.  The names are the stable op vocabulary; attrs carry
# whatever the op needs beyond its tensor inputs.

_OPS: dict[str, Callable] = {
    "matmul": lambda ins, at: matmul(ins[0], ins[1]),
    "add": lambda ins, at: add(ins[0], ins[1]),
    "sub": lambda ins, at: sub(ins[0], ins[1]),
    "elementwise-mul": lambda ins, at: mul(ins[0], ins[1]),
    "scalar-mul": lambda ins, at: scale(ins[0], at["factor"] if "factor" in at else ins[1]),
    "concat": lambda ins, at: concat(ins, axis=at.get("axis", 0)),
    "slice": lambda ins, at: take(ins[0], at["key"]),
    "transpose": lambda ins, at: transpose(ins[0]),
    "sum": lambda ins, at: reduce_sum(ins[0], axis=at.get("axis"), keepdims=at.get("keepdims", False)),
    "mean": lambda ins, at: reduce_mean(ins[0], axis=at.get("axis"), keepdims=at.get("keepdims", False)),
    "exp": lambda ins, at: exp(ins[0]),
    "sqrt": lambda ins, at: sqrt(ins[0]),
    "sigmoid": lambda ins, at: sigmoid(ins[0]),
    "softmax": lambda ins, at: softmax(ins[0], axis=at.get("axis", 1)),
    "gelu": lambda ins, at: gelu(ins[0]),
    "relu": lambda ins, at: relu(ins[0]),
    "leaky-relu": lambda ins, at: leaky_relu(ins[0], at["slope"]),
    "log": lambda ins, at: log(ins[0]),
    "arccosh": lambda ins, at: arccosh(ins[0]),
    "cosh": lambda ins, at: cosh(ins[0]),
    "sinh": lambda ins, at: sinh(ins[0]),
    "squared-norm": lambda ins, at: squared_norm(ins[0], axis=at.get("axis"), keepdims=at.get("keepdims", False)),
    "dropout": lambda ins, at: dropout(ins[0], at["rate"], training=at.get("training", False), rng=at.get("rng")),
}


def op_names() -> tuple[str, ...]:
    return tuple(sorted(_OPS))


def forward_op(name: str, inputs: Sequence[Tensor], attrs: dict | None = None) -> Tensor:
    if name not in _OPS:
        raise ContractError(f"forward_op: unknown op '{name}'")
    return _OPS[name](list(inputs), attrs or {})


# ---------------------------------------------------------------------------
# Gradient oracle.

def finite_diff_grad(f: Callable[[Tensor], float], x: Tensor, h: float = 1e-5) -> Array:
    """Central-difference gradient of a scalar function, element by element."""
    if h <= 0.0:
        raise ContractError(f"finite_diff_grad: step must be positive, got {h}")
    base = x.data
    grad = np.zeros_like(base)
    flat = grad.reshape(-1)
    with no_grad():
        for i in range(base.size):
            probe = base.copy().reshape(-1)
            probe[i] += h
            hi = float(f(Tensor(probe.reshape(base.shape))))
            probe[i] -= 2.0 * h
            lo = float(f(Tensor(probe.reshape(base.shape))))
            if not (math.isfinite(hi) and math.isfinite(lo)):
                raise NumericError(f"finite_diff_grad: non-finite value at element {i}")
            flat[i] = (hi - lo) / (2.0 * h)
    return grad


def grad_close(analytic: Array, numeric: Array, rtol: float = 1e-4, atol: float = 1e-6) -> bool:
    """Relative comparison with an absolute floor, symmetric in both arguments."""
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    if a.shape != n.shape:
        return False
    bound = rtol * np.maximum(np.abs(a), np.abs(n)) + atol
    return bool(np.all(np.abs(a - n) <= bound))


def grad_max_violation(analytic: Array, numeric: Array, rtol: float = 1e-4, atol: float = 1e-6) -> float:
    """Largest ratio of |difference| to its allowed bound; <= 1 means pass."""
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    bound = rtol * np.maximum(np.abs(a), np.abs(n)) + atol
    return float(np.max(np.abs(a - n) / bound)) if a.size else 0.0
