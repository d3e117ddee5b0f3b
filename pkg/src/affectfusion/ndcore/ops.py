"""Differentiable primitives over :class:`~affectfusion.ndcore.tensor.Tensor`."""

from __future__ import annotations

import builtins
from typing import Sequence

import numpy as np

from .tensor import (
    DegenerateInputError,
    DimensionError,
    DomainError,
    Tensor,
    as_tensor,
    make_op,
)

__all__ = [
    "add", "sub", "mul", "div", "scale", "power", "square", "sqrt",
    "sigmoid", "tanh", "relu", "exp", "log", "elementwise",
    "matmul", "bmm", "linear", "bias_add",
    "sum", "mean", "softmax", "log_softmax",
    "reshape", "transpose", "concat", "stack", "getitem",
]


# ---------------------------------------------------------------- elementwise

def _binary_operands(a, b, name):
    a, b = as_tensor(a), as_tensor(b)
    if a.shape != b.shape and a.ndim != 0 and b.ndim != 0:
        raise DimensionError(
            f"{name}: shapes {a.shape} and {b.shape} differ; only scalar broadcast is supported"
        )
    return a, b


def _reduce_to(g: np.ndarray, shape: tuple) -> np.ndarray:
    if g.shape == shape:
        return g
    return np.asarray(g.sum()).reshape(shape)


def add(a, b) -> Tensor:
    a, b = _binary_operands(a, b, "add")

    def bw(g):
        return _reduce_to(g, a.shape), _reduce_to(g, b.shape)

    return make_op(a.data + b.data, (a, b), bw, "add")


def sub(a, b) -> Tensor:
    a, b = _binary_operands(a, b, "sub")

    def bw(g):
        return _reduce_to(g, a.shape), _reduce_to(-g, b.shape)

    return make_op(a.data - b.data, (a, b), bw, "sub")


def mul(a, b) -> Tensor:
    a, b = _binary_operands(a, b, "mul")

    def bw(g):
        return _reduce_to(g * b.data, a.shape), _reduce_to(g * a.data, b.shape)

    return make_op(a.data * b.data, (a, b), bw, "mul")


def div(a, b) -> Tensor:
    a, b = _binary_operands(a, b, "div")
    if np.any(b.data == 0):
        raise DomainError("div: division by zero")
    out = a.data / b.data

    def bw(g):
        ga = g / b.data
        return _reduce_to(ga, a.shape), _reduce_to(-ga * out, b.shape)

    return make_op(out, (a, b), bw, "div")


def scale(t, c: float) -> Tensor:
    t = as_tensor(t)
    c = float(c)
    return make_op(t.data * c, (t,), lambda g: (g * c,), "scale")


def power(t, p: float) -> Tensor:
    t = as_tensor(t)
    p = float(p)
    if p != int(p) and np.any(t.data < 0):
        raise DomainError("power: non-integer exponent of negative value")
    out = t.data ** p
    return make_op(out, (t,), lambda g: (g * p * t.data ** (p - 1),), "power")


def square(t) -> Tensor:
    t = as_tensor(t)
    return make_op(t.data * t.data, (t,), lambda g: (2.0 * g * t.data,), "square")


def sqrt(t) -> Tensor:
    t = as_tensor(t)
    if np.any(t.data < 0):
        raise DomainError("sqrt of negative value")
    out = np.sqrt(t.data)
    return make_op(out, (t,), lambda g: (g * 0.5 / out,), "sqrt")


def _stable_sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid(t) -> Tensor:
    t = as_tensor(t)
    s = _stable_sigmoid(t.data)
    return make_op(s, (t,), lambda g: (g * s * (1.0 - s),), "sigmoid")


def tanh(t) -> Tensor:
    t = as_tensor(t)
    y = np.tanh(t.data)
    return make_op(y, (t,), lambda g: (g * (1.0 - y * y),), "tanh")


def relu(t) -> Tensor:
    t = as_tensor(t)
    m = t.data > 0
    return make_op(t.data * m, (t,), lambda g: (g * m,), "relu")


def exp(t) -> Tensor:
    t = as_tensor(t)
    with np.errstate(over="raise"):
        try:
            y = np.exp(t.data)
        except FloatingPointError:
            raise DomainError("exp overflow") from None
    return make_op(y, (t,), lambda g: (g * y,), "exp")


def log(t) -> Tensor:
    t = as_tensor(t)
    if np.any(t.data <= 0):
        raise DomainError("log requires strictly positive input")
    return make_op(np.log(t.data), (t,), lambda g: (g / t.data,), "log")


_UNARY = {"sigmoid": sigmoid, "tanh": tanh, "relu": relu, "exp": exp, "log": log}
_BINARY = {"add": add, "sub": sub, "mul": mul}


def elementwise(op: str, *args) -> Tensor:
    """Dispatch by name: add, sub, mul, sigmoid, tanh, relu, exp, log, scale."""
    if op in _UNARY:
        return _UNARY[op](*args)
    if op in _BINARY:
        return _BINARY[op](*args)
    if op == "scale":
        return scale(*args)
    raise ValueError(f"unknown elementwise op {op!r}")


# ---------------------------------------------------------------- products

def matmul(a, b) -> Tensor:
    """2-D matrix product."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul: cannot multiply {a.shape} by {b.shape}")

    def bw(g):
        return g @ b.data.T, a.data.T @ g

    return make_op(a.data @ b.data, (a, b), bw, "matmul")


def bmm(a, b) -> Tensor:
    """Batched product over identical leading dims: (..., m, k) @ (..., k, n)."""
    a, b = as_tensor(a), as_tensor(b)
    if (
        a.ndim < 2
        or a.ndim != b.ndim
        or a.shape[:-2] != b.shape[:-2]
        or a.shape[-1] != b.shape[-2]
    ):
        raise DimensionError(f"bmm: cannot multiply {a.shape} by {b.shape}")

    def bw(g):
        return g @ np.swapaxes(b.data, -1, -2), np.swapaxes(a.data, -1, -2) @ g

    return make_op(a.data @ b.data, (a, b), bw, "bmm")


def linear(x, w, b=None) -> Tensor:
    """Affine map of the last axis: x (..., d_in) @ w (d_in, d_out) + b (d_out,)."""
    x, w = as_tensor(x), as_tensor(w)
    if w.ndim != 2 or x.ndim < 1 or x.shape[-1] != w.shape[0]:
        raise DimensionError(f"linear: input {x.shape} incompatible with weight {w.shape}")
    parents = [x, w]
    out = x.data @ w.data
    if b is not None:
        b = as_tensor(b)
        if b.shape != (w.shape[1],):
            raise DimensionError(f"linear: bias {b.shape} does not match weight {w.shape}")
        out = out + b.data
        parents.append(b)

    def bw(g):
        gx = g @ w.data.T
        x2 = x.data.reshape(-1, w.shape[0])
        g2 = g.reshape(-1, w.shape[1])
        gw = x2.T @ g2
        if b is None:
            return gx, gw
        return gx, gw, g2.sum(axis=0)

    return make_op(out, parents, bw, "linear")


def bias_add(x, b) -> Tensor:
    """Add ``b`` along the trailing dims of ``x`` (``b.shape == x.shape[-b.ndim:]``)."""
    x, b = as_tensor(x), as_tensor(b)
    if b.ndim == 0 or b.ndim > x.ndim or x.shape[x.ndim - b.ndim:] != b.shape:
        raise DimensionError(f"bias_add: {b.shape} is not a trailing shape of {x.shape}")
    lead = tuple(range(x.ndim - b.ndim))

    def bw(g):
        return g, g.sum(axis=lead) if lead else g

    return make_op(x.data + b.data, (x, b), bw, "bias_add")


# ---------------------------------------------------------------- reductions

def _norm_axis(axis, ndim):
    if axis is None:
        return None
    axes = (axis,) if isinstance(axis, int) else tuple(axis)
    out = []
    for ax in axes:
        if not -ndim <= ax < ndim:
            raise DimensionError(f"axis {ax} out of range for rank {ndim}")
        out.append(ax % ndim)
    return tuple(out)


def _count(shape, axes):
    if axes is None:
        return int(np.prod(shape, dtype=np.int64))
    return int(np.prod([shape[a] for a in axes], dtype=np.int64))


def sum(t, axis=None, keepdims: bool = False) -> Tensor:
    t = as_tensor(t)
    axes = _norm_axis(axis, t.ndim)
    if _count(t.shape, axes) == 0:
        raise DegenerateInputError("sum over zero elements")
    out = t.data.sum(axis=axes, keepdims=keepdims)

    def bw(g):
        if axes is not None and not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g, t.shape).copy(),)

    return make_op(np.asarray(out), (t,), bw, "sum")


def mean(t, axis=None, keepdims: bool = False) -> Tensor:
    t = as_tensor(t)
    axes = _norm_axis(axis, t.ndim)
    n = _count(t.shape, axes)
    if n == 0:
        raise DegenerateInputError("mean over zero elements")
    out = t.data.sum(axis=axes, keepdims=keepdims) / n

    def bw(g):
        if axes is not None and not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g / n, t.shape).copy(),)

    return make_op(np.asarray(out), (t,), bw, "mean")


def softmax(t, axis: int = -1) -> Tensor:
    t = as_tensor(t)
    (ax,) = _norm_axis(axis, t.ndim)
    z = t.data - t.data.max(axis=ax, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=ax, keepdims=True)

    def bw(g):
        return (y * (g - (g * y).sum(axis=ax, keepdims=True)),)

    return make_op(y, (t,), bw, "softmax")


# ---------------------------------------------------------------- structure

def reshape(t, shape) -> Tensor:
    t = as_tensor(t)
    try:
        out = t.data.reshape(shape)
    except ValueError as exc:
        raise DimensionError(f"reshape: {t.shape} -> {shape}: {exc}") from None
    return make_op(out, (t,), lambda g: (g.reshape(t.shape),), "reshape")


def transpose(t, axes=None) -> Tensor:
    t = as_tensor(t)
    if axes is None:
        axes = tuple(reversed(range(t.ndim)))
    axes = tuple(axes)
    inv = tuple(np.argsort(axes))
    return make_op(np.transpose(t.data, axes), (t,), lambda g: (np.transpose(g, inv),), "transpose")


def concat(tensors: Sequence, axis: int = -1) -> Tensor:
    ts = [as_tensor(t) for t in tensors]
    if not ts:
        raise DimensionError("concat of empty list")
    try:
        out = np.concatenate([t.data for t in ts], axis=axis)
    except ValueError as exc:
        raise DimensionError(f"concat: {[t.shape for t in ts]}: {exc}") from None
    ax = axis % out.ndim
    bounds = np.cumsum([t.shape[ax] for t in ts])[:-1]

    def bw(g):
        return tuple(np.split(g, bounds, axis=ax))

    return make_op(out, ts, bw, "concat")


def stack(tensors: Sequence, axis: int = 0) -> Tensor:
    ts = [as_tensor(t) for t in tensors]
    if not ts:
        raise DimensionError("stack of empty list")
    try:
        out = np.stack([t.data for t in ts], axis=axis)
    except ValueError as exc:
        raise DimensionError(f"stack: {[t.shape for t in ts]}: {exc}") from None
    ax = axis % out.ndim

    def bw(g):
        return tuple(np.take(g, i, axis=ax) for i in range(len(ts)))

    return make_op(out, ts, bw, "stack")


def _is_basic_index(index) -> bool:
    items = index if isinstance(index, tuple) else (index,)
    return builtins.all(
        isinstance(i, (int, np.integer, slice)) or i is None or i is Ellipsis for i in items
    )


def getitem(t, index) -> Tensor:
    t = as_tensor(t)
    out = t.data[index]
    basic = _is_basic_index(index)

    def bw(g):
        full = np.zeros_like(t.data)
        if basic:
            full[index] += g
        else:
            np.add.at(full, index, g)
        return (full,)

    return make_op(np.array(out, dtype=np.float64), (t,), bw, "getitem")


def log_softmax(t, axis: int = -1) -> Tensor:
    t = as_tensor(t)
    (ax,) = _norm_axis(axis, t.ndim)
    z = t.data - t.data.max(axis=ax, keepdims=True)
    out = z - np.log(np.exp(z).sum(axis=ax, keepdims=True))
    y = np.exp(out)

    def bw(g):
        return (g - y * g.sum(axis=ax, keepdims=True),)

    return make_op(out, (t,), bw, "log_softmax")
