"""Differentiable operations on :class:`Tensor`.

Broadcasting is deliberately limited: ``add_bias`` adds a vector to every row,
``broadcast_to`` expands explicitly, everything else wants equal shapes.
"""
import numpy as np

from .. import _kernels
from ..errors import DimensionError, DomainError
from .tensor import Tensor, as_tensor, record


def _same_shape(a, b, opname):
    if a.shape != b.shape:
        raise DimensionError(f"{opname}: shape mismatch {a.shape} vs {b.shape}")


def _sum_to_shape(g, shape):
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


# -- linear algebra ----------------------------------------------------------


def matmul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul: cannot multiply {a.shape} by {b.shape}")

    def back(g):
        ga = g @ b.data.T if a.requires_grad else None
        gb = a.data.T @ g if b.requires_grad else None
        return ga, gb

    return record(a.data @ b.data, (a, b), back)


def bmm(a, b):
    """Batched matmul over identical leading dimensions."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 3 or a.shape[:-2] != b.shape[:-2] or a.shape[-1] != b.shape[-2]:
        raise DimensionError(f"bmm: cannot multiply {a.shape} by {b.shape}")

    def back(g):
        ga = g @ np.swapaxes(b.data, -1, -2) if a.requires_grad else None
        gb = np.swapaxes(a.data, -1, -2) @ g if b.requires_grad else None
        return ga, gb

    return record(np.matmul(a.data, b.data), (a, b), back)


def typed_linear(x, groups, weights, biases=None):
    """Row-grouped affine map: rows ``groups[k]`` of ``x`` use ``weights[k]``.

    Every row must belong to exactly one group. ``biases`` may be None.
    """
    x = as_tensor(x)
    if x.ndim != 2:
        raise DimensionError(f"typed_linear: expected 2-D input, got {x.shape}")
    weights = list(weights)
    biases = [None] * len(weights) if biases is None else list(biases)
    dout = None
    for w in weights:
        if w.ndim != 2 or w.shape[0] != x.shape[1]:
            raise DimensionError(f"typed_linear: weight {w.shape} does not fit input {x.shape}")
        if dout is not None and w.shape[1] != dout:
            raise DimensionError("typed_linear: weights disagree on output width")
        dout = w.shape[1]
    out = np.empty((x.shape[0], dout))
    for idx, w, b in zip(groups, weights, biases):
        y = x.data[idx] @ w.data
        if b is not None:
            y += b.data
        out[idx] = y

    inputs = (x, *weights, *[b for b in biases if b is not None])

    def back(g):
        gx = np.zeros_like(x.data) if x.requires_grad else None
        gws, gbs = [], []
        for idx, w, b in zip(groups, weights, biases):
            gi = g[idx]
            if gx is not None:
                gx[idx] = gi @ w.data.T
            gws.append(x.data[idx].T @ gi if w.requires_grad else None)
            if b is not None:
                gbs.append(gi.sum(axis=0) if b.requires_grad else None)
        return (gx, *gws, *gbs)

    return record(out, inputs, back)


# -- elementwise ---------------------------------------------------------------


def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _same_shape(a, b, "add")
    return record(a.data + b.data, (a, b), lambda g: (g, g))


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _same_shape(a, b, "sub")
    return record(a.data - b.data, (a, b), lambda g: (g, -g))


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _same_shape(a, b, "mul")

    def back(g):
        return (g * b.data if a.requires_grad else None,
                g * a.data if b.requires_grad else None)

    return record(a.data * b.data, (a, b), back)


def scale(x, c):
    x = as_tensor(x)
    c = float(c)
    return record(x.data * c, (x,), lambda g: (g * c,))


def mul_const(x, c):
    """Multiply by a constant array of the same shape (no gradient to ``c``)."""
    x = as_tensor(x)
    c = np.asarray(c, dtype=np.float64)
    if c.shape != x.shape:
        raise DimensionError(f"mul_const: shape mismatch {x.shape} vs {c.shape}")
    return record(x.data * c, (x,), lambda g: (g * c,))


def add_bias(x, b):
    """Add vector ``b`` to every row (last axis) of ``x``."""
    x, b = as_tensor(x), as_tensor(b)
    if b.ndim != 1 or x.shape[-1] != b.shape[0]:
        raise DimensionError(f"add_bias: bias {b.shape} does not fit {x.shape}")

    def back(g):
        return g, g.reshape(-1, b.shape[0]).sum(axis=0) if b.requires_grad else None

    return record(x.data + b.data, (x, b), back)


def relu(x):
    x = as_tensor(x)
    mask = x.data > 0
    return record(np.where(mask, x.data, 0.0), (x,), lambda g: (g * mask,))


def sigmoid(x):
    x = as_tensor(x)
    y = 0.5 * (1.0 + np.tanh(0.5 * x.data))
    return record(y, (x,), lambda g: (g * y * (1.0 - y),))


def exp(x):
    x = as_tensor(x)
    y = np.exp(x.data)
    return record(y, (x,), lambda g: (g * y,))


def log(x):
    x = as_tensor(x)
    if np.any(x.data <= 0):
        raise DomainError("log: non-positive input")
    return record(np.log(x.data), (x,), lambda g: (g / x.data,))


def clamp(x, lo, hi):
    x = as_tensor(x)
    mask = (x.data >= lo) & (x.data <= hi)
    return record(np.clip(x.data, lo, hi), (x,), lambda g: (g * mask,))


def softmax(x, axis=-1):
    x = as_tensor(x)
    if x.size == 0 or x.shape[axis] == 0:
        raise DomainError("softmax: empty input")
    z = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=axis, keepdims=True)

    def back(g):
        return (y * (g - (g * y).sum(axis=axis, keepdims=True)),)

    return record(y, (x,), back)


# -- shape / reduction ---------------------------------------------------------


def concat(tensors, axis=-1):
    ts = [as_tensor(t) for t in tensors]
    if not ts:
        raise DimensionError("concat: nothing to join")
    nd = ts[0].ndim
    ax = axis % nd
    for t in ts[1:]:
        if t.ndim != nd or t.shape[:ax] + t.shape[ax + 1:] != ts[0].shape[:ax] + ts[0].shape[ax + 1:]:
            raise DimensionError(f"concat: incompatible shapes {ts[0].shape} and {t.shape}")
    sizes = [t.shape[ax] for t in ts]
    cuts = np.cumsum(sizes)[:-1]

    def back(g):
        return tuple(np.split(g, cuts, axis=ax))

    return record(np.concatenate([t.data for t in ts], axis=ax), tuple(ts), back)


def stack(tensors):
    ts = [as_tensor(t) for t in tensors]
    for t in ts[1:]:
        if t.shape != ts[0].shape:
            raise DimensionError(f"stack: shape mismatch {ts[0].shape} vs {t.shape}")

    def back(g):
        return tuple(g[i] for i in range(len(ts)))

    return record(np.stack([t.data for t in ts]), tuple(ts), back)


def reshape(x, shape):
    x = as_tensor(x)
    old = x.shape
    return record(x.data.reshape(shape), (x,), lambda g: (g.reshape(old),))


def transpose(x, axes):
    x = as_tensor(x)
    inv = np.argsort(axes)
    return record(np.transpose(x.data, axes), (x,), lambda g: (np.transpose(g, inv),))


def broadcast_to(x, shape):
    x = as_tensor(x)
    old = x.shape
    y = np.array(np.broadcast_to(x.data, shape))
    return record(y, (x,), lambda g: (_sum_to_shape(g, old),))


def sum(x, axis=None):
    x = as_tensor(x)
    if axis is None:
        return record(np.asarray(x.data.sum()), (x,), lambda g: (np.broadcast_to(g, x.shape).copy(),))
    ax = axis % x.ndim
    return record(x.data.sum(axis=ax), (x,), lambda g: (np.broadcast_to(np.expand_dims(g, ax), x.shape).copy(),))


def mean(x, axis=None):
    x = as_tensor(x)
    if axis is None:
        n = x.size
        return record(np.asarray(x.data.mean()), (x,), lambda g: (np.broadcast_to(g / n, x.shape).copy(),))
    ax = axis % x.ndim
    n = x.shape[ax]
    return record(x.data.mean(axis=ax), (x,),
                  lambda g: (np.broadcast_to(np.expand_dims(g / n, ax), x.shape).copy(),))


def rows(x, start, stop):
    """Contiguous row slice ``x[start:stop]``."""
    x = as_tensor(x)

    def back(g):
        gx = np.zeros(x.shape)
        gx[start:stop] = g
        return (gx,)

    return record(x.data[start:stop], (x,), back)


def take(x, idx):
    """Gather along axis 0; backward scatter-adds into the source rows."""
    x = as_tensor(x)
    idx = np.asarray(idx, dtype=np.int64)
    shape = x.shape

    def back(g):
        gx = np.zeros(shape)
        if len(shape) >= 2:
            flat = gx.reshape(shape[0], -1)
            _kernels.scatter_add_rows(flat, idx.ravel(), g.reshape(idx.size, -1))
        else:
            np.add.at(gx, idx.ravel(), g.ravel())
        return (gx,)

    return record(x.data[idx], (x,), back)


_UNARY = {"relu": relu, "sigmoid": sigmoid, "exp": exp}


def elementwise(kind, *args, axis=None):
    """Name-dispatched access to the elementwise family."""
    if kind in _UNARY:
        (x,) = args
        return _UNARY[kind](x)
    if kind == "add":
        return add(*args)
    if kind == "concat":
        return concat(args[0] if len(args) == 1 else args, axis=-1 if axis is None else axis)
    if kind == "mean":
        (x,) = args
        return mean(x, axis=axis)
    raise DomainError(f"unknown elementwise kind {kind!r}")


__all__ = [
    "Tensor", "add", "add_bias", "bmm", "broadcast_to", "clamp", "concat", "elementwise", "exp",
    "log", "matmul", "mean", "mul", "mul_const", "relu", "reshape", "rows", "scale", "sigmoid", "softmax",
    "stack", "sub", "sum", "take", "transpose", "typed_linear",
]
