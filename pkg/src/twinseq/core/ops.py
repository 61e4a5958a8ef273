"""Differentiable kernels and their public wrappers.

Tensors are at most 2-D.  Binary elementwise ops accept equal shapes, a
scalar operand, or a 2-D operand whose extents are 1 where the other
operand's are not (row/column vectors); nothing more general.

When nothing is being recorded (``exact=True``) matmul uses a summation
order that does not depend on the number of rows, so a row computed alone
equals the same row computed inside a larger batch bit for bit.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .tensor import ShapeError, Tensor, apply, as_tensor, register

SIGMOID_FLOOR = -700.0


def _broadcast_shape(sa: tuple, sb: tuple, kind: str) -> tuple:
    if sa == sb:
        return sa
    if len(sa) == 0:
        return sb
    if len(sb) == 0:
        return sa
    if len(sa) == len(sb) == 2:
        out = (max(sa[0], sb[0]), max(sa[1], sb[1]))
        full = sa == out or sb == out
        if full and all(d in (1, o) for d, o in zip(sa + sb, out + out)):
            return out
    raise ShapeError(f"{kind}: shapes {sa} and {sb} do not conform")


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    if g.shape == shape:
        return g
    if len(shape) == 0:
        return np.asarray(g.sum(), dtype=g.dtype)
    axes = tuple(i for i, (d, gd) in enumerate(zip(shape, g.shape)) if d == 1 and gd != 1)
    return g.sum(axis=axes, keepdims=True)


@register("matmul")
def _matmul(a, b, exact):
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: shapes {a.shape} and {b.shape} do not conform")
    out = np.einsum("ij,jk->ik", a, b) if exact else a @ b

    def grad_fn(g, needs):
        return (g @ b.T if needs[0] else None, a.T @ g if needs[1] else None)
    return out, grad_fn


@register("add")
def _add(a, b, exact):
    _broadcast_shape(a.shape, b.shape, "add")
    out = a + b

    def grad_fn(g, needs):
        return (_unbroadcast(g, a.shape) if needs[0] else None,
                _unbroadcast(g, b.shape) if needs[1] else None)
    return out, grad_fn


@register("sub")
def _sub(a, b, exact):
    _broadcast_shape(a.shape, b.shape, "sub")
    out = a - b

    def grad_fn(g, needs):
        return (_unbroadcast(g, a.shape) if needs[0] else None,
                _unbroadcast(-g, b.shape) if needs[1] else None)
    return out, grad_fn


@register("mul")
def _mul(a, b, exact):
    _broadcast_shape(a.shape, b.shape, "mul")
    out = a * b

    def grad_fn(g, needs):
        return (_unbroadcast(g * b, a.shape) if needs[0] else None,
                _unbroadcast(g * a, b.shape) if needs[1] else None)
    return out, grad_fn


@register("sigmoid")
def _sigmoid(a, exact):
    # 1/(1+e^-a) is accurate on both tails; the floor only keeps exp() finite
    out = 1.0 / (1.0 + np.exp(-np.maximum(a, SIGMOID_FLOOR)))

    def grad_fn(g, needs):
        return (g * out * (1.0 - out),)
    return out, grad_fn


@register("tanh")
def _tanh(a, exact):
    out = np.tanh(a)

    def grad_fn(g, needs):
        return (g * (1.0 - out * out),)
    return out, grad_fn


@register("relu")
def _relu(a, exact):
    out = np.maximum(a, 0.0).astype(a.dtype, copy=False)

    def grad_fn(g, needs):
        return (g * (a > 0),)
    return out, grad_fn


@register("square")
def _square(a, exact):
    out = a * a

    def grad_fn(g, needs):
        return (2.0 * a * g,)
    return out, grad_fn


@register("log")
def _log(a, exact, clamp=None):
    if clamp is None:
        if (a <= 0).any():
            raise ValueError("log of a non-positive value; pass clamp= to floor the argument")
        floored = a
        active = None
    else:
        active = a >= clamp
        floored = np.where(active, a, clamp).astype(a.dtype, copy=False)
    out = np.log(floored)

    def grad_fn(g, needs):
        ga = g / floored
        return (ga if active is None else ga * active,)
    return out, grad_fn


@register("sum")
def _sum(a, exact, axis=None):
    out = np.asarray(a.sum(), dtype=a.dtype) if axis is None else a.sum(axis=axis, keepdims=True)

    def grad_fn(g, needs):
        return (np.broadcast_to(g, a.shape),)
    return out, grad_fn


@register("mean")
def _mean(a, exact, axis=None):
    count = a.size if axis is None else a.shape[axis]
    out = np.asarray(a.mean(), dtype=a.dtype) if axis is None else a.mean(axis=axis, keepdims=True)

    def grad_fn(g, needs):
        return (np.broadcast_to(g / count, a.shape),)
    return out, grad_fn


@register("softmax_rows")
def _softmax_rows(a, exact):
    if a.ndim != 2:
        raise ShapeError(f"softmax_rows needs a 2-D input, got {a.shape}")
    e = np.exp(a - a.max(axis=1, keepdims=True))
    out = e / e.sum(axis=1, keepdims=True)

    def grad_fn(g, needs):
        return (out * (g - (g * out).sum(axis=1, keepdims=True)),)
    return out, grad_fn


@register("concat")
def _concat(*arrays, exact, axis=0):
    if not arrays:
        raise ShapeError("concat needs at least one input")
    if any(x.ndim != 2 for x in arrays):
        raise ShapeError("concat works on 2-D inputs")
    other = 1 - axis
    if len({x.shape[other] for x in arrays}) != 1:
        raise ShapeError(f"concat along axis {axis}: mismatched extents {[x.shape for x in arrays]}")
    out = np.concatenate(arrays, axis=axis)
    bounds = np.cumsum([0] + [x.shape[axis] for x in arrays])

    def grad_fn(g, needs):
        if axis == 0:
            return tuple(g[lo:hi] if n else None for lo, hi, n in zip(bounds[:-1], bounds[1:], needs))
        return tuple(g[:, lo:hi] if n else None for lo, hi, n in zip(bounds[:-1], bounds[1:], needs))
    return out, grad_fn


@register("slice")
def _slice(a, exact, rows=None, cols=None):
    if a.ndim != 2:
        raise ShapeError(f"slice works on 2-D inputs, got {a.shape}")
    r = slice(*rows) if rows is not None else slice(None)
    c = slice(*cols) if cols is not None else slice(None)
    out = a[r, c]
    if out.size == 0:
        raise ShapeError(f"slice rows={rows} cols={cols} of {a.shape} is empty")

    def grad_fn(g, needs):
        full = np.zeros_like(a)
        full[r, c] = g
        return (full,)
    return out, grad_fn


@register("batch_norm")
def _batch_norm(x, gamma, beta, exact, eps=1e-5, weights=None, stats=None, running=None):
    """Normalise columns of ``x`` with batch statistics or fixed running ones.

    ``weights`` is an (M, 1) 0/1 column selecting the rows that contribute to
    the batch statistics (padded frames are excluded).  With ``running`` set
    to ``(mean, var)`` the op is a fixed affine map.
    """
    if x.ndim != 2 or gamma.shape != (1, x.shape[1]) or beta.shape != (1, x.shape[1]):
        raise ShapeError(f"batch_norm: x {x.shape}, gamma {gamma.shape}, beta {beta.shape}")
    if running is not None:
        mean, var = running
        inv = 1.0 / np.sqrt(var + eps)
        xhat = (x - mean) * inv
        out = xhat * gamma + beta

        def grad_fn(g, needs):
            return (g * gamma * inv if needs[0] else None,
                    (g * xhat).sum(axis=0, keepdims=True) if needs[1] else None,
                    g.sum(axis=0, keepdims=True) if needs[2] else None)
        return out, grad_fn

    w = np.ones((x.shape[0], 1), dtype=x.dtype) if weights is None else weights
    count = float(w.sum())
    if count < 2:
        raise ShapeError("batch_norm in training mode needs at least two frames")
    mean = (w * x).sum(axis=0, keepdims=True) / count
    centred = x - mean
    var = (w * centred * centred).sum(axis=0, keepdims=True) / count
    inv = 1.0 / np.sqrt(var + eps)
    xhat = centred * inv
    out = xhat * gamma + beta
    if stats is not None:
        stats["mean"] = mean
        stats["var"] = var

    def grad_fn(g, needs):
        gx = None
        if needs[0]:
            # every output row depends on the statistics; only weighted rows feed them
            gxhat = g * gamma
            gx = inv * (gxhat - (w / count) * (gxhat.sum(axis=0, keepdims=True)
                                               + xhat * (gxhat * xhat).sum(axis=0, keepdims=True)))
        return (gx,
                (g * xhat).sum(axis=0, keepdims=True) if needs[1] else None,
                g.sum(axis=0, keepdims=True) if needs[2] else None)
    return out, grad_fn


# Public wrappers -----------------------------------------------------------

def matmul(a: Tensor, b: Tensor) -> Tensor:
    return apply("matmul", a, b)


def add(a, b) -> Tensor:
    return apply("add", as_tensor(a), as_tensor(b))


def sub(a, b) -> Tensor:
    return apply("sub", as_tensor(a), as_tensor(b))


def mul(a, b) -> Tensor:
    return apply("mul", as_tensor(a), as_tensor(b))


def sigmoid(a: Tensor) -> Tensor:
    return apply("sigmoid", a)


def tanh(a: Tensor) -> Tensor:
    return apply("tanh", a)


def relu(a: Tensor) -> Tensor:
    return apply("relu", a)


def square(a: Tensor) -> Tensor:
    return apply("square", a)


def log(a: Tensor, clamp: float | None = None) -> Tensor:
    return apply("log", a, clamp=clamp)


def sum(a: Tensor, axis: int | None = None) -> Tensor:  # noqa: A001
    return apply("sum", a, axis=axis)


def mean(a: Tensor, axis: int | None = None) -> Tensor:
    return apply("mean", a, axis=axis)


def softmax_rows(a: Tensor) -> Tensor:
    return apply("softmax_rows", a)


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    if len(tensors) == 1:
        return tensors[0]
    return apply("concat", *tensors, axis=axis)


def slice_rows(a: Tensor, start: int, stop: int) -> Tensor:
    return apply("slice", a, rows=(start, stop))


def slice_cols(a: Tensor, start: int, stop: int) -> Tensor:
    return apply("slice", a, cols=(start, stop))


def batch_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5,
               weights: np.ndarray | None = None, stats: dict | None = None,
               running: tuple[np.ndarray, np.ndarray] | None = None) -> Tensor:
    return apply("batch_norm", x, gamma, beta, eps=eps, weights=weights, stats=stats, running=running)
