"""Differentiable operations over 2-D (and a few 1-D) tensors.

Each op computes its value with numpy and registers a backward rule through
`record`. Inputs are never mutated.
"""

import math
from typing import Sequence

import numpy as np

from src.constants import GELU_COEF, NORM_EPS
from src.errors import (
    ContractError,
    DegenerateVectorError,
    DimensionError,
    NumericInputError,
    TokenIndexError,
)
from src.helpers.tensor import Tensor, record

_SQRT_2_OVER_PI = math.sqrt(2.0 / math.pi)


def _require_2d(op: str, *tensors: Tensor):
    for t in tensors:
        if t.data.ndim != 2:
            raise DimensionError(f"{op} expects 2-D tensors, got", t.shape)


def _require_same_shape(op: str, a: Tensor, b: Tensor):
    if a.shape != b.shape:
        raise DimensionError(f"{op} shape mismatch", a.shape, b.shape)


def constant(data) -> Tensor:
    return Tensor(np.asarray(data, dtype=np.float32))


def matmul(a: Tensor, b: Tensor) -> Tensor:
    _require_2d("matmul", a, b)
    if a.shape[1] != b.shape[0]:
        raise DimensionError("matmul inner dimensions differ", a.shape, b.shape)
    out = Tensor(a.data @ b.data)

    def backward(g):
        return g @ b.data.T, a.data.T @ g

    return record("matmul", (a, b), out, backward)


def transpose(a: Tensor) -> Tensor:
    _require_2d("transpose", a)
    out = Tensor(np.ascontiguousarray(a.data.T))
    return record("transpose", (a,), out, lambda g: (g.T,))


def add(a: Tensor, b: Tensor) -> Tensor:
    _require_same_shape("add", a, b)
    out = Tensor(a.data + b.data)
    return record("add", (a, b), out, lambda g: (g, g))


def sub(a: Tensor, b: Tensor) -> Tensor:
    _require_same_shape("sub", a, b)
    out = Tensor(a.data - b.data)
    return record("sub", (a, b), out, lambda g: (g, -g))


def mul(a: Tensor, b: Tensor) -> Tensor:
    _require_same_shape("mul", a, b)
    out = Tensor(a.data * b.data)
    return record("mul", (a, b), out, lambda g: (g * b.data, g * a.data))


def scale(a: Tensor, c: float) -> Tensor:
    out = Tensor(a.data * a.data.dtype.type(c))
    return record("scale", (a,), out, lambda g: (g * c,))


def add_scalar(a: Tensor, c: float) -> Tensor:
    out = Tensor(a.data + a.data.dtype.type(c))
    return record("add_scalar", (a,), out, lambda g: (g,))


def broadcast_rows(v: Tensor, m: int) -> Tensor:
    """Tile a row vector [n] or [1 x n] into [m x n]."""
    row = v.data.reshape(1, -1)
    out = Tensor(np.repeat(row, m, axis=0))

    def backward(g):
        return (g.sum(axis=0).reshape(v.shape),)

    return record("broadcast_rows", (v,), out, backward)


def broadcast_cols(v: Tensor, n: int) -> Tensor:
    """Tile a column vector [m x 1] into [m x n]."""
    if v.data.ndim != 2 or v.shape[1] != 1:
        raise DimensionError("broadcast_cols expects [m x 1]", v.shape)
    out = Tensor(np.repeat(v.data, n, axis=1))
    return record("broadcast_cols", (v,), out, lambda g: (g.sum(axis=1, keepdims=True),))


def add_bias(x: Tensor, b: Tensor) -> Tensor:
    _require_2d("add_bias", x)
    if b.data.size != x.shape[1]:
        raise DimensionError("add_bias width mismatch", x.shape, b.shape)
    return add(x, broadcast_rows(b, x.shape[0]))


def gelu(a: Tensor) -> Tensor:
    """Tanh approximation of GELU with the 0.044715 cubic coefficient."""
    x = a.data
    inner = _SQRT_2_OVER_PI * (x + GELU_COEF * x**3)
    t = np.tanh(inner)
    out = Tensor(0.5 * x * (1.0 + t))

    def backward(g):
        d_inner = _SQRT_2_OVER_PI * (1.0 + 3.0 * GELU_COEF * x**2)
        grad = 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t**2) * d_inner
        return (g * grad.astype(x.dtype, copy=False),)

    return record("gelu", (a,), out, backward)


def sigmoid(a: Tensor) -> Tensor:
    x = a.data
    # split by sign so exp never overflows
    e = np.exp(-np.abs(x))
    s = np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e)).astype(x.dtype, copy=False)
    out = Tensor(s)
    return record("sigmoid", (a,), out, lambda g: (g * s * (1.0 - s),))


def _check_finite(op: str, x: np.ndarray):
    if np.isnan(x).any():
        raise NumericInputError(f"{op} received NaN input")


def softmax_rows(a: Tensor) -> Tensor:
    _require_2d("softmax_rows", a)
    if a.shape[1] < 1:
        raise DimensionError("softmax_rows needs at least one column", a.shape)
    _check_finite("softmax_rows", a.data)
    shifted = a.data - a.data.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=1, keepdims=True)
    out = Tensor(y)

    def backward(g):
        return (y * (g - (g * y).sum(axis=1, keepdims=True)),)

    return record("softmax_rows", (a,), out, backward)


def log_softmax_rows(a: Tensor) -> Tensor:
    _require_2d("log_softmax_rows", a)
    _check_finite("log_softmax_rows", a.data)
    shifted = a.data - a.data.max(axis=1, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    y = shifted - log_z
    out = Tensor(y)

    def backward(g):
        return (g - np.exp(y) * g.sum(axis=1, keepdims=True),)

    return record("log_softmax_rows", (a,), out, backward)


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float) -> Tensor:
    _require_2d("layer_norm", x)
    if eps <= 0:
        raise ContractError("layer_norm eps must be positive")
    n = x.shape[1]
    if gamma.data.size != n or beta.data.size != n:
        raise DimensionError("layer_norm affine width mismatch", x.shape, gamma.shape)
    mu = x.data.mean(axis=1, keepdims=True)
    centered = x.data - mu
    var = (centered**2).mean(axis=1, keepdims=True)
    rstd = 1.0 / np.sqrt(var + eps)
    xhat = centered * rstd
    g_row = gamma.data.reshape(1, n)
    out = Tensor(xhat * g_row + beta.data.reshape(1, n))

    def backward(g):
        d_gamma = (g * xhat).sum(axis=0).reshape(gamma.shape)
        d_beta = g.sum(axis=0).reshape(beta.shape)
        d_xhat = g * g_row
        d_x = rstd * (
            d_xhat
            - d_xhat.mean(axis=1, keepdims=True)
            - xhat * (d_xhat * xhat).mean(axis=1, keepdims=True)
        )
        return d_x, d_gamma, d_beta

    return record("layer_norm", (x, gamma, beta), out, backward)


def embedding_lookup(table: Tensor, ids: Sequence[int]) -> Tensor:
    _require_2d("embedding_lookup", table)
    size = table.shape[0]
    for token_id in ids:
        if not 0 <= token_id < size:
            raise TokenIndexError(token_id, size)
    index = np.asarray(ids, dtype=np.int64)
    out = Tensor(table.data[index])

    def backward(g):
        grad = np.zeros_like(table.data)
        np.add.at(grad, index, g)
        return (grad,)

    return record("embedding_lookup", (table,), out, backward)


def l2_normalize(v: Tensor) -> Tensor:
    """Unit-normalise a vector [d], or every row of a matrix [m x d]."""
    x = v.data
    norms = np.sqrt((x.astype(np.float64) ** 2).sum(axis=-1, keepdims=True))
    if (norms <= NORM_EPS).any():
        raise DegenerateVectorError("cannot normalise a near-zero vector")
    norms = norms.astype(x.dtype)
    y = x / norms
    out = Tensor(y)

    def backward(g):
        return ((g - y * (g * y).sum(axis=-1, keepdims=True)) / norms,)

    return record("l2_normalize", (v,), out, backward)


def reshape(a: Tensor, shape: tuple[int, ...]) -> Tensor:
    out = Tensor(a.data.reshape(shape))
    return record("reshape", (a,), out, lambda g: (g.reshape(a.shape),))


def slice_rows(a: Tensor, start: int, stop: int) -> Tensor:
    _require_2d("slice_rows", a)
    out = Tensor(a.data[start:stop].copy())

    def backward(g):
        grad = np.zeros_like(a.data)
        grad[start:stop] = g
        return (grad,)

    return record("slice_rows", (a,), out, backward)


def slice_cols(a: Tensor, start: int, stop: int) -> Tensor:
    _require_2d("slice_cols", a)
    out = Tensor(np.ascontiguousarray(a.data[:, start:stop]))

    def backward(g):
        grad = np.zeros_like(a.data)
        grad[:, start:stop] = g
        return (grad,)

    return record("slice_cols", (a,), out, backward)


def concat_rows(parts: Sequence[Tensor]) -> Tensor:
    _require_2d("concat_rows", *parts)
    widths = {p.shape[1] for p in parts}
    if len(widths) != 1:
        raise DimensionError("concat_rows width mismatch", *(p.shape for p in parts))
    out = Tensor(np.concatenate([p.data for p in parts], axis=0))
    bounds = np.cumsum([0] + [p.shape[0] for p in parts])

    def backward(g):
        return tuple(g[bounds[i] : bounds[i + 1]] for i in range(len(parts)))

    return record("concat_rows", tuple(parts), out, backward)


def concat_cols(parts: Sequence[Tensor]) -> Tensor:
    _require_2d("concat_cols", *parts)
    heights = {p.shape[0] for p in parts}
    if len(heights) != 1:
        raise DimensionError("concat_cols height mismatch", *(p.shape for p in parts))
    out = Tensor(np.concatenate([p.data for p in parts], axis=1))
    bounds = np.cumsum([0] + [p.shape[1] for p in parts])

    def backward(g):
        return tuple(
            np.ascontiguousarray(g[:, bounds[i] : bounds[i + 1]])
            for i in range(len(parts))
        )

    return record("concat_cols", tuple(parts), out, backward)


def stack_rows(vectors: Sequence[Tensor]) -> Tensor:
    """Stack 1-D vectors [d] into a matrix [len x d]."""
    return concat_rows([reshape(v, (1, -1)) for v in vectors])


def sum_all(a: Tensor) -> Tensor:
    out = Tensor(np.asarray(a.data.sum(), dtype=a.data.dtype))
    return record("sum_all", (a,), out, lambda g: (np.full_like(a.data, g),))


def mean_all(a: Tensor) -> Tensor:
    return scale(sum_all(a), 1.0 / a.data.size)


def sum_rows(a: Tensor) -> Tensor:
    """Row sums as a column [m x 1]."""
    _require_2d("sum_rows", a)
    out = Tensor(a.data.sum(axis=1, keepdims=True))
    return record("sum_rows", (a,), out, lambda g: (np.repeat(g, a.shape[1], axis=1),))


def dot(a: Tensor, b: Tensor) -> Tensor:
    """Inner product of two equally shaped tensors, as a scalar."""
    return sum_all(mul(a, b))
