"""
Differentiable primitives. Each op computes its forward value with numpy and
registers a backward rule through make_op.

Broadcasting follows numpy's trailing-dimension rule: shapes are right-aligned
and each pair of extents must be equal or one of them must be 1. Gradients of
broadcast operands are summed back to the operand shape.
"""
from typing import Any, Optional, Sequence, Tuple, Union

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from autodiff.tensor import Tensor, make_op
from utils.errors import ShapeError

Axis = Union[None, int, Tuple[int, ...]]


def as_tensor(value: Any, like: Optional[Tensor] = None) -> Tensor:
    """Wrap constants; scalars take the dtype of the tensor they combine with."""
    if isinstance(value, Tensor):
        return value
    dtype = like.dtype if like is not None else None
    return Tensor(np.asarray(value, dtype=dtype))


def _unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _normalize_axes(axis: Axis, ndim: int) -> Tuple[int, ...]:
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(sorted(a % ndim for a in axis))


# ==================== ELEMENTWISE ====================

def elementwise(kind: str, a: Any, b: Any) -> Tensor:
    """Binary elementwise op: kind is one of add, sub, mul, div."""
    a = as_tensor(a)
    b = as_tensor(b, like=a)
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{kind}: shapes {a.shape} and {b.shape} are not broadcastable")

    if kind == "add":
        data = a.data + b.data
        rule = lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape))
    elif kind == "sub":
        data = a.data - b.data
        rule = lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape))
    elif kind == "mul":
        data = a.data * b.data
        rule = lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape))
    elif kind == "div":
        with np.errstate(divide="ignore", invalid="ignore"):
            data = a.data / b.data
        rule = lambda g: (
            _unbroadcast(g / b.data, a.shape),
            _unbroadcast(-g * a.data / (b.data * b.data), b.shape),
        )
    else:
        raise ValueError(f"unknown elementwise op kind: {kind}")
    return make_op(kind, data, (a, b), rule)


def add(a: Any, b: Any) -> Tensor:
    return elementwise("add", a, b)


def sub(a: Any, b: Any) -> Tensor:
    return elementwise("sub", a, b)


def mul(a: Any, b: Any) -> Tensor:
    return elementwise("mul", a, b)


def div(a: Any, b: Any) -> Tensor:
    return elementwise("div", a, b)


def neg(x: Tensor) -> Tensor:
    return make_op("neg", -x.data, (x,), lambda g: (-g,))


def power(x: Tensor, exponent: float) -> Tensor:
    if not isinstance(exponent, (int, float)):
        raise TypeError("only scalar exponents are supported")
    with np.errstate(divide="ignore", invalid="ignore"):
        data = x.data ** exponent
    return make_op("pow", data, (x,), lambda g: (g * exponent * x.data ** (exponent - 1),))


def sqrt(x: Tensor) -> Tensor:
    with np.errstate(invalid="ignore"):
        data = np.sqrt(x.data)
    return make_op("sqrt", data, (x,), lambda g: (g * 0.5 / data,))


def exp(x: Tensor) -> Tensor:
    data = np.exp(x.data)
    return make_op("exp", data, (x,), lambda g: (g * data,))


def log(x: Tensor) -> Tensor:
    with np.errstate(divide="ignore", invalid="ignore"):
        data = np.log(x.data)
    return make_op("log", data, (x,), lambda g: (g / x.data,))


def absolute(x: Tensor) -> Tensor:
    return make_op("abs", np.abs(x.data), (x,), lambda g: (g * np.sign(x.data),))


def clip(x: Tensor, low: float, high: float, op: str = "clip") -> Tensor:
    inside = (x.data >= low) & (x.data <= high)
    return make_op(op, np.clip(x.data, low, high), (x,), lambda g: (g * inside,))


def relu(x: Tensor) -> Tensor:
    positive = x.data > 0
    return make_op("relu", np.where(positive, x.data, 0.0).astype(x.dtype), (x,), lambda g: (g * positive,))


def hardtanh(x: Tensor) -> Tensor:
    return clip(x, -1.0, 1.0, op="hardtanh")


def prelu(x: Tensor, slope: Tensor) -> Tensor:
    """Leaky ReLU with one learnable slope per channel (axis 1)."""
    if slope.ndim != 1 or x.ndim < 2 or slope.shape[0] != x.shape[1]:
        raise ShapeError(f"prelu: slope {slope.shape} does not match channels of {x.shape}")
    view = (1, -1) + (1,) * (x.ndim - 2)
    a = slope.data.reshape(view)
    positive = x.data > 0
    data = np.where(positive, x.data, a * x.data)
    reduce_axes = tuple(i for i in range(x.ndim) if i != 1)

    def rule(g):
        dx = g * np.where(positive, 1.0, a)
        dslope = (g * np.where(positive, 0.0, x.data)).sum(axis=reduce_axes)
        return dx, dslope

    return make_op("prelu", data, (x, slope), rule)


# ==================== SHAPE ====================

def reshape(x: Tensor, shape: Sequence[int]) -> Tensor:
    try:
        data = x.data.reshape(tuple(shape))
    except ValueError:
        raise ShapeError(f"cannot reshape {x.shape} into {tuple(shape)}")
    return make_op("reshape", data, (x,), lambda g: (g.reshape(x.shape),))


def transpose(x: Tensor, axes: Optional[Sequence[int]] = None) -> Tensor:
    axes = tuple(axes) if axes is not None else tuple(reversed(range(x.ndim)))
    inverse = tuple(np.argsort(axes))
    return make_op("transpose", np.transpose(x.data, axes), (x,), lambda g: (np.transpose(g, inverse),))


def flatten(x: Tensor) -> Tensor:
    return reshape(x, (x.shape[0], -1))


# ==================== REDUCTIONS ====================

def sum(x: Tensor, axis: Axis = None, keepdims: bool = False) -> Tensor:
    axes = _normalize_axes(axis, x.ndim)
    data = x.data.sum(axis=axes, keepdims=keepdims)

    def rule(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g, x.shape),)

    return make_op("sum", np.asarray(data), (x,), rule)


def mean(x: Tensor, axis: Axis = None, keepdims: bool = False) -> Tensor:
    axes = _normalize_axes(axis, x.ndim)
    count = int(np.prod([x.shape[a] for a in axes])) if axes else 1
    if count == 0:
        raise ShapeError("mean over an empty axis")
    return sum(x, axis=axes, keepdims=keepdims) * (1.0 / count)


def var(x: Tensor, axis: Axis = None, keepdims: bool = False) -> Tensor:
    """Population variance (divide by n)."""
    centered = x - mean(x, axis=axis, keepdims=True)
    return mean(centered * centered, axis=axis, keepdims=keepdims)


def global_avg_pool(x: Tensor) -> Tensor:
    """[N, C, H, W] -> [N, C]"""
    return mean(x, axis=(2, 3))


def max_pool2d(x: Tensor) -> Tensor:
    """2x2 max pooling with stride 2; ties share the gradient equally."""
    n, c, h, w = x.shape
    if h % 2 or w % 2:
        raise ShapeError(f"max_pool2d needs even spatial extents, got {x.shape}")
    blocks = x.data.reshape(n, c, h // 2, 2, w // 2, 2)
    data = blocks.max(axis=(3, 5))
    winners = blocks == data[:, :, :, None, :, None]
    share = winners / winners.sum(axis=(3, 5), keepdims=True)

    def rule(g):
        return ((share * g[:, :, :, None, :, None]).reshape(x.shape),)

    return make_op("max_pool2d", data, (x,), rule)


# ==================== LINEAR ALGEBRA ====================

def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError(f"matmul needs 2-D operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul inner extents differ: {a.shape} x {b.shape}")
    return make_op("matmul", a.data @ b.data, (a, b), lambda g: (g @ b.data.T, a.data.T @ g))


def conv_output_size(size: int, kernel: int, stride: int, pad: int, truncate: bool = False) -> int:
    """
    (size + 2*pad - kernel) / stride + 1. A remainder is an error unless
    truncate is set, in which case trailing rows/columns are dropped.
    """
    padded = size + 2 * pad
    if kernel > padded:
        raise ShapeError(f"kernel {kernel} larger than padded input {padded}")
    if (padded - kernel) % stride and not truncate:
        raise ShapeError(f"non-divisible stride geometry: ({size}+2*{pad}-{kernel}) % {stride} != 0")
    return (padded - kernel) // stride + 1


def conv2d(
    a: Tensor,
    w: Tensor,
    stride: int = 1,
    pad: int = 0,
    pad_value: float = 0.0,
    truncate: bool = False,
) -> Tensor:
    """
    2-D cross-correlation, NCHW input and FCkhkw filters.

    pad_value is a constant border (0 for float layers, -1 for the sign domain).
    truncate allows strided geometries that do not divide evenly.
    """
    if a.ndim != 4 or w.ndim != 4:
        raise ShapeError(f"conv2d needs 4-D input and weights, got {a.shape} and {w.shape}")
    n, c, h, width = a.shape
    f, cw, kh, kw = w.shape
    if c != cw:
        raise ShapeError(f"conv2d channel mismatch: input {c}, filters {cw}")
    ho = conv_output_size(h, kh, stride, pad, truncate)
    wo = conv_output_size(width, kw, stride, pad, truncate)

    padded = a.data
    if pad:
        padded = np.pad(a.data, ((0, 0), (0, 0), (pad, pad), (pad, pad)), constant_values=pad_value)
    windows = sliding_window_view(padded, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride]
    out = np.tensordot(windows, w.data, axes=([1, 4, 5], [1, 2, 3]))
    data = np.ascontiguousarray(out.transpose(0, 3, 1, 2))

    def rule(g):
        dw = np.tensordot(g, windows, axes=([0, 2, 3], [0, 2, 3]))
        dpadded = np.zeros(padded.shape, dtype=g.dtype)
        h_stop = stride * (ho - 1) + 1
        w_stop = stride * (wo - 1) + 1
        for i in range(kh):
            for j in range(kw):
                contrib = np.tensordot(g, w.data[:, :, i, j], axes=([1], [0]))
                dpadded[:, :, i:i + h_stop:stride, j:j + w_stop:stride] += contrib.transpose(0, 3, 1, 2)
        da = dpadded[:, :, pad:pad + h, pad:pad + width] if pad else dpadded
        return da, dw

    return make_op("conv2d", data, (a, w), rule)


# ==================== NORMALIZATION ====================

def batchnorm2d(
    x: Tensor,
    gamma: Tensor,
    beta: Tensor,
    running_mean: np.ndarray,
    running_var: np.ndarray,
    training: bool,
    momentum: float = 0.1,
    eps: float = 1e-5,
) -> Tensor:
    """
    Per-channel batch normalization over (N, H, W).

    Training mode normalizes with batch statistics (population variance) and
    updates running_mean / running_var in place; eval mode uses the running
    statistics.
    """
    if x.ndim != 4:
        raise ShapeError(f"batchnorm2d needs NCHW input, got {x.shape}")
    view = (1, -1, 1, 1)
    axes = (0, 2, 3)
    if training:
        if x.shape[0] < 2:
            raise ShapeError(f"batchnorm2d in training mode needs a batch of at least 2, got {x.shape[0]}")
        mu = x.data.mean(axis=axes)
        variance = x.data.var(axis=axes)
        running_mean *= 1.0 - momentum
        running_mean += momentum * mu
        running_var *= 1.0 - momentum
        running_var += momentum * variance
    else:
        mu, variance = running_mean, running_var

    inv = 1.0 / np.sqrt(variance + eps)
    xhat = (x.data - mu.reshape(view)) * inv.reshape(view)
    data = (xhat * gamma.data.reshape(view) + beta.data.reshape(view)).astype(x.dtype)
    count = x.shape[0] * x.shape[2] * x.shape[3]

    def rule(g):
        dgamma = (g * xhat).sum(axis=axes)
        dbeta = g.sum(axis=axes)
        dxhat = g * gamma.data.reshape(view)
        if training:
            dx = (inv.reshape(view) / count) * (
                count * dxhat
                - dxhat.sum(axis=axes, keepdims=True)
                - xhat * (dxhat * xhat).sum(axis=axes, keepdims=True)
            )
        else:
            dx = dxhat * inv.reshape(view)
        return dx, dgamma, dbeta

    return make_op("batchnorm2d", data, (x, gamma, beta), rule)


# ==================== SOFTMAX FAMILY ====================

def _check_axis(x: Tensor, axis: int, op: str) -> None:
    if x.ndim == 0 or x.shape[axis] == 0:
        raise ShapeError(f"{op} over an empty axis (shape {x.shape})")


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    _check_axis(x, axis, "softmax")
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    s = e / e.sum(axis=axis, keepdims=True)
    return make_op("softmax", s, (x,), lambda g: (s * (g - (g * s).sum(axis=axis, keepdims=True)),))


def log_softmax(x: Tensor, axis: int = -1) -> Tensor:
    _check_axis(x, axis, "log_softmax")
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    data = shifted - lse
    s = np.exp(data)
    return make_op("log_softmax", data, (x,), lambda g: (g - s * g.sum(axis=axis, keepdims=True),))


def cross_entropy(logits: Tensor, labels: np.ndarray) -> Tensor:
    """Mean negative log-likelihood of integer labels under softmax(logits)."""
    if logits.ndim != 2:
        raise ShapeError(f"cross_entropy needs [N, K] logits, got {logits.shape}")
    _check_axis(logits, 1, "cross_entropy")
    labels = np.asarray(labels, dtype=np.int64)
    n, k = logits.shape
    if labels.shape != (n,):
        raise ShapeError(f"labels shape {labels.shape} does not match {n} logits rows")
    if labels.size and (labels.min() < 0 or labels.max() >= k):
        raise ShapeError(f"labels must lie in [0, {k})")

    shifted = logits.data - logits.data.max(axis=1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    log_probs = shifted - lse
    data = np.asarray(-log_probs[np.arange(n), labels].mean(), dtype=logits.dtype)

    def rule(g):
        grad = np.exp(log_probs)
        grad[np.arange(n), labels] -= 1.0
        return (grad * (g / n),)

    return make_op("cross_entropy", data, (logits,), rule)


def kl_div(target: np.ndarray, log_q: Tensor, reduction: str = "sum") -> Tensor:
    """
    KL(target || q) with a constant target distribution and q given as log-probabilities.

    reduction 'sum' adds every term; 'batchmean' divides by the leading extent.
    """
    target = np.asarray(target, dtype=log_q.dtype)
    if target.shape != log_q.shape:
        raise ShapeError(f"kl_div: target {target.shape} vs log_q {log_q.shape}")
    positive = target > 0
    log_target = np.log(np.where(positive, target, 1.0))
    terms = np.where(positive, target * (log_target - log_q.data), 0.0)
    scale = 1.0 / log_q.shape[0] if reduction == "batchmean" else 1.0
    data = np.asarray(terms.sum() * scale, dtype=log_q.dtype)
    return make_op("kl_div", data, (log_q,), lambda g: (-target * (g * scale),))
