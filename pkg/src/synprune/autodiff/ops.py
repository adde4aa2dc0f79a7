"""
Primitive ops

Every backward rule is written in terms of these same primitives, so a
gradient computed with ``create_graph=True`` can itself be differentiated.
"""

from functools import lru_cache
from typing import Optional, Sequence, Tuple

import numpy as np

from ..exceptions import ShapeMismatchError
from .tape import TapeOp
from .tensor import COMPUTE_DTYPE, Tensor


def as_tensor(value) -> Tensor:
    """Wrap arrays / scalars as constant tensors"""
    if isinstance(value, Tensor):
        return value
    return Tensor(np.asarray(value, dtype=COMPUTE_DTYPE))


def _result(name: str, values: np.ndarray, inputs: Sequence[Tensor], backward) -> Tensor:
    tape = None
    for node in inputs:
        if node.requires_grad and node.tape is not None and node.tape.recording:
            tape = node.tape
            break
    out = Tensor(values, tape=tape, requires_grad=tape is not None)
    if tape is not None:
        tape.record(TapeOp(name, tuple(inputs), out, backward))
    return out


def _sum_to_values(values: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    lead = values.ndim - len(shape)
    axes = tuple(range(lead)) + tuple(
        lead + i for i, size in enumerate(shape) if size == 1 and values.shape[lead + i] != 1
    )
    if axes:
        values = values.sum(axis=axes, keepdims=True)
    return values.reshape(shape)


# ========== Elementwise ==========

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def backward(g):
        return (
            sum_to(g, a.shape) if a.requires_grad else None,
            sum_to(g, b.shape) if b.requires_grad else None,
        )

    return _result("add", a.values + b.values, (a, b), backward)


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def backward(g):
        return (
            sum_to(g, a.shape) if a.requires_grad else None,
            sum_to(neg(g), b.shape) if b.requires_grad else None,
        )

    return _result("sub", a.values - b.values, (a, b), backward)


def neg(a) -> Tensor:
    a = as_tensor(a)
    return _result("neg", -a.values, (a,), lambda g: (neg(g),))


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def backward(g):
        return (
            sum_to(mul(g, b), a.shape) if a.requires_grad else None,
            sum_to(mul(g, a), b.shape) if b.requires_grad else None,
        )

    return _result("mul", a.values * b.values, (a, b), backward)


def reciprocal(a) -> Tensor:
    a = as_tensor(a)
    out_holder = []

    def backward(g):
        out = out_holder[0]
        return (neg(mul(g, mul(out, out))),)

    out = _result("reciprocal", 1.0 / a.values, (a,), backward)
    out_holder.append(out)
    return out


def exp(a) -> Tensor:
    a = as_tensor(a)
    out_holder = []

    def backward(g):
        return (mul(g, out_holder[0]),)

    out = _result("exp", np.exp(a.values), (a,), backward)
    out_holder.append(out)
    return out


def log(a) -> Tensor:
    a = as_tensor(a)
    return _result("log", np.log(a.values), (a,), lambda g: (mul(g, reciprocal(a)),))


def relu(a) -> Tensor:
    """ReLU as a product with a constant 0/1 gate (second derivative is zero)"""
    a = as_tensor(a)
    gate = Tensor((a.values > 0).astype(COMPUTE_DTYPE))
    return mul(a, gate)


# ========== Shape / reduction ==========

def sum_to(a, shape: Tuple[int, ...]) -> Tensor:
    """Reduce a tensor onto a broadcast-compatible shape"""
    a = as_tensor(a)
    shape = tuple(shape)
    if a.shape == shape:
        return a
    return _result(
        "sum_to",
        _sum_to_values(a.values, shape),
        (a,),
        lambda g: (broadcast_to(g, a.shape),),
    )


def broadcast_to(a, shape: Tuple[int, ...]) -> Tensor:
    a = as_tensor(a)
    shape = tuple(shape)
    if a.shape == shape:
        return a
    return _result(
        "broadcast_to",
        np.broadcast_to(a.values, shape).copy(),
        (a,),
        lambda g: (sum_to(g, a.shape),),
    )


def total(a) -> Tensor:
    """Sum of all elements as a 0-d tensor"""
    return sum_to(a, ())


def reshape(a, shape: Tuple[int, ...]) -> Tensor:
    a = as_tensor(a)
    values = a.values.reshape(shape)
    if values.shape == a.shape:
        return a
    return _result("reshape", values, (a,), lambda g: (reshape(g, a.shape),))


def permute(a, axes: Sequence[int]) -> Tensor:
    a = as_tensor(a)
    axes = tuple(axes)
    inverse = tuple(int(i) for i in np.argsort(axes))
    return _result(
        "permute",
        np.ascontiguousarray(np.transpose(a.values, axes)),
        (a,),
        lambda g: (permute(g, inverse),),
    )


def transpose(a) -> Tensor:
    return permute(a, (1, 0))


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeMismatchError(f"matmul shapes {a.shape} @ {b.shape}")

    def backward(g):
        return (
            matmul(g, transpose(b)) if a.requires_grad else None,
            matmul(transpose(a), g) if b.requires_grad else None,
        )

    return _result("matmul", a.values @ b.values, (a, b), backward)


# ========== Indexing ==========

def slice_flat(a, start: int, stop: int) -> Tensor:
    """Contiguous slice of a 1-D tensor"""
    a = as_tensor(a)
    size = a.size
    return _result(
        "slice_flat",
        a.values.reshape(-1)[start:stop].copy(),
        (a,),
        lambda g: (pad_flat(g, start, size),),
    )


def pad_flat(a, start: int, length: int) -> Tensor:
    """Embed a 1-D tensor into zeros of the given length at offset start"""
    a = as_tensor(a)
    out = np.zeros(length, dtype=COMPUTE_DTYPE)
    out[start:start + a.size] = a.values.reshape(-1)
    stop = start + a.size
    return _result("pad_flat", out, (a,), lambda g: (slice_flat(g, start, stop),))


def gather(a, index: np.ndarray) -> Tensor:
    """Read a.flat[index]; the result has index's shape"""
    a = as_tensor(a)
    shape = a.shape
    return _result(
        "gather",
        a.values.reshape(-1)[index],
        (a,),
        lambda g: (scatter(g, index, shape),),
    )


def scatter(a, index: np.ndarray, shape: Tuple[int, ...]) -> Tensor:
    """Accumulate a into zeros(shape).flat at index (duplicates add up)"""
    a = as_tensor(a)
    if a.shape != index.shape:
        raise ShapeMismatchError(f"scatter values {a.shape} vs index {index.shape}")
    length = int(np.prod(shape, dtype=np.int64))
    values = np.bincount(index.reshape(-1), weights=a.values.reshape(-1), minlength=length)
    return _result(
        "scatter",
        values.reshape(shape).astype(COMPUTE_DTYPE, copy=False),
        (a,),
        lambda g: (gather(g, index),),
    )


# ========== Composite layers ==========

@lru_cache(maxsize=64)
def _pad_index(shape: Tuple[int, ...], pad: int) -> np.ndarray:
    n, c, h, w = shape
    hp, wp = h + 2 * pad, w + 2 * pad
    ni = np.arange(n)[:, None, None, None]
    ci = np.arange(c)[None, :, None, None]
    hi = np.arange(h)[None, None, :, None] + pad
    wi = np.arange(w)[None, None, None, :] + pad
    index = ((ni * c + ci) * hp + hi) * wp + wi
    index.setflags(write=False)
    return index


@lru_cache(maxsize=64)
def _im2col_index(shape: Tuple[int, ...], kernel: int) -> np.ndarray:
    n, c, h, w = shape
    ho, wo = h - kernel + 1, w - kernel + 1
    ni = np.arange(n)[:, None, None, None, None, None]
    ii = np.arange(ho)[None, :, None, None, None, None]
    ji = np.arange(wo)[None, None, :, None, None, None]
    ci = np.arange(c)[None, None, None, :, None, None]
    di = np.arange(kernel)[None, None, None, None, :, None]
    dj = np.arange(kernel)[None, None, None, None, None, :]
    index = ((ni * c + ci) * h + (ii + di)) * w + (ji + dj)
    index = index.reshape(n * ho * wo, c * kernel * kernel)
    index.setflags(write=False)
    return index


@lru_cache(maxsize=64)
def _pool_index(shape: Tuple[int, ...], size: int) -> np.ndarray:
    n, c, h, w = shape
    ho, wo = h // size, w // size
    ni = np.arange(n)[:, None, None, None, None, None]
    ci = np.arange(c)[None, :, None, None, None, None]
    ii = np.arange(ho)[None, None, :, None, None, None]
    ji = np.arange(wo)[None, None, None, :, None, None]
    di = np.arange(size)[None, None, None, None, :, None]
    dj = np.arange(size)[None, None, None, None, None, :]
    index = ((ni * c + ci) * h + (ii * size + di)) * w + (ji * size + dj)
    index = index.reshape(n, c, ho, wo, size * size)
    index.setflags(write=False)
    return index


def conv2d(x, weight, bias, padding: str = "same") -> Tensor:
    """
    Stride-1 2-D convolution (NCHW input, FCkk weight) via im2col

    Args:
        x: (N, C, H, W)
        weight: (F, C, k, k), k odd when padding is "same"
        bias: (F,)
        padding: "same" or "valid"
    """
    x, weight, bias = as_tensor(x), as_tensor(weight), as_tensor(bias)
    n, c, h, w = x.shape
    filters, wc, kernel, _ = weight.shape
    if wc != c:
        raise ShapeMismatchError(f"conv2d expects {wc} channels, got {c}")
    if padding == "same":
        if kernel % 2 != 1:
            raise ShapeMismatchError("same padding needs an odd kernel")
        pad = kernel // 2
        if pad:
            x = scatter(x, _pad_index(x.shape, pad), (n, c, h + 2 * pad, w + 2 * pad))
    elif padding != "valid":
        raise ShapeMismatchError(f"unknown padding {padding!r}")
    _, _, hp, wp = x.shape
    ho, wo = hp - kernel + 1, wp - kernel + 1
    if ho <= 0 or wo <= 0:
        raise ShapeMismatchError(f"kernel {kernel} larger than input {hp}x{wp}")
    cols = gather(x, _im2col_index(x.shape, kernel))
    kernel_matrix = transpose(reshape(weight, (filters, c * kernel * kernel)))
    out = add(matmul(cols, kernel_matrix), bias)
    out = reshape(out, (n, ho, wo, filters))
    return permute(out, (0, 3, 1, 2))


def avg_pool2d(x, size: int) -> Tensor:
    """Non-overlapping average pooling; trailing rows/cols that do not fill a window are dropped"""
    x = as_tensor(x)
    n, c, h, w = x.shape
    if h < size or w < size:
        raise ShapeMismatchError(f"pool size {size} larger than input {h}x{w}")
    windows = gather(x, _pool_index(x.shape, size))
    ho, wo = h // size, w // size
    pooled = sum_to(windows, (n, c, ho, wo, 1))
    return mul(reshape(pooled, (n, c, ho, wo)), 1.0 / (size * size))


def cross_entropy(logits, labels: np.ndarray, reduction: str = "mean") -> Tensor:
    """
    Softmax cross-entropy via max-subtracted log-sum-exp

    Args:
        logits: (N, C)
        labels: integer vector of length N
        reduction: "mean" or "sum"
    """
    logits = as_tensor(logits)
    count, classes = logits.shape
    shift = Tensor(logits.values.max(axis=1, keepdims=True))
    z = sub(logits, shift)
    log_norm = log(sum_to(exp(z), (count, 1)))
    log_probs = sub(z, log_norm)
    one_hot = np.zeros((count, classes), dtype=COMPUTE_DTYPE)
    one_hot[np.arange(count), np.asarray(labels, dtype=np.int64)] = 1.0
    picked = total(mul(log_probs, Tensor(one_hot)))
    scale: Optional[float] = -1.0 / count if reduction == "mean" else -1.0
    return mul(picked, scale)
