"""
Network forward pass on the computation tape
"""

from typing import Tuple, Union

import numpy as np

from ..autodiff import ops
from ..autodiff.tape import ComputationTape, backward
from ..autodiff.tensor import COMPUTE_DTYPE, Tensor
from ..exceptions import NumericFailureError, ShapeMismatchError
from .architecture import Architecture
from .state import ModelState

ArrayLike = Union[np.ndarray, Tensor]


def _values(batch: ArrayLike) -> np.ndarray:
    return batch.values if isinstance(batch, Tensor) else np.asarray(batch)


def check_batch(arch: Architecture, batch: ArrayLike, labels: np.ndarray) -> None:
    """Validate batch / label shapes against the architecture"""
    shape = tuple(_values(batch).shape)
    labels = np.asarray(labels)
    if labels.ndim != 1:
        raise ShapeMismatchError(f"labels must be a vector, got shape {labels.shape}")
    if not shape or shape[0] != labels.shape[0]:
        raise ShapeMismatchError(
            f"batch first dimension {shape[0] if shape else None} != labels length {labels.shape[0]}"
        )
    if shape[1:] != tuple(arch.input_shape):
        raise ShapeMismatchError(
            f"batch trailing shape {shape[1:]} != architecture input shape {tuple(arch.input_shape)}"
        )
    if labels.size and (labels.min() < 0 or labels.max() >= arch.class_count):
        raise ShapeMismatchError(f"labels outside [0, {arch.class_count})")


def logits_tensor(arch: Architecture, params: Tensor, batch: ArrayLike) -> Tensor:
    """
    Run every layer; params is the flat parameter tensor

    Raises:
        NumericFailureError: a layer produced NaN/Inf (carries the layer index)
    """
    x = batch if isinstance(batch, Tensor) else Tensor(np.asarray(batch, dtype=COMPUTE_DTYPE))
    blocks = {(b.layer_index, b.prunable): b for b in arch.param_blocks()}
    count = x.shape[0]
    for index, layer in enumerate(arch.layers):
        if layer.kind in ("dense", "conv2d"):
            wb = blocks[(index, True)]
            bb = blocks[(index, False)]
            weight = ops.reshape(ops.slice_flat(params, wb.offset, wb.stop), wb.shape)
            bias = ops.slice_flat(params, bb.offset, bb.stop)
            if layer.kind == "dense":
                x = ops.add(ops.matmul(x, weight), bias)
            else:
                x = ops.conv2d(x, weight, bias, padding=layer.padding)
        elif layer.kind == "relu":
            x = ops.relu(x)
        elif layer.kind == "avgpool":
            x = ops.avg_pool2d(x, layer.pool_size)
        elif layer.kind == "flatten":
            x = ops.reshape(x, (count, -1))
        if not x.is_finite():
            raise NumericFailureError("non-finite activation", layer_index=index)
    return x


def loss_tensor(
    arch: Architecture,
    params: Tensor,
    batch: ArrayLike,
    labels: np.ndarray,
    reduction: str = "mean",
) -> Tensor:
    logits = logits_tensor(arch, params, batch)
    loss = ops.cross_entropy(logits, labels, reduction=reduction)
    if not loss.is_finite():
        raise NumericFailureError("non-finite loss", layer_index=len(arch.layers))
    return loss


def forward(state: ModelState, batch: ArrayLike, labels: np.ndarray) -> Tuple[float, ComputationTape]:
    """
    Mean cross-entropy of a batch, recorded on a fresh tape

    Args:
        state: model parameters + architecture
        batch: (N, *input_shape)
        labels: integer vector of length N

    Returns:
        (loss, tape); pass the tape to backward() for the parameter gradient
    """
    check_batch(state.arch, batch, labels)
    tape = ComputationTape()
    params = tape.watch(state.params.astype(COMPUTE_DTYPE), name="params")
    loss = loss_tensor(state.arch, params, batch, labels)
    tape.params = params
    tape.output = loss
    return loss.item(), tape


def loss_and_grad(
    arch: Architecture,
    theta: np.ndarray,
    batch: ArrayLike,
    labels: np.ndarray,
    reduction: str = "mean",
) -> Tuple[float, np.ndarray]:
    """Loss and float64 gradient at an arbitrary (float64) parameter vector"""
    tape = ComputationTape()
    params = tape.watch(np.asarray(theta, dtype=COMPUTE_DTYPE), name="params")
    loss = loss_tensor(arch, params, batch, labels, reduction=reduction)
    tape.params = params
    tape.output = loss
    return loss.item(), backward(tape)


def predict_logits(arch: Architecture, theta: np.ndarray, batch: ArrayLike) -> np.ndarray:
    """Logits without recording anything"""
    return logits_tensor(arch, Tensor(np.asarray(theta, dtype=COMPUTE_DTYPE)), batch).values


def batch_loss(arch: Architecture, theta: np.ndarray, batch: ArrayLike, labels: np.ndarray,
               reduction: str = "mean") -> float:
    return loss_tensor(arch, Tensor(np.asarray(theta, dtype=COMPUTE_DTYPE)), batch, labels,
                       reduction=reduction).item()
