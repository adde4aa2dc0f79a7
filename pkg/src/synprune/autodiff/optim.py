"""
Masked SGD with momentum
"""

from typing import Optional, Tuple

import numpy as np

from ..autodiff.tensor import COMPUTE_DTYPE, STORAGE_DTYPE
from ..exceptions import ConfigError, InvalidParameterError, NumericFailureError
from ..models.state import ModelState
from ..pruning.mask import SparsityMask


def sgd_step(
    state: ModelState,
    grad: np.ndarray,
    mask: SparsityMask,
    lr: float,
    momentum: float = 0.0,
    momentum_buffer: Optional[np.ndarray] = None,
    weight_decay: float = 0.0,
) -> Tuple[ModelState, np.ndarray]:
    """
    One masked SGD step

    Recursion (weight decay folded into the gradient first):
        b_t = momentum * b_{t-1} + g_t
        theta_t = theta_{t-1} - lr * b_t
    Masked coordinates of both theta and the buffer are forced to exactly 0.

    Args:
        state: current parameters
        grad: gradient aligned to state.params
        mask: keep-mask aligned to state.params
        lr: learning rate (> 0)
        momentum: momentum coefficient in [0, 1)
        momentum_buffer: previous buffer, None on the first step
        weight_decay: L2 coefficient

    Returns:
        (new state, new buffer)
    """
    if lr <= 0:
        raise ConfigError(f"learning rate must be > 0, got {lr}", field="lr")
    if not 0.0 <= momentum < 1.0:
        raise ConfigError(f"momentum must be in [0, 1), got {momentum}", field="momentum")
    size = state.params.size
    grad = np.asarray(grad, dtype=COMPUTE_DTYPE).reshape(-1)
    if grad.size != size:
        raise InvalidParameterError(f"gradient length {grad.size} != params length {size}")
    mask.check_aligned(size)

    theta = state.params.astype(COMPUTE_DTYPE)
    if weight_decay:
        grad = grad + weight_decay * theta
    if momentum_buffer is None:
        buffer = grad.copy()
    else:
        buffer = momentum * np.asarray(momentum_buffer, dtype=COMPUTE_DTYPE) + grad
    buffer[~mask.bits] = 0.0
    theta = theta - lr * buffer
    theta[~mask.bits] = 0.0
    if not np.isfinite(theta).all():
        raise NumericFailureError("non-finite parameters after SGD step")
    return state.with_params(theta.astype(STORAGE_DTYPE)), buffer
