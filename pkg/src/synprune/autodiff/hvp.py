"""
Hessian-vector products by central differences of gradients
"""

import numpy as np

from ..core import DatasetObjective, Objective
from ..exceptions import InvalidParameterError, NumericFailureError
from ..models.network import check_batch
from ..models.state import ModelState
from .tensor import COMPUTE_DTYPE

BASE_EPSILON = 1e-3


def hvp_at(objective: Objective, theta: np.ndarray, v: np.ndarray) -> np.ndarray:
    """
    H(theta) v ~= (grad(theta + eps v) - grad(theta - eps v)) / (2 eps)

    eps = 1e-3 / max(1, ||v||_inf)

    Raises:
        InvalidParameterError: v not aligned to theta
        NumericFailureError: non-finite result
    """
    theta = np.asarray(theta, dtype=COMPUTE_DTYPE).reshape(-1)
    v = np.asarray(v, dtype=COMPUTE_DTYPE).reshape(-1)
    if v.size != theta.size:
        raise InvalidParameterError(f"v length {v.size} != params length {theta.size}")
    if not v.any():
        return np.zeros_like(theta)
    eps = BASE_EPSILON / max(1.0, float(np.abs(v).max()))
    plus = objective.gradient(theta + eps * v)
    minus = objective.gradient(theta - eps * v)
    result = (plus - minus) / (2.0 * eps)
    if not np.isfinite(result).all():
        raise NumericFailureError("non-finite Hessian-vector product")
    return result


def hvp(state: ModelState, batch: np.ndarray, labels: np.ndarray, v: np.ndarray) -> np.ndarray:
    """H·v of the mean batch cross-entropy at state.params"""
    check_batch(state.arch, batch, labels)
    objective = DatasetObjective(state.arch, np.asarray(batch), labels, batch_size=max(1, len(labels)))
    return hvp_at(objective, state.params, v)
