"""
Core objectives

An Objective maps a float64 parameter vector to a scalar loss and its
gradient. Analysis code (HVP, Hessian diagonal, landscape grids) only talks
to this interface, so toy objectives and full-dataset network losses are
interchangeable.
"""

from abc import ABC, abstractmethod
from typing import Optional, Tuple

import numpy as np

from .autodiff.tensor import COMPUTE_DTYPE
from .exceptions import InvalidParameterError
from .models.architecture import Architecture
from .models.network import batch_loss, loss_and_grad


class Objective(ABC):
    """
    Abstract base class: scalar training objective

    Subclasses implement loss() and gradient() over flat parameters.
    """

    @property
    @abstractmethod
    def size(self) -> int:
        """Parameter vector length"""
        pass

    @abstractmethod
    def loss(self, theta: np.ndarray) -> float:
        pass

    @abstractmethod
    def gradient(self, theta: np.ndarray) -> np.ndarray:
        pass

    def loss_and_gradient(self, theta: np.ndarray) -> Tuple[float, np.ndarray]:
        return self.loss(theta), self.gradient(theta)


class DatasetObjective(Objective):
    """
    Mean cross-entropy of a network over a whole dataset

    Batches are visited in index order and per-batch sums are accumulated in
    float64, so the value does not depend on batch size beyond rounding.
    """

    def __init__(self, arch: Architecture, features: np.ndarray, labels: np.ndarray, batch_size: int = 256):
        if batch_size <= 0:
            raise InvalidParameterError(f"batch_size must be > 0, got {batch_size}")
        if len(features) == 0:
            raise InvalidParameterError("objective needs at least one example")
        self.arch = arch
        self.features = features
        self.labels = np.asarray(labels, dtype=np.int64)
        self.batch_size = batch_size

    @property
    def size(self) -> int:
        return self.arch.param_count

    def _batches(self):
        count = len(self.labels)
        for start in range(0, count, self.batch_size):
            stop = min(start + self.batch_size, count)
            yield self.features[start:stop], self.labels[start:stop]

    def loss(self, theta: np.ndarray) -> float:
        total = 0.0
        for x, y in self._batches():
            total += batch_loss(self.arch, theta, x, y, reduction="sum")
        return total / len(self.labels)

    def gradient(self, theta: np.ndarray) -> np.ndarray:
        return self.loss_and_gradient(theta)[1]

    def loss_and_gradient(self, theta: np.ndarray) -> Tuple[float, np.ndarray]:
        total = 0.0
        grad = np.zeros(self.size, dtype=COMPUTE_DTYPE)
        for x, y in self._batches():
            value, g = loss_and_grad(self.arch, theta, x, y, reduction="sum")
            total += value
            grad += g
        count = len(self.labels)
        return total / count, grad / count


class QuadraticObjective(Objective):
    """
    f(w) = 1/2 (w - c)^T A (w - c) + b^T w

    Used as a closed-form reference for curvature and landscape code.
    """

    def __init__(self, matrix: np.ndarray, linear: Optional[np.ndarray] = None,
                 center: Optional[np.ndarray] = None):
        matrix = np.asarray(matrix, dtype=COMPUTE_DTYPE)
        if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
            raise InvalidParameterError(f"matrix must be square, got {matrix.shape}")
        self.matrix = matrix
        n = matrix.shape[0]
        self.linear = np.zeros(n) if linear is None else np.asarray(linear, dtype=COMPUTE_DTYPE)
        self.center = np.zeros(n) if center is None else np.asarray(center, dtype=COMPUTE_DTYPE)

    @property
    def size(self) -> int:
        return self.matrix.shape[0]

    def loss(self, theta: np.ndarray) -> float:
        d = np.asarray(theta, dtype=COMPUTE_DTYPE) - self.center
        return float(0.5 * d @ self.matrix @ d + self.linear @ theta)

    def gradient(self, theta: np.ndarray) -> np.ndarray:
        d = np.asarray(theta, dtype=COMPUTE_DTYPE) - self.center
        sym = 0.5 * (self.matrix + self.matrix.T)
        return sym @ d + self.linear
