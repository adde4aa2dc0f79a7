"""
Reverse-mode automatic differentiation

Dense tensors, a computation tape, primitive ops with differentiable
backward rules, masked SGD and finite-difference Hessian-vector products.
`optim` and `hvp` are imported by full path (they depend on models).
"""

from .tape import ComputationTape, TapeOp, backward, grad
from .tensor import COMPUTE_DTYPE, STORAGE_DTYPE, Tensor

__all__ = [
    "COMPUTE_DTYPE",
    "STORAGE_DTYPE",
    "ComputationTape",
    "TapeOp",
    "Tensor",
    "backward",
    "grad",
]
