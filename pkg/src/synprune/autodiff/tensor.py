"""
Dense tensor with optional tape membership
"""

from typing import Optional, Tuple

import numpy as np

# Parameters and datasets are stored as 32-bit floats; taped arithmetic and
# every reduction runs in 64-bit.
STORAGE_DTYPE = np.float32
COMPUTE_DTYPE = np.float64


class Tensor:
    """
    Row-major dense tensor

    A tensor either belongs to a ComputationTape (it is a watched leaf or the
    output of a recorded op, ``requires_grad`` is True) or is a constant.
    """

    __slots__ = ("values", "tape", "requires_grad", "name")

    def __init__(
        self,
        values,
        tape=None,
        requires_grad: bool = False,
        name: Optional[str] = None,
    ):
        self.values = np.ascontiguousarray(values, dtype=COMPUTE_DTYPE)
        self.tape = tape
        self.requires_grad = requires_grad
        self.name = name

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.values.shape

    @property
    def ndim(self) -> int:
        return self.values.ndim

    @property
    def size(self) -> int:
        return int(self.values.size)

    def item(self) -> float:
        return float(self.values.reshape(-1)[0]) if self.values.size == 1 else float("nan")

    def numpy(self) -> np.ndarray:
        return self.values

    def is_finite(self) -> bool:
        return bool(np.isfinite(self.values).all())

    def __repr__(self) -> str:
        kind = "taped" if self.requires_grad else "const"
        label = f" {self.name}" if self.name else ""
        return f"Tensor({kind}{label}, shape={self.shape})"

    # Operator sugar, all routed through the primitive ops

    def __add__(self, other):
        from .ops import add
        return add(self, other)

    def __radd__(self, other):
        from .ops import add
        return add(other, self)

    def __sub__(self, other):
        from .ops import sub
        return sub(self, other)

    def __rsub__(self, other):
        from .ops import sub
        return sub(other, self)

    def __mul__(self, other):
        from .ops import mul
        return mul(self, other)

    def __rmul__(self, other):
        from .ops import mul
        return mul(other, self)

    def __truediv__(self, other):
        from .ops import mul, reciprocal, as_tensor
        return mul(self, reciprocal(as_tensor(other)))

    def __neg__(self):
        from .ops import neg
        return neg(self)

    def __matmul__(self, other):
        from .ops import matmul
        return matmul(self, other)
