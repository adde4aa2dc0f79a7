"""
Seeded epoch orders and compression ratios
"""

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from ..exceptions import InvalidParameterError
from ..utils.helpers import STREAM_ORDER, keyed_rng
from .dataset import LabeledDataset


@dataclass(frozen=True, eq=False)
class EpochOrder:
    """Permutation of [0, N) fully determined by (order_seed, epoch, N)"""
    order_seed: int
    epoch: int
    permutation: np.ndarray

    def __len__(self) -> int:
        return int(self.permutation.size)

    def batches(self, batch_size: int):
        """Index arrays in permutation order; the last batch may be short"""
        for start in range(0, self.permutation.size, batch_size):
            yield self.permutation[start:start + batch_size]


def permutation_for(order_seed: int, epoch: int, count: int) -> np.ndarray:
    """Fisher-Yates shuffle driven by a Philox stream keyed by (order_seed, epoch)"""
    if count <= 0:
        raise InvalidParameterError("cannot order an empty dataset")
    rng = keyed_rng(order_seed, STREAM_ORDER, epoch)
    permutation = rng.permutation(count)
    permutation.setflags(write=False)
    return permutation


def epoch_order(dataset: LabeledDataset, order_seed: int, epoch: int) -> EpochOrder:
    """
    Data order for one epoch

    Two orders differ only through order_seed / epoch, never through process state.
    """
    return EpochOrder(order_seed, epoch, permutation_for(order_seed, epoch, len(dataset)))


@dataclass(frozen=True)
class CompressionRatio:
    """Real examples per class over synthetic examples per class"""
    real_per_class: int
    ipc: int
    ratio: Fraction

    def __float__(self) -> float:
        return float(self.ratio)

    def to_dict(self) -> dict:
        return {
            "real_per_class": self.real_per_class,
            "ipc": self.ipc,
            "ratio": float(self.ratio),
        }


def compression_ratio(real_per_class: int, ipc: int) -> CompressionRatio:
    """
    Exact compression ratio

    Examples:
        >>> float(compression_ratio(5000, 10))
        500.0
    """
    if ipc <= 0:
        raise InvalidParameterError(f"ipc must be > 0, got {ipc}")
    if real_per_class <= 0:
        raise InvalidParameterError(f"real_per_class must be > 0, got {real_per_class}")
    return CompressionRatio(real_per_class, ipc, Fraction(real_per_class, ipc))
