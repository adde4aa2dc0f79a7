"""
Magnitude pruning, pruning schedules and weight rewinding
"""

import math
from typing import List, Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from ..exceptions import InvalidParameterError
from ..models.state import ModelState
from .mask import SparsityMask

PruneScope = Literal["global", "layer"]

# Guards floor(fraction * count) against products like 0.7 * 10 = 6.999...
_FLOOR_SLACK = 1e-9


class PruneSchedule(BaseModel):
    """
    How many pruning rounds, of what size, rewinding where

    Attributes:
        fraction_per_iter: share of surviving prunable weights removed per round
        iterations: number of prune rounds t
        method: "imp" (real inner loop) or "distilled" (synthetic inner loop)
        rewind_epoch: k, the epoch survivors are rewound to (0 = initialization)
        scope: "global" across prunable layers, or "layer" for per-layer thresholds
    """
    model_config = ConfigDict(extra="forbid", frozen=True)

    fraction_per_iter: float = Field(0.2, gt=0, lt=1)
    iterations: int = Field(0, ge=0)
    method: Literal["imp", "distilled"] = "imp"
    rewind_epoch: int = Field(0, ge=0)
    scope: PruneScope = "global"

    @property
    def final_sparsity(self) -> float:
        return sparsity_after(self.fraction_per_iter, self.iterations)


def prune_count(fraction: float, surviving: int) -> int:
    """floor(fraction * surviving)"""
    return int(math.floor(fraction * surviving + _FLOOR_SLACK))


def _bottom_k(candidates: np.ndarray, magnitudes: np.ndarray, k: int) -> np.ndarray:
    # Primary key |w| ascending, secondary key flat index ascending
    order = np.lexsort((candidates, magnitudes))
    return candidates[order[:k]]


def magnitude_prune(
    state: ModelState,
    mask: SparsityMask,
    fraction: float,
    scope: PruneScope = "global",
) -> SparsityMask:
    """
    Remove the smallest-magnitude surviving prunable weights

    Global scope prunes floor(fraction * surviving prunable count) coordinates
    across all prunable layers at once; equal magnitudes go in ascending flat
    index order. Layer scope applies the same rule inside each prunable block.

    Args:
        state: trained parameters
        mask: current mask
        fraction: share of surviving prunable weights to remove, in [0, 1)
        scope: "global" or "layer"

    Returns:
        new mask nested inside ``mask``

    Examples:
        >>> new = magnitude_prune(state, mask, 0.2)
        >>> new.is_nested_in(mask)
        True
    """
    if not 0.0 <= fraction < 1.0:
        raise InvalidParameterError(f"fraction must be in [0, 1), got {fraction}")
    if scope not in ("global", "layer"):
        raise InvalidParameterError(f"unknown pruning scope {scope!r}")
    mask.check_aligned(state.params.size)
    if fraction == 0.0:
        return mask

    magnitudes = np.abs(state.params.astype(np.float64))
    bits = mask.bits.copy()
    if scope == "global":
        groups = [mask.prunable_index]
    else:
        groups = [
            np.arange(start, stop)
            for (start, stop), prunable in zip(mask.layer_partition, mask.prunable_flags)
            if prunable
        ]
    for group in groups:
        candidates = group[bits[group]]
        k = prune_count(fraction, candidates.size)
        if k:
            bits[_bottom_k(candidates, magnitudes[candidates], k)] = False
    return mask.with_bits(bits)


def sparsity_after(fraction: float, t: int) -> float:
    """
    Prunable-coordinate sparsity after t rounds: 1 - (1 - fraction)^t

    Examples:
        >>> round(sparsity_after(0.2, 8), 4)
        0.8322
    """
    if t < 0:
        raise InvalidParameterError(f"t must be >= 0, got {t}")
    return 1.0 - (1.0 - fraction) ** t


def surviving_counts(prunable_count: int, fraction: float, t: int) -> List[int]:
    """Exact surviving counts after 0..t rounds under the per-round floor"""
    counts = [prunable_count]
    for _ in range(t):
        counts.append(counts[-1] - prune_count(fraction, counts[-1]))
    return counts


def rewind(trained: ModelState, reference: ModelState, mask: SparsityMask) -> ModelState:
    """
    Reset survivors to the reference state, zero the pruned coordinates

    Output params are reference.params * mask.bits and carry reference.epoch_tag.

    Raises:
        ArchitectureMismatchError: trained and reference differ in architecture
    """
    trained.check_compatible(reference)
    mask.check_aligned(reference.params.size)
    return ModelState(
        params=mask.apply(reference.params),
        arch=reference.arch,
        init_seed=reference.init_seed,
        epoch_tag=reference.epoch_tag,
    )
