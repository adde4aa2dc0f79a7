"""
Gaussian-blob classification tasks
"""

import numpy as np

from ..exceptions import InvalidParameterError
from ..utils.helpers import STREAM_DATA, keyed_rng
from .dataset import DatasetRole, LabeledDataset

# Features are mapped to [0, 1] by a fixed affine map covering the class means
# plus this many standard deviations; the rare draw outside is clipped.
SCALE_SIGMAS = 4.0


def make_blobs(
    class_count: int,
    per_class: int,
    dim: int,
    spread: float,
    seed: int,
    draw: int = 0,
    role: DatasetRole = DatasetRole.REAL_TRAIN,
) -> LabeledDataset:
    """
    Gaussian clusters, one mean per class

    Class means depend only on (seed, class_count, dim); ``draw`` selects an
    independent sample around the same means, so a test set is
    ``make_blobs(..., draw=1)``. The [0, 1] scaling depends only on the means and
    spread, so every draw shares it.

    Args:
        class_count: number of classes (> 0)
        per_class: examples per class (> 0)
        dim: feature dimension (> 0)
        spread: per-coordinate standard deviation around the mean (>= 0)
        seed: data seed
        draw: sample index
        role: role tag of the result

    Returns:
        LabeledDataset with ipc = per_class, examples grouped by class

    Examples:
        >>> ds = make_blobs(2, 500, 20, 1.0, seed=7)
        >>> ds.features.shape
        (1000, 20)
    """
    for name, value in (("class_count", class_count), ("per_class", per_class), ("dim", dim)):
        if value <= 0:
            raise InvalidParameterError(f"{name} must be > 0, got {value}")
    if spread < 0:
        raise InvalidParameterError(f"spread must be >= 0, got {spread}")
    if draw < 0:
        raise InvalidParameterError(f"draw must be >= 0, got {draw}")

    means = keyed_rng(seed, STREAM_DATA, 0).standard_normal((class_count, dim))
    noise = keyed_rng(seed, STREAM_DATA, 1 + draw).standard_normal((class_count, per_class, dim))
    raw = means[:, None, :] + spread * noise

    low = means.min() - SCALE_SIGMAS * spread
    high = means.max() + SCALE_SIGMAS * spread
    if high - low > 0:
        features = np.clip((raw - low) / (high - low), 0.0, 1.0)
    else:
        features = np.full_like(raw, 0.5)

    labels = np.repeat(np.arange(class_count, dtype=np.int64), per_class)
    return LabeledDataset(
        features=features.reshape(class_count * per_class, dim),
        labels=labels,
        role=role,
        class_count=class_count,
        ipc=per_class,
        seed=seed,
        provenance={"source": "blobs", "dim": dim, "spread": spread, "draw": draw},
    )
