"""
Labeled datasets - role-tagged feature/label containers

Provides:
- role bookkeeping (real-train, synthetic, validation, test)
- images-per-class integrity
- stratified splits and random-real class-balanced subsets
"""

import hashlib
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Any, Dict, Optional, Sequence, Tuple

import numpy as np

from ..autodiff.tensor import STORAGE_DTYPE
from ..exceptions import InvalidParameterError
from ..utils.helpers import STREAM_SPLIT, content_hash, keyed_rng


class DatasetRole(str, Enum):
    REAL_TRAIN = "real-train"
    SYNTHETIC = "synthetic"
    VALIDATION = "validation"
    TEST = "test"


@dataclass(frozen=True, eq=False)
class LabeledDataset:
    """
    Labeled dataset

    Attributes:
        features: (N, *feature_shape) float32
        labels: (N,) int64 in [0, class_count)
        role: DatasetRole
        class_count: number of classes
        ipc: images per class, 0 when not class-balanced
        seed: seed the data was generated / sampled with, if any
        provenance: free-form metadata carried into container manifests

    Examples:
        >>> from synprune.data import make_blobs, split_dataset
        >>> real = make_blobs(class_count=2, per_class=500, dim=20, spread=1.0, seed=7)
        >>> train, val = split_dataset(real, fraction=0.2, seed=0)
        >>> len(train), len(val)
        (800, 200)
    """
    features: np.ndarray
    labels: np.ndarray
    role: DatasetRole
    class_count: int
    ipc: int = 0
    seed: Optional[int] = None
    provenance: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        features = np.array(self.features, dtype=STORAGE_DTYPE)
        labels = np.array(self.labels, dtype=np.int64).reshape(-1)
        role = DatasetRole(self.role)
        if labels.size == 0:
            raise InvalidParameterError("dataset must contain at least one example")
        if features.shape[0] != labels.size:
            raise InvalidParameterError(
                f"features hold {features.shape[0]} rows but labels hold {labels.size}"
            )
        if self.class_count < 1:
            raise InvalidParameterError(f"class_count must be >= 1, got {self.class_count}")
        if labels.min() < 0 or labels.max() >= self.class_count:
            raise InvalidParameterError(f"labels must lie in [0, {self.class_count})")
        if self.ipc < 0:
            raise InvalidParameterError(f"ipc must be >= 0, got {self.ipc}")
        if self.ipc > 0:
            counts = np.bincount(labels, minlength=self.class_count)
            if not np.all(counts == self.ipc):
                raise InvalidParameterError(
                    f"ipc={self.ipc} but class counts are {counts.tolist()}"
                )
        features.setflags(write=False)
        labels.setflags(write=False)
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "role", role)

    def __len__(self) -> int:
        return int(self.labels.size)

    @property
    def feature_shape(self) -> Tuple[int, ...]:
        return tuple(self.features.shape[1:])

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.class_count)

    def per_class(self) -> int:
        """Examples per class when balanced, else 0"""
        return infer_ipc(self.labels, self.class_count)

    def with_role(self, role: DatasetRole, ipc: Optional[int] = None) -> "LabeledDataset":
        return replace(self, role=DatasetRole(role), ipc=self.ipc if ipc is None else ipc)

    def subset(self, indices: Sequence[int], role: Optional[DatasetRole] = None) -> "LabeledDataset":
        indices = np.asarray(indices, dtype=np.int64)
        labels = self.labels[indices]
        return LabeledDataset(
            features=self.features[indices],
            labels=labels,
            role=self.role if role is None else role,
            class_count=self.class_count,
            ipc=infer_ipc(labels, self.class_count) if self.ipc else 0,
            seed=self.seed,
            provenance=dict(self.provenance),
        )

    def dataset_hash(self) -> str:
        digest = hashlib.sha256()
        digest.update(self.features.tobytes())
        digest.update(self.labels.tobytes())
        return digest.hexdigest()[:12]

    def row_hashes(self) -> np.ndarray:
        """One content hash per feature row (role-separation checks)"""
        rows = self.features.reshape(len(self), -1)
        return np.array([content_hash(row.tobytes(), length=16) for row in rows])


def infer_ipc(labels: np.ndarray, class_count: int) -> int:
    counts = np.bincount(np.asarray(labels, dtype=np.int64), minlength=class_count)
    if counts.size and counts[0] > 0 and np.all(counts == counts[0]):
        return int(counts[0])
    return 0


def split_dataset(
    dataset: LabeledDataset,
    fraction: float = 0.2,
    seed: int = 0,
    held_out_role: DatasetRole = DatasetRole.VALIDATION,
) -> Tuple[LabeledDataset, LabeledDataset]:
    """
    Stratified split into (kept, held_out)

    floor(fraction * class size) examples of every class go to held_out.
    Index sets are disjoint, so no example appears in both parts.

    Args:
        dataset: dataset to split
        fraction: held-out share per class, in (0, 1)
        seed: split seed
        held_out_role: role tag of the held-out part

    Returns:
        (kept, held_out)
    """
    if not 0.0 < fraction < 1.0:
        raise InvalidParameterError(f"fraction must be in (0, 1), got {fraction}")
    kept, held = [], []
    for label in range(dataset.class_count):
        members = np.flatnonzero(dataset.labels == label)
        if members.size == 0:
            continue
        order = keyed_rng(seed, STREAM_SPLIT, label).permutation(members.size)
        cut = int(np.floor(fraction * members.size))
        held.append(members[order[:cut]])
        kept.append(members[order[cut:]])
    held_idx = np.sort(np.concatenate(held)) if held else np.zeros(0, dtype=np.int64)
    kept_idx = np.sort(np.concatenate(kept))
    if held_idx.size == 0:
        raise InvalidParameterError(f"fraction {fraction} holds out no examples")
    kept_part = dataset.subset(kept_idx)
    held_part = dataset.subset(held_idx, role=held_out_role)
    return kept_part, held_part


def sample_per_class(
    dataset: LabeledDataset,
    ipc: int,
    seed: int,
    role: DatasetRole = DatasetRole.SYNTHETIC,
) -> LabeledDataset:
    """
    Random-real class-balanced subset: ipc examples of each class, grouped by class

    Raises:
        InvalidParameterError: ipc < 1 or a class has fewer than ipc examples
    """
    if ipc < 1:
        raise InvalidParameterError(f"ipc must be >= 1, got {ipc}")
    chosen = []
    for label in range(dataset.class_count):
        members = np.flatnonzero(dataset.labels == label)
        if members.size < ipc:
            raise InvalidParameterError(
                f"class {label} has {members.size} examples, fewer than ipc={ipc}"
            )
        pick = keyed_rng(seed, STREAM_SPLIT, 10_000 + label).choice(members.size, size=ipc, replace=False)
        chosen.append(members[np.sort(pick)])
    indices = np.concatenate(chosen)
    return LabeledDataset(
        features=dataset.features[indices],
        labels=dataset.labels[indices],
        role=role,
        class_count=dataset.class_count,
        ipc=ipc,
        seed=seed,
        provenance={"source": "random-real", "source_hash": dataset.dataset_hash()},
    )
