"""
Dataset container: a directory with manifest.json, features.f32 and labels.i64

Both blobs are little-endian and row-major.
"""

import json
import logging
import os
from typing import Any, Dict, Optional, Union

import numpy as np

from ..exceptions import DatasetFormatError
from ..utils.helpers import atomic_write
from .dataset import LabeledDataset

logger = logging.getLogger(__name__)

CONTAINER_VERSION = 1
MANIFEST_FILE = "manifest.json"
FEATURES_FILE = "features.f32"
LABELS_FILE = "labels.i64"


def save_dataset(
    dataset: LabeledDataset,
    directory: Union[str, os.PathLike],
    extra: Optional[Dict[str, Any]] = None,
) -> str:
    """
    Write a dataset container

    Args:
        dataset: dataset to persist
        directory: target directory (created if needed)
        extra: additional manifest keys, e.g. bank / config hashes of a distillate

    Returns:
        the directory path
    """
    directory = os.fspath(directory)
    os.makedirs(directory, exist_ok=True)
    manifest = {
        "format_version": CONTAINER_VERSION,
        "shape": [len(dataset), *dataset.feature_shape],
        "role": dataset.role.value,
        "ipc": dataset.ipc,
        "class_count": dataset.class_count,
        "seed": dataset.seed,
        "dataset_hash": dataset.dataset_hash(),
        "provenance": dataset.provenance,
    }
    if extra:
        manifest.update(extra)
    atomic_write(os.path.join(directory, FEATURES_FILE), dataset.features.astype("<f4").tobytes())
    atomic_write(os.path.join(directory, LABELS_FILE), dataset.labels.astype("<i8").tobytes())
    # Manifest last: its presence marks a complete container
    atomic_write(os.path.join(directory, MANIFEST_FILE), json.dumps(manifest, indent=2, sort_keys=True))
    logger.debug(f"Saved {dataset.role.value} dataset ({len(dataset)} rows) to {directory}")
    return directory


def read_manifest(directory: Union[str, os.PathLike]) -> Dict[str, Any]:
    path = os.path.join(os.fspath(directory), MANIFEST_FILE)
    if not os.path.exists(path):
        raise DatasetFormatError(f"no dataset manifest at {path}", field="manifest")
    with open(path, "r", encoding="utf-8") as handle:
        try:
            return json.load(handle)
        except json.JSONDecodeError as e:
            raise DatasetFormatError(f"unreadable manifest {path}: {e}", field="manifest")


def load_dataset(directory: Union[str, os.PathLike]) -> LabeledDataset:
    """
    Read a dataset container

    Raises:
        DatasetFormatError: missing files or blob sizes disagreeing with the manifest
    """
    directory = os.fspath(directory)
    manifest = read_manifest(directory)
    for key in ("shape", "role", "ipc", "class_count"):
        if key not in manifest:
            raise DatasetFormatError(f"manifest lacks '{key}'", field=key)
    shape = tuple(int(s) for s in manifest["shape"])
    count = shape[0]

    features = _read_blob(os.path.join(directory, FEATURES_FILE), "<f4", int(np.prod(shape)), "features")
    labels = _read_blob(os.path.join(directory, LABELS_FILE), "<i8", count, "labels")
    return LabeledDataset(
        features=features.reshape(shape),
        labels=labels,
        role=manifest["role"],
        class_count=int(manifest["class_count"]),
        ipc=int(manifest["ipc"]),
        seed=manifest.get("seed"),
        provenance=manifest.get("provenance", {}),
    )


def _read_blob(path: str, dtype: str, expected: int, field: str) -> np.ndarray:
    if not os.path.exists(path):
        raise DatasetFormatError(f"missing blob {path}", field=field)
    values = np.fromfile(path, dtype=dtype)
    if values.size != expected:
        raise DatasetFormatError(
            f"{field} blob holds {values.size} values, manifest expects {expected}", field=field
        )
    return values
