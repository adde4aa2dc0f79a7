"""
IDX reader / writer (big-endian, unsigned-byte payloads)
"""

import gzip
import logging
import os
import struct
from typing import Optional, Tuple, Union

import numpy as np

from ..exceptions import DatasetFormatError, InvalidParameterError
from .dataset import DatasetRole, LabeledDataset, infer_ipc

logger = logging.getLogger(__name__)

IMAGES_MAGIC = 0x00000803
LABELS_MAGIC = 0x00000801

PathLike = Union[str, os.PathLike]


def _read_bytes(path: PathLike) -> bytes:
    path = os.fspath(path)
    if not os.path.exists(path):
        raise DatasetFormatError(f"IDX file not found: {path}", field="path")
    opener = gzip.open if path.endswith(".gz") else open
    with opener(path, "rb") as handle:
        return handle.read()


def _parse(raw: bytes, expected_magic: int, kind: str) -> Tuple[Tuple[int, ...], bytes]:
    if len(raw) < 4:
        raise DatasetFormatError(f"{kind} file shorter than its magic number", field="magic")
    (magic,) = struct.unpack(">I", raw[:4])
    if magic != expected_magic:
        raise DatasetFormatError(
            f"{kind} magic 0x{magic:08x} != 0x{expected_magic:08x}", field="magic"
        )
    ndim = expected_magic & 0xFF
    header_end = 4 + 4 * ndim
    if len(raw) < header_end:
        raise DatasetFormatError(f"{kind} header truncated", field="dimensions")
    dims = struct.unpack(f">{ndim}I", raw[4:header_end])
    payload = raw[header_end:]
    expected = int(np.prod(dims, dtype=np.int64))
    if len(payload) < expected:
        raise DatasetFormatError(
            f"{kind} payload truncated: {len(payload)} bytes, expected {expected}", field=kind
        )
    if len(payload) > expected:
        raise DatasetFormatError(
            f"{kind} payload has {len(payload) - expected} trailing bytes", field=kind
        )
    return dims, payload


def load_idx(
    images_path: PathLike,
    labels_path: PathLike,
    role: DatasetRole = DatasetRole.REAL_TRAIN,
    class_count: Optional[int] = None,
) -> LabeledDataset:
    """
    Load an IDX image/label file pair

    Pixels are scaled from bytes to [0, 1]; images become (N, 1, rows, cols).
    Files ending in .gz are decompressed transparently.

    Args:
        images_path: images file (magic 0x00000803)
        labels_path: labels file (magic 0x00000801)
        role: role tag of the result
        class_count: number of classes, inferred as max(label) + 1 when omitted

    Raises:
        DatasetFormatError: bad magic, truncated payload or count mismatch; names the field
    """
    (count, rows, cols), pixels = _parse(_read_bytes(images_path), IMAGES_MAGIC, "pixels")
    (label_count,), label_bytes = _parse(_read_bytes(labels_path), LABELS_MAGIC, "labels")
    if count != label_count:
        raise DatasetFormatError(
            f"images count {count} != labels count {label_count}", field="count"
        )
    if count == 0:
        raise DatasetFormatError("IDX pair holds no examples", field="count")

    features = np.frombuffer(pixels, dtype=np.uint8).reshape(count, 1, rows, cols)
    labels = np.frombuffer(label_bytes, dtype=np.uint8).astype(np.int64)
    classes = int(labels.max()) + 1 if class_count is None else class_count
    if labels.max() >= classes:
        raise DatasetFormatError(f"label {labels.max()} >= class_count {classes}", field="labels")

    logger.info(f"Loaded IDX pair: {count} images of {rows}x{cols}, {classes} classes")
    return LabeledDataset(
        features=features.astype(np.float32) / np.float32(255.0),
        labels=labels,
        role=role,
        class_count=classes,
        ipc=0,
        provenance={"source": "idx", "images": os.fspath(images_path), "labels": os.fspath(labels_path),
                    "balanced_per_class": infer_ipc(labels, classes)},
    )


def write_idx(images: np.ndarray, labels: np.ndarray, images_path: PathLike, labels_path: PathLike) -> None:
    """
    Byte-level IDX writer used to author fixtures

    Args:
        images: (N, rows, cols) uint8
        labels: (N,) values in [0, 255]
    """
    images = np.asarray(images)
    labels = np.asarray(labels)
    if images.ndim != 3:
        raise InvalidParameterError(f"images must be (N, rows, cols), got {images.shape}")
    if labels.ndim != 1:
        raise InvalidParameterError(f"labels must be a vector, got {labels.shape}")
    if images.min(initial=0) < 0 or images.max(initial=0) > 255 or labels.min(initial=0) < 0 or labels.max(initial=0) > 255:
        raise InvalidParameterError("IDX unsigned-byte payloads must lie in [0, 255]")
    with open(images_path, "wb") as handle:
        handle.write(struct.pack(">I", IMAGES_MAGIC))
        handle.write(struct.pack(">3I", *images.shape))
        handle.write(images.astype(np.uint8).tobytes())
    with open(labels_path, "wb") as handle:
        handle.write(struct.pack(">I", LABELS_MAGIC))
        handle.write(struct.pack(">I", labels.shape[0]))
        handle.write(labels.astype(np.uint8).tobytes())
