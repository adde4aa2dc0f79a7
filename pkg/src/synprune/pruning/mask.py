"""
Sparsity masks and the bit-packed mask file
"""

import json
import os
import struct
from dataclasses import dataclass
from typing import Dict, Optional, Tuple, Union

import numpy as np

from ..exceptions import DatasetFormatError, InvalidParameterError
from ..models.architecture import Architecture
from ..utils.helpers import atomic_write

MASK_MAGIC = b"SPMK"
MASK_VERSION = 1


@dataclass(frozen=True, eq=False)
class SparsityMask:
    """
    Binary keep-mask aligned to a flat parameter vector

    Attributes:
        bits: bool vector, True = weight survives
        layer_partition: (offset, stop) per parameter block
        prunable_flags: one flag per block; non-prunable blocks stay all ones
    """
    bits: np.ndarray
    layer_partition: Tuple[Tuple[int, int], ...]
    prunable_flags: Tuple[bool, ...]
    block_names: Tuple[str, ...] = ()

    def __post_init__(self):
        bits = np.array(self.bits, dtype=bool).reshape(-1)
        if len(self.layer_partition) != len(self.prunable_flags):
            raise InvalidParameterError("layer_partition and prunable_flags differ in length")
        expected = self.layer_partition[-1][1] if self.layer_partition else 0
        if bits.size != expected:
            raise InvalidParameterError(f"mask length {bits.size} != parameter count {expected}")
        for (start, stop), prunable in zip(self.layer_partition, self.prunable_flags):
            if not prunable and not bits[start:stop].all():
                raise InvalidParameterError(f"non-prunable block [{start}, {stop}) has pruned bits")
        bits.setflags(write=False)
        object.__setattr__(self, "bits", bits)

    @classmethod
    def dense(cls, arch: Architecture) -> "SparsityMask":
        blocks = arch.param_blocks()
        return cls(
            bits=np.ones(arch.param_count, dtype=bool),
            layer_partition=tuple((b.offset, b.stop) for b in blocks),
            prunable_flags=tuple(b.prunable for b in blocks),
            block_names=tuple(b.name for b in blocks),
        )

    def with_bits(self, bits: np.ndarray) -> "SparsityMask":
        return SparsityMask(bits, self.layer_partition, self.prunable_flags, self.block_names)

    def __eq__(self, other) -> bool:
        if not isinstance(other, SparsityMask):
            return NotImplemented
        return (
            self.layer_partition == other.layer_partition
            and self.prunable_flags == other.prunable_flags
            and np.array_equal(self.bits, other.bits)
        )

    def __len__(self) -> int:
        return int(self.bits.size)

    @property
    def prunable_index(self) -> np.ndarray:
        """Flat indices of all prunable coordinates"""
        parts = [
            np.arange(start, stop)
            for (start, stop), prunable in zip(self.layer_partition, self.prunable_flags)
            if prunable
        ]
        return np.concatenate(parts) if parts else np.zeros(0, dtype=np.int64)

    @property
    def prunable_count(self) -> int:
        return int(sum(stop - start for (start, stop), p in zip(self.layer_partition, self.prunable_flags) if p))

    @property
    def surviving_count(self) -> int:
        """Ones over prunable coordinates"""
        return int(self.bits[self.prunable_index].sum())

    @property
    def density(self) -> float:
        total = self.prunable_count
        return self.surviving_count / total if total else 1.0

    @property
    def sparsity(self) -> float:
        return 1.0 - self.density

    def layer_densities(self) -> Dict[str, float]:
        """Density per prunable block"""
        densities = {}
        for index, ((start, stop), prunable) in enumerate(zip(self.layer_partition, self.prunable_flags)):
            if not prunable or stop == start:
                continue
            name = self.block_names[index] if index < len(self.block_names) else f"block{index}"
            densities[name] = float(self.bits[start:stop].mean())
        return densities

    def is_nested_in(self, parent: "SparsityMask") -> bool:
        """True when every surviving bit here also survives in parent"""
        return bool(np.all(~self.bits | parent.bits))

    def check_aligned(self, size: int) -> None:
        if self.bits.size != size:
            raise InvalidParameterError(f"mask length {self.bits.size} != vector length {size}")

    def apply(self, vector: np.ndarray) -> np.ndarray:
        self.check_aligned(vector.size)
        return np.where(self.bits, vector, np.zeros((), dtype=vector.dtype))


# ========== Mask file ==========

def save_mask(
    mask: SparsityMask,
    path: Union[str, os.PathLike],
    arch_hash: str = "",
    parent_run_id: Optional[str] = None,
) -> None:
    """
    Write a mask file: magic, version, header length, JSON header, packed bits

    Layout (little-endian):
        4s  magic "SPMK"
        I   version
        I   header byte length
        ... UTF-8 JSON header (arch hash, layer partition, density, parent run id)
        ... np.packbits(bits)
    """
    header = {
        "arch_hash": arch_hash,
        "length": len(mask),
        "layer_partition": [list(p) for p in mask.layer_partition],
        "prunable_flags": list(mask.prunable_flags),
        "block_names": list(mask.block_names),
        "density": mask.density,
        "layer_densities": mask.layer_densities(),
        "parent_run_id": parent_run_id,
    }
    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")
    payload = (
        MASK_MAGIC
        + struct.pack("<II", MASK_VERSION, len(header_bytes))
        + header_bytes
        + np.packbits(mask.bits.astype(np.uint8)).tobytes()
    )
    atomic_write(path, payload)


def read_mask_header(path: Union[str, os.PathLike]) -> dict:
    header, _ = _read_mask_file(path)
    return header


def load_mask(path: Union[str, os.PathLike]) -> SparsityMask:
    header, packed = _read_mask_file(path)
    length = int(header["length"])
    bits = np.unpackbits(np.frombuffer(packed, dtype=np.uint8), count=length).astype(bool)
    if bits.size != length:
        raise DatasetFormatError(f"mask payload truncated in {path}", field="bits")
    return SparsityMask(
        bits=bits,
        layer_partition=tuple(tuple(p) for p in header["layer_partition"]),
        prunable_flags=tuple(bool(f) for f in header["prunable_flags"]),
        block_names=tuple(header.get("block_names", ())),
    )


def _read_mask_file(path) -> Tuple[dict, bytes]:
    if not os.path.exists(path):
        raise DatasetFormatError(f"mask file not found: {path}", field="path")
    with open(path, "rb") as handle:
        raw = handle.read()
    if raw[:4] != MASK_MAGIC:
        raise DatasetFormatError(f"bad mask magic in {path}", field="magic")
    if len(raw) < 12:
        raise DatasetFormatError(f"mask header truncated in {path}", field="header")
    version, header_len = struct.unpack("<II", raw[4:12])
    if version != MASK_VERSION:
        raise DatasetFormatError(f"unsupported mask version {version}", field="version")
    header_end = 12 + header_len
    if len(raw) < header_end:
        raise DatasetFormatError(f"mask header truncated in {path}", field="header")
    header = json.loads(raw[12:header_end].decode("utf-8"))
    return header, raw[header_end:]
