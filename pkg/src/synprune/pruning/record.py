"""
Prune run records

On disk a record is a directory:
    record.json          run metadata + per-iteration rows
    record.csv           iteration, sparsity, train_loss, test_acc, phase, ...
    masks/iter_XXX.mask  one bit-packed mask per iteration
    states/              reference state and per-iteration trained states (resume)

record.json is rewritten atomically after every iteration and is the commit
point: anything not listed in it is ignored when resuming.
"""

import json
import logging
import os
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, List, Optional, Union

import pandas as pd

from ..exceptions import DatasetFormatError, InvalidParameterError, MissingArtifactError, MissingCheckpointError
from ..models.architecture import Architecture
from ..utils.helpers import atomic_write
from .mask import SparsityMask, load_mask, save_mask

logger = logging.getLogger(__name__)

RECORD_FILE = "record.json"
CSV_FILE = "record.csv"
MASK_DIR = "masks"
STATE_DIR = "states"

CSV_COLUMNS = [
    "iteration", "sparsity", "train_loss", "test_acc", "phase",
    "test_loss", "inner_loss", "surviving", "epochs_run", "data_points_used",
]

# Matches a requested sparsity against recorded ones (4-decimal CLI input)
SPARSITY_TOLERANCE = 5e-4


@dataclass
class IterationRecord:
    """
    Metrics of one pruning iteration

    Attributes:
        iteration: t (0 = dense)
        phase: pipeline phase that produced the mask ("imp" or "distilled")
        sparsity: prunable-coordinate sparsity of the mask
        surviving: surviving prunable coordinates
        train_loss: converged real-data train loss of the masked model
        test_acc / test_loss: evaluation of that model on the test set
        inner_loss: converged loss of the inner-loop training (synthetic for distilled)
        epochs_run: inner-loop epochs actually run
        data_points_used: cumulative inner-loop examples processed so far
        wall_seconds: wall-clock of the iteration (JSON only, not in the CSV)
        mask: the iteration's mask
    """
    iteration: int
    phase: str
    sparsity: float
    surviving: int
    train_loss: float
    test_acc: float
    test_loss: float
    inner_loss: float
    epochs_run: int
    data_points_used: int
    wall_seconds: float = 0.0
    mask: Optional[SparsityMask] = field(default=None, repr=False)

    def row(self) -> Dict[str, Any]:
        values = asdict(self)
        values.pop("mask")
        return values


@dataclass
class PruneRunRecord:
    """
    Ordered iteration records of one pruning run

    Invariants: masks are nested and sparsity strictly increases.
    """
    run_id: str
    method: str
    inner_role: str
    arch: Architecture
    init_seed: int
    rewind_epoch: int = 0
    fraction_per_iter: float = 0.2
    planned_iterations: int = 0
    phase_boundary: Optional[int] = None
    real_per_class: Optional[int] = None
    syn_per_class: Optional[int] = None
    metadata: Dict[str, Any] = field(default_factory=dict)
    iterations: List[IterationRecord] = field(default_factory=list)

    # ========== Building ==========

    def append(self, entry: IterationRecord) -> None:
        if entry.mask is None:
            raise InvalidParameterError("iteration record needs its mask")
        if entry.iteration != len(self.iterations):
            raise InvalidParameterError(
                f"expected iteration {len(self.iterations)}, got {entry.iteration}"
            )
        if self.iterations:
            previous = self.iterations[-1]
            if not entry.mask.is_nested_in(previous.mask):
                raise InvalidParameterError(f"iteration {entry.iteration} revives pruned weights")
            if entry.sparsity <= previous.sparsity:
                raise InvalidParameterError(
                    f"iteration {entry.iteration} does not increase sparsity "
                    f"({previous.sparsity:.6f} -> {entry.sparsity:.6f}); too few prunable weights left"
                )
        self.iterations.append(entry)

    @property
    def complete(self) -> bool:
        return len(self.iterations) == self.planned_iterations + 1

    # ========== Queries ==========

    def sparsities(self) -> List[float]:
        return [entry.sparsity for entry in self.iterations]

    def masks(self) -> List[SparsityMask]:
        return [entry.mask for entry in self.iterations]

    def final(self) -> IterationRecord:
        if not self.iterations:
            raise MissingCheckpointError("record is empty")
        return self.iterations[-1]

    def at_iteration(self, t: int) -> IterationRecord:
        if not 0 <= t < len(self.iterations):
            raise MissingCheckpointError(f"iteration {t} not in record", self.sparsities())
        return self.iterations[t]

    def at_sparsity(self, sparsity: float, tolerance: float = SPARSITY_TOLERANCE) -> IterationRecord:
        """
        Iteration whose sparsity matches within tolerance

        Raises:
            MissingCheckpointError: lists the nearest available sparsities
        """
        if not self.iterations:
            raise MissingCheckpointError(f"no checkpoint at sparsity {sparsity:.4f}")
        best = min(self.iterations, key=lambda e: abs(e.sparsity - sparsity))
        if abs(best.sparsity - sparsity) <= tolerance:
            return best
        nearest = sorted(self.sparsities(), key=lambda s: abs(s - sparsity))[:3]
        raise MissingCheckpointError(f"no checkpoint at sparsity {sparsity:.4f}", sorted(nearest))

    def matching_iterations(self, tolerance: float = 0.01) -> List[int]:
        """Iterations whose test accuracy is within ``tolerance`` of the dense iteration"""
        if not self.iterations:
            return []
        dense = self.iterations[0].test_acc
        return [e.iteration for e in self.iterations if e.test_acc >= dense - tolerance]

    def to_frame(self) -> pd.DataFrame:
        rows = [entry.row() for entry in self.iterations]
        return pd.DataFrame(rows, columns=CSV_COLUMNS + ["wall_seconds"])[CSV_COLUMNS]

    # ========== Persistence ==========

    def header(self) -> Dict[str, Any]:
        return {
            "run_id": self.run_id,
            "method": self.method,
            "inner_role": self.inner_role,
            "arch": self.arch.model_dump(mode="json"),
            "arch_hash": self.arch.arch_hash(),
            "init_seed": self.init_seed,
            "rewind_epoch": self.rewind_epoch,
            "fraction_per_iter": self.fraction_per_iter,
            "planned_iterations": self.planned_iterations,
            "phase_boundary": self.phase_boundary,
            "real_per_class": self.real_per_class,
            "syn_per_class": self.syn_per_class,
            "metadata": self.metadata,
        }

    def save(self, directory: Union[str, os.PathLike]) -> None:
        """
        Write masks, CSV and record.json (last, atomically)

        Mask files are only written for iterations not yet on disk.
        """
        directory = os.fspath(directory)
        mask_dir = os.path.join(directory, MASK_DIR)
        os.makedirs(mask_dir, exist_ok=True)
        rows = []
        for entry in self.iterations:
            mask_path = os.path.join(mask_dir, mask_file_name(entry.iteration))
            if not os.path.exists(mask_path):
                save_mask(entry.mask, mask_path, arch_hash=self.arch.arch_hash(), parent_run_id=self.run_id)
            rows.append(entry.row())
        atomic_write(os.path.join(directory, CSV_FILE), self.to_frame().to_csv(index=False))
        payload = dict(self.header(), iterations=rows)
        atomic_write(os.path.join(directory, RECORD_FILE), json.dumps(payload, indent=2, sort_keys=True))

    @classmethod
    def load(cls, directory: Union[str, os.PathLike]) -> "PruneRunRecord":
        directory = os.fspath(directory)
        path = os.path.join(directory, RECORD_FILE)
        if not os.path.exists(path):
            raise MissingArtifactError(f"no prune record at {directory}; run `synprune prune` first")
        with open(path, "r", encoding="utf-8") as handle:
            try:
                payload = json.load(handle)
            except json.JSONDecodeError as e:
                raise DatasetFormatError(f"unreadable record {path}: {e}", field="record")
        rows = payload.pop("iterations", [])
        payload.pop("arch_hash", None)
        payload["arch"] = Architecture.model_validate(payload["arch"])
        record = cls(**payload)
        for row in rows:
            mask = load_mask(os.path.join(directory, MASK_DIR, mask_file_name(row["iteration"])))
            record.iterations.append(IterationRecord(mask=mask, **row))
        return record


def mask_file_name(iteration: int) -> str:
    return f"iter_{iteration:03d}.mask"


def state_file_name(iteration: int, kind: str) -> str:
    return f"iter_{iteration:03d}_{kind}.npz"
