"""
Pruning engine: masks, magnitude pruning, run records and pipelines

The pipelines depend on the trainer, which itself imports the mask module,
so they are resolved lazily on first attribute access.
"""

from .magnitude import PruneSchedule, magnitude_prune, prune_count, rewind, sparsity_after, surviving_counts
from .mask import SparsityMask, load_mask, read_mask_header, save_mask
from .record import IterationRecord, PruneRunRecord

_LAZY = {
    "Phase": "pipelines",
    "PruningRunner": "pipelines",
    "run_combined": "pipelines",
    "run_distilled_pruning": "pipelines",
    "run_imp": "pipelines",
}


def __getattr__(name):
    if name in _LAZY:
        from importlib import import_module
        module = import_module(f".{_LAZY[name]}", __name__)
        return getattr(module, name)
    raise AttributeError(f"module {__name__!r} has no attribute {name!r}")


__all__ = [
    "IterationRecord",
    "Phase",
    "PruneRunRecord",
    "PruneSchedule",
    "PruningRunner",
    "SparsityMask",
    "load_mask",
    "magnitude_prune",
    "prune_count",
    "read_mask_header",
    "rewind",
    "run_combined",
    "run_distilled_pruning",
    "run_imp",
    "save_mask",
    "sparsity_after",
    "surviving_counts",
]
