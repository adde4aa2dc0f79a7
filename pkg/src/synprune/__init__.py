"""
synprune - Distilled pruning and instability analysis

Public API:
- LabeledDataset, ModelState, SparsityMask, TrainRecipe: core data types
- train, distill, run_imp, run_distilled_pruning, run_combined: pipelines
- lmc_study, landscape_grid, hessian_diag, compare: analyses

Everything else is imported by full path, e.g. `from synprune.data.idx import load_idx`.
"""

__version__ = "0.1.0"

_PUBLIC = {
    "LabeledDataset": "synprune.data.dataset",
    "ModelState": "synprune.models.state",
    "SparsityMask": "synprune.pruning.mask",
    "TrainRecipe": "synprune.training",
    "train": "synprune.training",
    "distill": "synprune.distill.distiller",
    "run_imp": "synprune.pruning.pipelines",
    "run_distilled_pruning": "synprune.pruning.pipelines",
    "run_combined": "synprune.pruning.pipelines",
    "lmc_study": "synprune.analysis.lmc",
    "landscape_grid": "synprune.analysis.landscape",
    "hessian_diag": "synprune.analysis.hessian",
    "compare": "synprune.analysis.compare",
}

__all__ = sorted(_PUBLIC)


def __getattr__(name: str):
    """Resolve public names on first access so `import synprune` stays cheap"""
    if name in _PUBLIC:
        import importlib
        return getattr(importlib.import_module(_PUBLIC[name]), name)
    raise AttributeError(f"module 'synprune' has no attribute '{name}'")


def __dir__():
    return __all__ + ["__version__"]
