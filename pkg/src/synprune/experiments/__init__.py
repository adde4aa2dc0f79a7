"""
Experiment pipelines and the command-line surface
"""

from .models import ExperimentConfig, RunManifest, load_config
from .runner import cmd_analyze, cmd_compare, cmd_distill, cmd_prune, cmd_sweep, load_task

__all__ = [
    "ExperimentConfig",
    "RunManifest",
    "cmd_analyze",
    "cmd_compare",
    "cmd_distill",
    "cmd_prune",
    "cmd_sweep",
    "load_config",
    "load_task",
]
