"""
Dataset distillation by teacher-trajectory matching
"""

from .config import DistillConfig
from .distiller import DistillateScore, Distiller, distill, eval_distillate, validation_gap
from .trajectories import Trajectory, TrajectoryBank, record_teachers

__all__ = [
    "DistillConfig",
    "DistillateScore",
    "Distiller",
    "Trajectory",
    "TrajectoryBank",
    "distill",
    "eval_distillate",
    "record_teachers",
    "validation_gap",
]
