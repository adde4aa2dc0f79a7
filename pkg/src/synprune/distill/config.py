"""
Distillation configuration
"""

from typing import Literal, Tuple

from pydantic import BaseModel, ConfigDict, Field, field_validator


class DistillConfig(BaseModel):
    """
    Trajectory-matching distillation settings

    Attributes:
        ipc: synthetic examples per class
        outer_steps: pixel-update steps (0 returns the initial synthetic set)
        inner_unroll: student SGD steps unrolled per outer step
        syn_lr: learning rate on synthetic pixels
        syn_momentum: momentum on synthetic pixels
        match_horizon: how many teacher snapshots ahead the student must reach
        init_mode: "random-real" (class-balanced real subset) or "noise" (uniform pixels)
        teacher_seeds: one teacher trajectory per seed (init and data order)
        snapshot_interval: teacher SGD steps between stored snapshots
        seed: distill seed (initial subset, pair sampling)
    """
    model_config = ConfigDict(extra="forbid", frozen=True)

    ipc: int = Field(10, ge=1)
    outer_steps: int = Field(100, ge=0)
    inner_unroll: int = Field(5, ge=1, le=10)
    syn_lr: float = Field(0.05, gt=0)
    syn_momentum: float = Field(0.5, ge=0, lt=1)
    match_horizon: int = Field(2, ge=1)
    init_mode: Literal["random-real", "noise"] = "random-real"
    teacher_seeds: Tuple[int, ...] = (0, 1)
    snapshot_interval: int = Field(10, ge=1)
    seed: int = Field(0, ge=0)

    @field_validator("teacher_seeds")
    @classmethod
    def _non_empty(cls, value: Tuple[int, ...]) -> Tuple[int, ...]:
        if not value:
            raise ValueError("at least one teacher seed is required")
        if any(seed < 0 for seed in value):
            raise ValueError("teacher seeds must be non-negative")
        return tuple(value)
