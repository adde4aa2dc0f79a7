"""
Teacher trajectories recorded on real data
"""

import json
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from ..data.dataset import LabeledDataset
from ..exceptions import DatasetFormatError, InvalidParameterError, NumericFailureError
from ..models.architecture import Architecture
from ..models.state import ModelState, init_state
from ..training import TrainRecipe, train
from ..utils.helpers import atomic_write, content_hash, worker_count

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Trajectory:
    """Snapshots of one teacher, ordered by SGD step"""
    seed: int
    steps: Tuple[int, ...]
    snapshots: Tuple[ModelState, ...]

    def __post_init__(self):
        if len(self.steps) != len(self.snapshots) or not self.steps:
            raise InvalidParameterError("trajectory needs one step index per snapshot")
        if any(b <= a for a, b in zip(self.steps, self.steps[1:])):
            raise InvalidParameterError("trajectory snapshots must be ordered by step")

    def __len__(self) -> int:
        return len(self.snapshots)


@dataclass(frozen=True)
class TrajectoryBank:
    """
    Teacher checkpoints at fixed step intervals, one trajectory per seed

    All snapshots share one architecture.
    """
    arch: Architecture
    snapshot_interval: int
    trajectories: Tuple[Trajectory, ...] = field(default_factory=tuple)

    def __post_init__(self):
        if not self.trajectories:
            raise InvalidParameterError("trajectory bank is empty")
        for trajectory in self.trajectories:
            for snapshot in trajectory.snapshots:
                if snapshot.arch != self.arch:
                    raise InvalidParameterError("all bank snapshots must share one architecture")

    def __len__(self) -> int:
        return len(self.trajectories)

    @property
    def seeds(self) -> List[int]:
        return [t.seed for t in self.trajectories]

    def pairs(self, horizon: int) -> List[Tuple[int, int]]:
        """(trajectory index, start snapshot index) for every pair with a target `horizon` snapshots ahead"""
        return [
            (j, s)
            for j, trajectory in enumerate(self.trajectories)
            for s in range(len(trajectory) - horizon)
        ]

    def bank_hash(self) -> str:
        parts = [self.arch.arch_hash(), str(self.snapshot_interval)]
        for trajectory in self.trajectories:
            parts.append(f"{trajectory.seed}:{','.join(map(str, trajectory.steps))}")
            parts.extend(s.state_hash() for s in trajectory.snapshots)
        return content_hash(parts)

    def save(self, path: Union[str, os.PathLike]) -> None:
        """One .npz holding every snapshot plus a JSON header"""
        header = {
            "arch": self.arch.model_dump(mode="json"),
            "snapshot_interval": self.snapshot_interval,
            "trajectories": [
                {"seed": t.seed, "steps": list(t.steps), "epoch_tags": [s.epoch_tag for s in t.snapshots]}
                for t in self.trajectories
            ],
        }
        arrays = {
            f"t{j}_s{i}": snapshot.params
            for j, trajectory in enumerate(self.trajectories)
            for i, snapshot in enumerate(trajectory.snapshots)
        }
        tmp = os.fspath(path) + ".tmp.npz"
        np.savez(tmp, header=np.array(json.dumps(header)), **arrays)
        os.replace(tmp, os.fspath(path))

    @classmethod
    def load(cls, path: Union[str, os.PathLike]) -> "TrajectoryBank":
        if not os.path.exists(path):
            raise DatasetFormatError(f"trajectory bank not found: {path}", field="path")
        with np.load(path, allow_pickle=False) as payload:
            header = json.loads(str(payload["header"]))
            arch = Architecture.model_validate(header["arch"])
            trajectories = []
            for j, meta in enumerate(header["trajectories"]):
                snapshots = tuple(
                    ModelState(payload[f"t{j}_s{i}"], arch, meta["seed"], epoch_tag)
                    for i, epoch_tag in enumerate(meta["epoch_tags"])
                )
                trajectories.append(Trajectory(meta["seed"], tuple(meta["steps"]), snapshots))
        return cls(arch=arch, snapshot_interval=header["snapshot_interval"], trajectories=tuple(trajectories))


def _record_one(
    real_data: LabeledDataset,
    recipe: TrainRecipe,
    arch: Architecture,
    seed: int,
    snapshot_interval: int,
) -> Trajectory:
    init = init_state(arch, seed)
    steps: List[int] = [0]
    snapshots: List[ModelState] = [init]

    def keep(step: int, state: ModelState) -> None:
        if step % snapshot_interval == 0:
            steps.append(step)
            snapshots.append(state)

    try:
        result = train(init, None, real_data, recipe, order_seed=seed, on_step=keep)
    except NumericFailureError as e:
        raise e.with_context(seed=seed) from e
    if steps[-1] != result.steps:
        steps.append(result.steps)
        snapshots.append(result.state)
    logger.info(f"Teacher seed {seed}: {len(snapshots)} snapshots over {result.steps} steps, "
                f"train loss {result.final_train_loss:.4f}")
    return Trajectory(seed, tuple(steps), tuple(snapshots))


def record_teachers(
    real_data: LabeledDataset,
    recipe: TrainRecipe,
    seeds: Sequence[int],
    snapshot_interval: int,
    arch: Architecture,
    workers: Optional[int] = None,
) -> TrajectoryBank:
    """
    Train one teacher per seed on real data and keep its snapshots

    Each seed sets both the initialization and the data order. Step 0 (the
    initialization) and the final state are always kept.

    Args:
        real_data: training set
        recipe: teacher training algorithm
        seeds: teacher seeds (>= 1)
        snapshot_interval: SGD steps between snapshots (>= 1)
        arch: teacher architecture
        workers: parallel teachers, defaults to SYNPRUNE_WORKERS

    Raises:
        NumericFailureError: a teacher diverged (carries its seed)
    """
    if not seeds:
        raise InvalidParameterError("at least one teacher seed is required")
    if snapshot_interval < 1:
        raise InvalidParameterError(f"snapshot_interval must be >= 1, got {snapshot_interval}")
    workers = worker_count() if workers is None else max(1, workers)
    if workers > 1 and len(seeds) > 1:
        with ThreadPoolExecutor(max_workers=min(workers, len(seeds))) as pool:
            trajectories = list(pool.map(
                lambda seed: _record_one(real_data, recipe, arch, seed, snapshot_interval), seeds
            ))
    else:
        trajectories = [_record_one(real_data, recipe, arch, seed, snapshot_interval) for seed in seeds]
    return TrajectoryBank(arch=arch, snapshot_interval=snapshot_interval, trajectories=tuple(trajectories))
