"""
Trajectory-matching dataset distillation

Each outer step samples a teacher snapshot theta_s and its target
theta_{s+H}, unrolls plain SGD on the current synthetic set starting from
theta_s, and moves the synthetic pixels down the gradient of

    ||theta_student - theta_{s+H}||^2 / ||theta_s - theta_{s+H}||^2

The unroll is recorded on one tape (create_graph), so the pixel gradient is
exact rather than truncated.
"""

import logging
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from ..autodiff import ops
from ..autodiff.tape import ComputationTape, grad
from ..autodiff.tensor import COMPUTE_DTYPE
from ..data.dataset import DatasetRole, LabeledDataset, sample_per_class
from ..exceptions import InvalidParameterError, NumericFailureError
from ..models.architecture import Architecture
from ..models.network import loss_tensor
from ..models.state import init_state
from ..training import TrainRecipe, evaluate, train
from ..utils.helpers import STREAM_DISTILL, content_hash, keyed_rng
from .config import DistillConfig
from .trajectories import TrajectoryBank

logger = logging.getLogger(__name__)

# Teacher pairs closer than this are treated as stalled and skipped
STALL_THRESHOLD = 1e-12


class Distiller:
    """
    Stateful distillation run

    Attributes:
        features: current synthetic pixels, float64
        labels: fixed synthetic labels (class-grouped, ipc per class)
        loss_history: normalized matching loss per completed outer step
        skipped: outer steps skipped because the sampled teacher pair was stalled
    """

    def __init__(self, real_data: LabeledDataset, bank: TrajectoryBank, config: DistillConfig,
                 student_lr: float):
        if len(bank) == 0:
            raise InvalidParameterError("trajectory bank is empty")
        if student_lr <= 0:
            raise InvalidParameterError(f"student_lr must be > 0, got {student_lr}")
        self.real_data = real_data
        self.bank = bank
        self.config = config
        self.student_lr = student_lr
        self.pairs = bank.pairs(config.match_horizon)
        if not self.pairs:
            raise InvalidParameterError(
                f"no teacher holds more than {config.match_horizon} snapshots; lower match_horizon"
            )
        self.features, self.labels = self._initial_set()
        self.loss_history: List[float] = []
        self.skipped = 0
        self._velocity = np.zeros_like(self.features)

    def _initial_set(self) -> Tuple[np.ndarray, np.ndarray]:
        config = self.config
        if config.init_mode == "random-real":
            subset = sample_per_class(self.real_data, config.ipc, seed=config.seed)
            return subset.features.astype(COMPUTE_DTYPE), subset.labels.copy()
        shape = (config.ipc * self.real_data.class_count, *self.real_data.feature_shape)
        features = keyed_rng(config.seed, STREAM_DISTILL, 0).uniform(0.0, 1.0, size=shape)
        labels = np.repeat(np.arange(self.real_data.class_count, dtype=np.int64), config.ipc)
        return features, labels

    # ========== Objective ==========

    def matching_loss(self, features: np.ndarray, trajectory: int, start: int,
                      with_grad: bool = True) -> Tuple[float, Optional[np.ndarray]]:
        """
        Normalized matching loss for one teacher pair and its pixel gradient

        Returns:
            (loss, gradient w.r.t. features); (nan, None) when the pair is stalled
        """
        arch = self.bank.arch
        snapshots = self.bank.trajectories[trajectory].snapshots
        theta_start = snapshots[start].params.astype(COMPUTE_DTYPE)
        theta_target = snapshots[start + self.config.match_horizon].params.astype(COMPUTE_DTYPE)
        denominator = float(np.sum((theta_start - theta_target) ** 2))
        if denominator < STALL_THRESHOLD:
            return float("nan"), None

        tape = ComputationTape()
        x = tape.watch(features, name="synthetic")
        theta = tape.watch(theta_start, name="theta_start")
        for _ in range(self.config.inner_unroll):
            loss = loss_tensor(arch, theta, x, self.labels)
            (g,) = grad(loss, [theta], create_graph=True, retain_tape=True)
            theta = ops.sub(theta, ops.mul(g, self.student_lr))
        diff = ops.sub(theta, theta_target)
        meta = ops.mul(ops.total(ops.mul(diff, diff)), 1.0 / denominator)
        value = meta.item()
        if not with_grad:
            return value, None
        (gx,) = grad(meta, [x])
        return value, gx.values

    # ========== Outer loop ==========

    def step(self, index: int) -> Optional[float]:
        """
        One outer step; returns the matching loss before the update, None if skipped

        Raises:
            NumericFailureError: non-finite matching loss (carries the outer step)
        """
        rng = keyed_rng(self.config.seed, STREAM_DISTILL, 1, index)
        trajectory, start = self.pairs[int(rng.integers(len(self.pairs)))]
        try:
            value, gradient = self.matching_loss(self.features, trajectory, start)
        except NumericFailureError as e:
            raise e.with_context(step=index) from e
        if gradient is None:
            self.skipped += 1
            logger.debug(f"outer step {index}: teacher pair ({trajectory}, {start}) stalled, skipped")
            return None
        if not np.isfinite(value) or not np.isfinite(gradient).all():
            raise NumericFailureError("non-finite distillation loss", step=index)

        self._velocity = self.config.syn_momentum * self._velocity + gradient
        self.features = np.clip(self.features - self.config.syn_lr * self._velocity, 0.0, 1.0)
        self.loss_history.append(value)
        return value

    def run(self) -> LabeledDataset:
        config = self.config
        logger.info("=" * 60)
        logger.info(f"Distilling {config.ipc} per class over {config.outer_steps} outer steps "
                    f"({len(self.pairs)} teacher pairs)")
        logger.info("=" * 60)
        report_every = max(1, config.outer_steps // 10)
        for index in range(config.outer_steps):
            value = self.step(index)
            if value is not None and (index + 1) % report_every == 0:
                logger.info(f"outer step {index + 1}/{config.outer_steps}: matching loss {value:.6f}")
        if self.skipped:
            logger.warning(f"{self.skipped} outer steps skipped on stalled teacher pairs")
        return self.result()

    def result(self) -> LabeledDataset:
        return LabeledDataset(
            features=self.features,
            labels=self.labels,
            role=DatasetRole.SYNTHETIC,
            class_count=self.real_data.class_count,
            ipc=self.config.ipc,
            seed=self.config.seed,
            provenance={
                "source": "distilled",
                "init_mode": self.config.init_mode,
                "bank_hash": self.bank.bank_hash(),
                "config_hash": content_hash(self.config.model_dump(mode="json")),
                "real_hash": self.real_data.dataset_hash(),
                "outer_steps_run": len(self.loss_history),
                "skipped_steps": self.skipped,
            },
        )


def distill(real_data: LabeledDataset, bank: TrajectoryBank, config: DistillConfig,
            student_lr: float) -> LabeledDataset:
    """
    Distill real_data into ipc synthetic examples per class

    Args:
        real_data: real training set (random-real init draws from it)
        bank: teacher trajectories on real_data
        config: distillation settings
        student_lr: learning rate of the unrolled student (the training recipe's lr)

    Returns:
        LabeledDataset with role synthetic and exactly ipc examples per class
    """
    return Distiller(real_data, bank, config, student_lr).run()


@dataclass
class DistillateScore:
    """Real-data accuracy of students trained only on a synthetic set"""
    mean: float
    std: float
    accuracies: List[float] = field(default_factory=list)


def eval_distillate(
    syn_data: LabeledDataset,
    real_eval: LabeledDataset,
    arch: Architecture,
    recipe: TrainRecipe,
    student_seeds: Sequence[int],
) -> DistillateScore:
    """
    Train fresh students on syn_data only, score them on real_eval

    Each seed sets the student's initialization and data order.
    """
    if syn_data.role != DatasetRole.SYNTHETIC:
        raise InvalidParameterError(f"expected a synthetic set, got role {syn_data.role.value!r}")
    if not student_seeds:
        raise InvalidParameterError("at least one student seed is required")
    accuracies = []
    for seed in student_seeds:
        result = train(init_state(arch, seed), None, syn_data, recipe, order_seed=seed)
        accuracies.append(evaluate(result.state, real_eval).accuracy)
    values = np.asarray(accuracies)
    return DistillateScore(mean=float(values.mean()), std=float(values.std()), accuracies=accuracies)


def validation_gap(
    real_data: LabeledDataset,
    syn_data: LabeledDataset,
    val_data: LabeledDataset,
    arch: Architecture,
    recipe: TrainRecipe,
    seed: int = 0,
) -> float:
    """|L(train on real; val) - L(train on synthetic; val)| for one shared seed"""
    init = init_state(arch, seed)
    real_loss = evaluate(train(init, None, real_data, recipe, order_seed=seed).state, val_data).loss
    syn_loss = evaluate(train(init, None, syn_data, recipe, order_seed=seed).state, val_data).loss
    return abs(real_loss - syn_loss)
