"""
Training algorithm: masked minibatch SGD with seeded data order

TrainRecipe pins every hyperparameter; Trainer runs it. Two runs with the
same state, mask, data and recipe produce bit-identical parameters.
"""

import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, List, NamedTuple, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from .autodiff import ops
from .autodiff.optim import sgd_step
from .autodiff.tensor import Tensor
from .data.dataset import LabeledDataset
from .data.ordering import permutation_for
from .exceptions import InvalidParameterError, NumericFailureError
from .models.network import check_batch, loss_and_grad, predict_logits
from .models.state import ModelState
from .pruning.mask import SparsityMask

logger = logging.getLogger(__name__)

StepCallback = Callable[[int, ModelState], None]


class TrainRecipe(BaseModel):
    """
    Training hyperparameters

    Attributes:
        lr: learning rate
        momentum: SGD momentum in [0, 1)
        weight_decay: L2 coefficient
        epochs: epoch budget
        batch_size: minibatch size
        order_seed: data-order seed
        checkpoint_epochs: epochs whose end-of-epoch state is kept (0 = the start state)
        early_stop_tol: minimum loss improvement over the patience window
        early_stop_patience: window length in epochs, 0 disables early stopping
    """
    model_config = ConfigDict(extra="forbid", frozen=True)

    lr: float = Field(0.1, gt=0)
    momentum: float = Field(0.9, ge=0, lt=1)
    weight_decay: float = Field(0.0, ge=0)
    epochs: int = Field(20, ge=1)
    batch_size: int = Field(64, ge=1)
    order_seed: int = Field(0, ge=0)
    checkpoint_epochs: Tuple[int, ...] = ()
    early_stop_tol: float = Field(1e-4, ge=0)
    early_stop_patience: int = Field(3, ge=0)

    @field_validator("checkpoint_epochs")
    @classmethod
    def _sorted_unique(cls, value: Tuple[int, ...]) -> Tuple[int, ...]:
        return tuple(sorted(set(int(v) for v in value)))

    @model_validator(mode="after")
    def _checkpoints_in_budget(self) -> "TrainRecipe":
        for epoch in self.checkpoint_epochs:
            if epoch < 0 or epoch > self.epochs:
                raise ValueError(f"checkpoint epoch {epoch} outside [0, {self.epochs}]")
        return self

    def with_checkpoint(self, epoch: int) -> "TrainRecipe":
        return self.model_copy(update={"checkpoint_epochs": tuple(sorted(set(self.checkpoint_epochs) | {epoch}))})


@dataclass
class TrainResult:
    """Outcome of one training run"""
    state: ModelState
    epochs_run: int
    steps: int
    examples_seen: int
    final_train_loss: float
    loss_history: List[float] = field(default_factory=list)
    checkpoints: Dict[int, ModelState] = field(default_factory=dict)
    stopped_early: bool = False


class Evaluation(NamedTuple):
    loss: float
    accuracy: float


class Trainer:
    """
    Masked SGD trainer

    Examples:
        >>> trainer = Trainer(TrainRecipe(epochs=5))
        >>> result = trainer.fit(init, SparsityMask.dense(init.arch), train_set)
        >>> result.epochs_run
        5
    """

    def __init__(self, recipe: TrainRecipe):
        self.recipe = recipe

    def fit(
        self,
        state: ModelState,
        mask: Optional[SparsityMask],
        data: LabeledDataset,
        order_seed: Optional[int] = None,
        on_step: Optional[StepCallback] = None,
        start_epoch: int = 0,
    ) -> TrainResult:
        """
        Train ``state`` on ``data`` under ``mask``

        Args:
            state: starting parameters (masked coordinates are zeroed first)
            mask: keep-mask, None for dense
            data: training set
            order_seed: overrides recipe.order_seed
            on_step: called with (step, state) after every SGD step
            start_epoch: first epoch index to run; a state rewound to epoch k
                continues with the epoch-k data orders up to the budget

        Returns:
            TrainResult

        Raises:
            NumericFailureError: non-finite loss or parameters, with the step index
        """
        recipe = self.recipe
        arch = state.arch
        mask = mask if mask is not None else SparsityMask.dense(arch)
        mask.check_aligned(state.params.size)
        check_batch(arch, data.features[:1], data.labels[:1])
        seed = recipe.order_seed if order_seed is None else order_seed

        if not 0 <= start_epoch < recipe.epochs:
            raise InvalidParameterError(f"start_epoch {start_epoch} outside [0, {recipe.epochs})")

        current = state.with_params(mask.apply(state.params), epoch_tag=start_epoch)
        checkpoints: Dict[int, ModelState] = {}
        if start_epoch in recipe.checkpoint_epochs:
            checkpoints[start_epoch] = current
        last_checkpoint = max(recipe.checkpoint_epochs, default=0)

        buffer = None
        step = 0
        examples = 0
        history: List[float] = []
        stopped_early = False
        count = len(data)

        for epoch in range(start_epoch, recipe.epochs):
            permutation = permutation_for(seed, epoch, count)
            running = 0.0
            for start in range(0, count, recipe.batch_size):
                index = permutation[start:start + recipe.batch_size]
                x, y = data.features[index], data.labels[index]
                try:
                    loss, grad = loss_and_grad(arch, current.params, x, y)
                    current, buffer = sgd_step(
                        current, grad, mask, recipe.lr,
                        momentum=recipe.momentum,
                        momentum_buffer=buffer,
                        weight_decay=recipe.weight_decay,
                    )
                except NumericFailureError as e:
                    raise e.with_context(step=step) from e
                running += loss * index.size
                step += 1
                examples += int(index.size)
                if on_step is not None:
                    on_step(step, current)

            current = current.with_params(current.params, epoch_tag=epoch + 1)
            history.append(running / count)
            logger.debug(f"epoch {epoch + 1}/{recipe.epochs} loss {history[-1]:.6f}")
            if epoch + 1 in recipe.checkpoint_epochs:
                checkpoints[epoch + 1] = current

            if self._should_stop(history) and epoch + 1 >= last_checkpoint:
                stopped_early = epoch + 1 < recipe.epochs
                break

        final = evaluate(current, data, batch_size=max(recipe.batch_size, 256))
        return TrainResult(
            state=current,
            epochs_run=len(history),
            steps=step,
            examples_seen=examples,
            final_train_loss=final.loss,
            loss_history=history,
            checkpoints=checkpoints,
            stopped_early=stopped_early,
        )

    def _should_stop(self, history: List[float]) -> bool:
        patience = self.recipe.early_stop_patience
        if patience == 0 or len(history) <= patience:
            return False
        best_before = min(history[:-patience])
        best_recent = min(history[-patience:])
        return best_before - best_recent < self.recipe.early_stop_tol


def train(
    state: ModelState,
    mask: Optional[SparsityMask],
    data: LabeledDataset,
    recipe: TrainRecipe,
    order_seed: Optional[int] = None,
    on_step: Optional[StepCallback] = None,
    start_epoch: int = 0,
) -> TrainResult:
    """Functional form of Trainer(recipe).fit(...)"""
    return Trainer(recipe).fit(state, mask, data, order_seed=order_seed, on_step=on_step,
                               start_epoch=start_epoch)


def evaluate(state: ModelState, data: LabeledDataset, batch_size: int = 256) -> Evaluation:
    """
    Mean cross-entropy and accuracy over a dataset, batches in index order

    Per-batch sums accumulate in float64.
    """
    check_batch(state.arch, data.features[:1], data.labels[:1])
    total = 0.0
    correct = 0
    count = len(data)
    for start in range(0, count, batch_size):
        x = data.features[start:start + batch_size]
        y = data.labels[start:start + batch_size]
        logits = predict_logits(state.arch, state.params, x)
        total += ops.cross_entropy(Tensor(logits), y, reduction="sum").item()
        correct += int((logits.argmax(axis=1) == y).sum())
    loss = total / count
    if not np.isfinite(loss):
        raise NumericFailureError("non-finite evaluation loss")
    return Evaluation(loss=loss, accuracy=correct / count)
