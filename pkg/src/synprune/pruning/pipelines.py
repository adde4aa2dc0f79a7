"""
Pruning pipelines: IMP, distilled pruning and distilled-then-IMP

All three are one loop over phases. Iteration 0 trains the dense model; every
later iteration prunes the previous trained state, rewinds the survivors to
the reference state and trains again. A phase decides which data the inner
loop trains on; recorded metrics always come from training on real data.
"""

import logging
import os
import time
from dataclasses import dataclass
from typing import List, Optional, Union

from ..data.dataset import DatasetRole, LabeledDataset
from ..exceptions import ConfigError, InvalidParameterError, NumericFailureError
from ..models.state import ModelState, load_state, save_state
from ..training import TrainRecipe, evaluate, train
from .magnitude import PruneSchedule, PruneScope, magnitude_prune, rewind
from .mask import SparsityMask
from .record import RECORD_FILE, STATE_DIR, IterationRecord, PruneRunRecord, state_file_name

logger = logging.getLogger(__name__)

PHASE_IMP = "imp"
PHASE_DISTILLED = "distilled"
REFERENCE_FILE = "reference.npz"


@dataclass(frozen=True)
class Phase:
    """A run of pruning iterations sharing one inner-loop dataset"""
    name: str
    iterations: int
    inner_data: LabeledDataset


class PruningRunner:
    """
    Sequential pruning state machine

    Persists record.json plus the trained states of the last iteration after
    every iteration when run_dir is set, so an interrupted run resumes from
    the last committed iteration and finishes identical to an uninterrupted one.
    """

    def __init__(
        self,
        init: ModelState,
        real_data: LabeledDataset,
        recipe: TrainRecipe,
        fraction: float = 0.2,
        rewind_epoch: int = 0,
        scope: PruneScope = "global",
        test_data: Optional[LabeledDataset] = None,
        inner_recipe: Optional[TrainRecipe] = None,
        run_dir: Optional[Union[str, os.PathLike]] = None,
        run_id: str = "",
        method: str = PHASE_IMP,
    ):
        if rewind_epoch >= recipe.epochs:
            raise ConfigError(
                f"rewind epoch {rewind_epoch} must be below the epoch budget {recipe.epochs}",
                field="schedule.rewind_epoch",
            )
        if not 0.0 < fraction < 1.0:
            raise ConfigError(f"fraction must be in (0, 1), got {fraction}", field="schedule.fraction_per_iter")
        self.init = init
        self.real_data = real_data
        self.recipe = recipe
        self.inner_recipe = inner_recipe or recipe
        self.fraction = fraction
        self.rewind_epoch = rewind_epoch
        self.scope = scope
        self.test_data = test_data if test_data is not None else real_data
        self.run_dir = os.fspath(run_dir) if run_dir is not None else None
        self.run_id = run_id
        self.method = method

    # ========== Public ==========

    def run(self, phases: List[Phase], resume: bool = False) -> PruneRunRecord:
        plan = self._plan(phases)
        total = len(plan) - 1
        record = self._open_record(phases, total, resume)

        logger.info("=" * 60)
        logger.info(f"Pruning run {self.run_id or '(unsaved)'}: method={self.method}, "
                    f"iterations={total}, rewind_epoch={self.rewind_epoch}")
        logger.info("=" * 60)

        reference, inner_state, real_state, data_points = self._restore(record)
        for t in range(len(record.iterations), total + 1):
            phase = plan[t]
            started = time.perf_counter()
            try:
                if t == 0:
                    mask = SparsityMask.dense(self.init.arch)
                    start = self.init
                else:
                    source = inner_state if phase.name == PHASE_DISTILLED else real_state
                    mask = magnitude_prune(source, record.final().mask, self.fraction, self.scope)
                    start = rewind(source, reference, mask)
                inner, real = self._train_iteration(t, phase, start, mask)
            except NumericFailureError as e:
                raise e.with_context(iteration=t) from e

            if t == 0:
                reference = real.checkpoints[self.rewind_epoch] if self.rewind_epoch else self.init
                self._save_state(reference, REFERENCE_FILE)
            inner_state, real_state = inner.state, real.state
            data_points += inner.examples_seen
            scores = evaluate(real_state, self.test_data)

            entry = IterationRecord(
                iteration=t,
                phase=phase.name,
                sparsity=mask.sparsity,
                surviving=mask.surviving_count,
                train_loss=real.final_train_loss,
                test_acc=scores.accuracy,
                test_loss=scores.loss,
                inner_loss=inner.final_train_loss,
                epochs_run=inner.epochs_run,
                data_points_used=data_points,
                wall_seconds=time.perf_counter() - started,
                mask=mask,
            )
            record.append(entry)
            self._commit(record, t, inner_state, real_state, phase)
            logger.info(
                f"[{phase.name}] iteration {t}/{total}: sparsity {entry.sparsity:.4f}, "
                f"train loss {entry.train_loss:.4f}, test acc {entry.test_acc:.4f}"
            )

        logger.info("=" * 60)
        logger.info(f"Pruning run finished at sparsity {record.final().sparsity:.4f}")
        logger.info("=" * 60)
        return record

    # ========== Internals ==========

    def _plan(self, phases: List[Phase]) -> List[Phase]:
        if not phases:
            raise InvalidParameterError("at least one phase is required")
        plan = [phases[0]]
        for phase in phases:
            plan.extend([phase] * phase.iterations)
        if self.rewind_epoch and phases[0].name != PHASE_IMP:
            raise ConfigError("rewinding to epoch k > 0 needs a real-data dense run",
                              field="schedule.rewind_epoch")
        return plan

    def _train_iteration(self, t: int, phase: Phase, start: ModelState, mask: SparsityMask):
        start_epoch = self.rewind_epoch if t > 0 else 0
        recipe = self.recipe
        if t == 0 and self.rewind_epoch:
            recipe = recipe.with_checkpoint(self.rewind_epoch)
        if phase.name == PHASE_IMP:
            real = train(start, mask, self.real_data, recipe, start_epoch=start_epoch)
            return real, real
        inner = train(start, mask, phase.inner_data, self.inner_recipe, start_epoch=start_epoch)
        real = train(start, mask, self.real_data, recipe, start_epoch=start_epoch)
        return inner, real

    def _open_record(self, phases: List[Phase], total: int, resume: bool) -> PruneRunRecord:
        if resume and self.run_dir and os.path.exists(os.path.join(self.run_dir, RECORD_FILE)):
            record = PruneRunRecord.load(self.run_dir)
            if record.planned_iterations != total or record.init_seed != self.init.init_seed:
                raise ConfigError("existing record was produced by a different schedule", field="resume")
            logger.info(f"Resuming after iteration {len(record.iterations) - 1}")
            return record
        syn = next((p.inner_data for p in phases if p.name == PHASE_DISTILLED), None)
        return PruneRunRecord(
            run_id=self.run_id,
            method=self.method,
            inner_role=(syn.role if syn is not None else DatasetRole.REAL_TRAIN).value,
            arch=self.init.arch,
            init_seed=self.init.init_seed,
            rewind_epoch=self.rewind_epoch,
            fraction_per_iter=self.fraction,
            planned_iterations=total,
            phase_boundary=phases[0].iterations if len(phases) > 1 else None,
            real_per_class=self.real_data.per_class() or None,
            syn_per_class=syn.ipc if syn is not None else None,
            metadata={
                "scope": self.scope,
                "recipe": self.recipe.model_dump(mode="json"),
                "inner_recipe": self.inner_recipe.model_dump(mode="json"),
                "real_examples": len(self.real_data),
                "inner_examples": len(syn) if syn is not None else len(self.real_data),
            },
        )

    def _restore(self, record: PruneRunRecord):
        if not record.iterations:
            return None, None, None, 0
        t = len(record.iterations) - 1
        state_dir = os.path.join(self.run_dir, STATE_DIR)
        reference = load_state(os.path.join(state_dir, REFERENCE_FILE))
        real_state = load_state(os.path.join(state_dir, state_file_name(t, "real")))
        inner_path = os.path.join(state_dir, state_file_name(t, "inner"))
        inner_state = load_state(inner_path) if os.path.exists(inner_path) else real_state
        return reference, inner_state, real_state, record.final().data_points_used

    def _save_state(self, state: ModelState, name: str) -> None:
        if self.run_dir is None:
            return
        state_dir = os.path.join(self.run_dir, STATE_DIR)
        os.makedirs(state_dir, exist_ok=True)
        save_state(state, os.path.join(state_dir, name))

    def _commit(self, record: PruneRunRecord, t: int, inner_state: ModelState,
                real_state: ModelState, phase: Phase) -> None:
        if self.run_dir is None:
            return
        self._save_state(real_state, state_file_name(t, "real"))
        if phase.name == PHASE_DISTILLED:
            self._save_state(inner_state, state_file_name(t, "inner"))
        record.save(self.run_dir)
        # Only the last committed iteration's states are needed to resume
        if t >= 1:
            for kind in ("real", "inner"):
                stale = os.path.join(self.run_dir, STATE_DIR, state_file_name(t - 1, kind))
                if os.path.exists(stale):
                    os.remove(stale)


# ========== Entry points ==========

def run_imp(
    init: ModelState,
    real_data: LabeledDataset,
    recipe: TrainRecipe,
    schedule: PruneSchedule,
    test_data: Optional[LabeledDataset] = None,
    run_dir: Optional[Union[str, os.PathLike]] = None,
    run_id: str = "",
    resume: bool = False,
) -> PruneRunRecord:
    """
    Iterative magnitude pruning on real data, rewinding to epoch schedule.rewind_epoch

    Args:
        init: initialization (epoch_tag 0)
        real_data: training set
        recipe: training algorithm
        schedule: method must be "imp"
        test_data: evaluation set, defaults to real_data
        run_dir: persist the record here after every iteration
        run_id: identifier stored in the record
        resume: continue a partially written record in run_dir

    Returns:
        PruneRunRecord with iterations 0..schedule.iterations
    """
    if schedule.method != PHASE_IMP:
        raise ConfigError(f"run_imp needs method 'imp', got {schedule.method!r}", field="schedule.method")
    runner = PruningRunner(
        init, real_data, recipe,
        fraction=schedule.fraction_per_iter,
        rewind_epoch=schedule.rewind_epoch,
        scope=schedule.scope,
        test_data=test_data,
        run_dir=run_dir,
        run_id=run_id,
        method=PHASE_IMP,
    )
    return runner.run([Phase(PHASE_IMP, schedule.iterations, real_data)], resume=resume)


def _check_synthetic(syn_data: LabeledDataset) -> None:
    if syn_data.role != DatasetRole.SYNTHETIC:
        raise InvalidParameterError(f"inner-loop data must have role 'synthetic', got {syn_data.role.value!r}")


def run_distilled_pruning(
    init: ModelState,
    syn_data: LabeledDataset,
    real_eval: LabeledDataset,
    recipe: TrainRecipe,
    schedule: PruneSchedule,
    test_data: Optional[LabeledDataset] = None,
    inner_recipe: Optional[TrainRecipe] = None,
    run_dir: Optional[Union[str, os.PathLike]] = None,
    run_id: str = "",
    resume: bool = False,
) -> PruneRunRecord:
    """
    Distilled pruning: the inner loop trains on syn_data, metrics retrain on real_eval

    Args:
        init: initialization
        syn_data: synthetic set (role synthetic)
        real_eval: real training data for the recorded retraining
        recipe: training algorithm for the real retraining
        schedule: method "distilled", rewind_epoch 0
        inner_recipe: training algorithm on syn_data, defaults to recipe
    """
    _check_synthetic(syn_data)
    if schedule.method != PHASE_DISTILLED:
        raise ConfigError(
            f"run_distilled_pruning needs method 'distilled', got {schedule.method!r}", field="schedule.method"
        )
    if schedule.rewind_epoch != 0:
        raise ConfigError("distilled pruning rewinds to initialization", field="schedule.rewind_epoch")
    runner = PruningRunner(
        init, real_eval, recipe,
        fraction=schedule.fraction_per_iter,
        scope=schedule.scope,
        test_data=test_data,
        inner_recipe=inner_recipe,
        run_dir=run_dir,
        run_id=run_id,
        method=PHASE_DISTILLED,
    )
    return runner.run([Phase(PHASE_DISTILLED, schedule.iterations, syn_data)], resume=resume)


def run_combined(
    init: ModelState,
    syn_data: LabeledDataset,
    real_data: LabeledDataset,
    recipe: TrainRecipe,
    syn_iters: int,
    imp_schedule: PruneSchedule,
    test_data: Optional[LabeledDataset] = None,
    inner_recipe: Optional[TrainRecipe] = None,
    run_dir: Optional[Union[str, os.PathLike]] = None,
    run_id: str = "",
    resume: bool = False,
) -> PruneRunRecord:
    """
    syn_iters rounds of distilled pruning, then imp_schedule.iterations rounds of IMP

    The IMP phase starts from the synthetic mask and the real-data model trained
    under it; both phases rewind to initialization. record.phase_boundary is
    the last distilled iteration.
    """
    _check_synthetic(syn_data)
    if syn_iters < 1:
        raise ConfigError(f"syn_iters must be >= 1, got {syn_iters}", field="prune.syn_iters")
    if imp_schedule.rewind_epoch != 0:
        raise ConfigError("the combined pipeline rewinds to initialization", field="schedule.rewind_epoch")
    runner = PruningRunner(
        init, real_data, recipe,
        fraction=imp_schedule.fraction_per_iter,
        scope=imp_schedule.scope,
        test_data=test_data,
        inner_recipe=inner_recipe,
        run_dir=run_dir,
        run_id=run_id,
        method="combined",
    )
    phases = [
        Phase(PHASE_DISTILLED, syn_iters, syn_data),
        Phase(PHASE_IMP, imp_schedule.iterations, real_data),
    ]
    return runner.run(phases, resume=resume)


def load_reference(run_dir: Union[str, os.PathLike]) -> ModelState:
    """Rewind reference state of a saved run"""
    return load_state(os.path.join(os.fspath(run_dir), STATE_DIR, REFERENCE_FILE))


def load_trained(run_dir: Union[str, os.PathLike], record: PruneRunRecord) -> ModelState:
    """Real-data trained state of the last committed iteration"""
    t = len(record.iterations) - 1
    return load_state(os.path.join(os.fspath(run_dir), STATE_DIR, state_file_name(t, "real")))


__all__ = [
    "Phase",
    "PruningRunner",
    "load_reference",
    "load_trained",
    "run_combined",
    "run_distilled_pruning",
    "run_imp",
]
