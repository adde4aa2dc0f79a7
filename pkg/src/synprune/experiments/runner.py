"""
Experiment Runner

Wires data, distillation, pruning and analysis into reproducible runs.
Every subcommand writes a run directory holding its artifacts plus a
run_manifest.json; re-running a completed manifest is a no-op.
"""

import glob
import logging
import os
import re
import shutil
import subprocess
import sys
import time
from contextlib import contextmanager
from dataclasses import dataclass
from typing import Any, Dict, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
import pydantic
import yaml

from ..analysis.compare import compare_records
from ..analysis.hessian import EXACT_PARAM_LIMIT, hessian_diag
from ..analysis.landscape import landscape_grid
from ..analysis.ledger import append_row, merge_ledgers
from ..analysis.lmc import InstabilityReport, lmc_study, train_branches
from ..data.container import load_dataset, save_dataset
from ..data.dataset import DatasetRole, LabeledDataset, split_dataset
from ..data.idx import load_idx
from ..data.ordering import CompressionRatio, compression_ratio
from ..data.synthetic import make_blobs
from ..distill.distiller import Distiller, eval_distillate, validation_gap
from ..distill.trajectories import TrajectoryBank, record_teachers
from ..exceptions import ConfigError, MissingArtifactError, MissingCheckpointError
from ..models.state import ModelState, init_state
from ..pruning.magnitude import PruneSchedule
from ..pruning.pipelines import (
    PHASE_IMP,
    load_reference,
    run_combined,
    run_distilled_pruning,
    run_imp,
)
from ..pruning.record import CSV_FILE, MASK_DIR, RECORD_FILE, STATE_DIR, PruneRunRecord
from ..utils.helpers import atomic_write, canonical_json, format_timestamp
from .models import (
    ExperimentConfig,
    RunManifest,
    list_artifacts,
    load_config,
    run_id_for,
)
from .result_processor import ResultProcessor

logger = logging.getLogger(__name__)

PathLike = Union[str, os.PathLike]

LEDGER_FILE = "ledger.jsonl"
ANALYSIS_DIR = "analysis"
SYNTHETIC_DIR = "synthetic"
BANK_FILE = "trajectories.npz"
SWEEP_CONFIG_FILE = "config.yaml"
ANALYSES = ("lmc", "landscape", "hessian")

_LMC_STEM = re.compile(r"lmc_iter_(\d+)\.json$")


@dataclass
class TaskData:
    """Real data of one experiment"""
    train: LabeledDataset
    validation: Optional[LabeledDataset]
    test: LabeledDataset
    real_per_class: int


def load_task(config: ExperimentConfig) -> TaskData:
    """
    Build the real train / validation / test sets

    Blobs draw the test set as an independent sample around the same means.
    IDX tasks without test files hold out 20% of the training file per class.
    The compression ratio counts the configured examples per class, before the
    validation split.
    """
    task = config.task
    if task.kind == "blobs":
        full = make_blobs(task.class_count, task.per_class, task.dim, task.spread, task.data_seed)
        test = make_blobs(task.class_count, task.test_per_class, task.dim, task.spread, task.data_seed,
                          draw=1, role=DatasetRole.TEST)
        real_per_class = task.per_class
    else:
        full = load_idx(task.images, task.labels, class_count=task.class_count)
        if task.test_images and task.test_labels:
            test = load_idx(task.test_images, task.test_labels, role=DatasetRole.TEST, class_count=task.class_count)
        else:
            full, test = split_dataset(full, 0.2, seed=task.data_seed, held_out_role=DatasetRole.TEST)
        real_per_class = full.per_class() or int(full.class_counts().max())

    validation = None
    train = full
    if task.validation_fraction > 0:
        train, validation = split_dataset(full, task.validation_fraction, seed=task.data_seed)
    return TaskData(train=train, validation=validation, test=test, real_per_class=real_per_class)


# ========== Manifest bookkeeping ==========

def _versions(config: ExperimentConfig) -> Dict[str, str]:
    from .. import __version__
    return {
        "synprune": __version__,
        "defaults": str(config.defaults_version),
        "numpy": np.__version__,
        "pandas": pd.__version__,
        "pydantic": pydantic.VERSION,
    }


def _open_run(
    subcommand: str,
    run_id: str,
    run_dir: str,
    config: ExperimentConfig,
    parameters: Dict[str, Any],
) -> Tuple[RunManifest, bool]:
    """(manifest, already_complete)"""
    existing = RunManifest.find(run_dir)
    if existing is not None and existing.run_id == run_id and existing.complete:
        logger.info(f"Run {run_id} already complete in {run_dir}; nothing to do")
        return existing, True
    os.makedirs(run_dir, exist_ok=True)
    manifest = RunManifest(
        run_id=run_id,
        subcommand=subcommand,
        config=config.model_dump(mode="json"),
        parameters=parameters,
        seeds=config.seeds.model_dump(mode="json"),
        versions=_versions(config),
        started_at=format_timestamp(),
    )
    manifest.save(run_dir)
    return manifest, False


@contextmanager
def _tracked(manifest: RunManifest, run_dir: str) -> Iterator[RunManifest]:
    """Mark the manifest complete on success, failed (and re-raise) otherwise"""
    started = time.perf_counter()
    try:
        yield manifest
    except Exception as e:
        manifest.status = "failed"
        manifest.error = f"{type(e).__name__}: {e}"
        manifest.finished_at = format_timestamp()
        manifest.wall_seconds = time.perf_counter() - started
        manifest.artifacts = list_artifacts(run_dir)
        manifest.save(run_dir)
        logger.error(f"Run {manifest.run_id} failed: {manifest.error}")
        raise
    manifest.status = "complete"
    manifest.finished_at = format_timestamp()
    manifest.wall_seconds = time.perf_counter() - started
    manifest.artifacts = list_artifacts(run_dir)
    manifest.save(run_dir)


def _log_summary(title: str, values: Dict[str, Any]) -> None:
    logger.info("=" * 60)
    logger.info(f"   {title}")
    logger.info("=" * 60)
    for line in ResultProcessor.format_summary(values):
        logger.info(line)
    logger.info("=" * 60)


# ========== distill ==========

def cmd_distill(config: ExperimentConfig, out_dir: PathLike, resume: bool = False) -> RunManifest:
    """
    Distill the real training set into config.distill.ipc examples per class

    Writes the teacher bank, the synthetic set container, the matching-loss
    history and the distillate scores.

    Raises:
        NumericFailureError: a teacher or the distillation diverged (manifest marked failed)
    """
    run_id = run_id_for("distill", config, {})
    run_dir = os.path.join(os.fspath(out_dir), f"distill-{run_id}")
    manifest, done = _open_run("distill", run_id, run_dir, config, {})
    if done:
        return manifest

    with _tracked(manifest, run_dir):
        task = load_task(config)
        recipe = config.recipe()
        distill_config = config.distill_config()
        arch = config.arch.build(task.train.feature_shape, task.train.class_count)
        ratio = compression_ratio(task.real_per_class, distill_config.ipc)

        logger.info("=" * 60)
        logger.info(f"   Distill run {run_id}: {len(task.train)} real examples, "
                    f"ipc {distill_config.ipc}, compression {float(ratio):g}x")
        logger.info("=" * 60)

        bank_path = os.path.join(run_dir, BANK_FILE)
        if resume and os.path.exists(bank_path):
            logger.info(f"Reusing teacher bank {bank_path}")
            bank = TrajectoryBank.load(bank_path)
        else:
            bank = record_teachers(task.train, recipe, distill_config.teacher_seeds,
                                   distill_config.snapshot_interval, arch)
            bank.save(bank_path)

        distiller = Distiller(task.train, bank, distill_config, recipe.lr)
        synthetic = distiller.run()
        save_dataset(synthetic, os.path.join(run_dir, SYNTHETIC_DIR),
                     extra={"compression": ratio.to_dict(), "run_id": run_id})
        ResultProcessor.write_csv(
            pd.DataFrame({"outer_step": np.arange(len(distiller.loss_history)),
                          "matching_loss": distiller.loss_history}),
            os.path.join(run_dir, "matching_loss.csv"),
        )

        score = eval_distillate(synthetic, task.test, arch, recipe, config.eval.student_seeds)
        ResultProcessor.write_csv(
            pd.DataFrame({"student_seed": list(config.eval.student_seeds), "accuracy": score.accuracies}),
            os.path.join(run_dir, "distillate_scores.csv"),
        )
        results: Dict[str, Any] = {
            "compression": ratio.to_dict(),
            "distillate_acc_mean": score.mean,
            "distillate_acc_std": score.std,
            "bank_hash": bank.bank_hash(),
            "synthetic_hash": synthetic.dataset_hash(),
            "skipped_steps": distiller.skipped,
        }
        if task.validation is not None:
            results["validation_gap"] = validation_gap(task.train, synthetic, task.validation, arch, recipe,
                                                       seed=config.seeds.init)
        manifest.results = results
        append_row(os.path.join(os.fspath(out_dir), LEDGER_FILE), {
            "kind": "distill",
            "run_id": run_id,
            "ipc": distill_config.ipc,
            "compression_ratio": float(ratio),
            "distillate_acc_mean": score.mean,
            "distillate_acc_std": score.std,
            "validation_gap": results.get("validation_gap"),
        })
        _log_summary("Distillation Results", {
            "compression": float(ratio),
            "distillate acc": score.mean,
            "distillate std": score.std,
        })
    return manifest


# ========== prune ==========

def _load_synthetic(path: Optional[str], method: str) -> LabeledDataset:
    if not path:
        raise MissingArtifactError(
            f"method '{method}' needs a synthetic set; run `synprune distill` first and pass its "
            f"'{SYNTHETIC_DIR}' directory with --synthetic (or prune.synthetic_path)"
        )
    if not os.path.isdir(path):
        raise MissingArtifactError(
            f"no synthetic set at {path}; run `synprune distill` first and pass its '{SYNTHETIC_DIR}' directory"
        )
    return load_dataset(path)


def _clear_record(run_dir: str) -> None:
    for name in (RECORD_FILE, CSV_FILE):
        path = os.path.join(run_dir, name)
        if os.path.exists(path):
            os.remove(path)
    for name in (MASK_DIR, STATE_DIR):
        shutil.rmtree(os.path.join(run_dir, name), ignore_errors=True)


def cmd_prune(config: ExperimentConfig, out_dir: PathLike, resume: bool = False) -> RunManifest:
    """
    Run the pruning pipeline selected by config.prune.method

    imp rewinds to config.prune.rewind_epoch; distilled and combined read the
    synthetic set at config.prune.synthetic_path. Without resume a partial
    record in the run directory is discarded.

    Raises:
        MissingArtifactError: distilled / combined without a synthetic set
    """
    prune = config.prune
    synthetic = None
    if prune.method != PHASE_IMP:
        synthetic = _load_synthetic(prune.synthetic_path, prune.method)
    parameters = {"synthetic_hash": synthetic.dataset_hash() if synthetic is not None else None}
    run_id = run_id_for("prune", config, parameters)
    run_dir = os.path.join(os.fspath(out_dir), f"prune-{run_id}")
    manifest, done = _open_run("prune", run_id, run_dir, config, parameters)
    if done:
        return manifest
    if not resume:
        _clear_record(run_dir)

    with _tracked(manifest, run_dir):
        task = load_task(config)
        recipe = config.recipe()
        arch = config.arch.build(task.train.feature_shape, task.train.class_count)
        init = init_state(arch, config.seeds.init)

        common = dict(test_data=task.test, run_dir=run_dir, run_id=run_id, resume=resume)
        imp_schedule = PruneSchedule(
            fraction_per_iter=prune.fraction_per_iter,
            iterations=prune.iterations,
            method="imp",
            rewind_epoch=prune.rewind_epoch,
            scope=prune.scope,
        )
        if prune.method == "imp":
            record = run_imp(init, task.train, recipe, imp_schedule, **common)
        elif prune.method == "distilled":
            schedule = imp_schedule.model_copy(update={"method": "distilled"})
            record = run_distilled_pruning(init, synthetic, task.train, recipe, schedule, **common)
        else:
            record = run_combined(init, synthetic, task.train, recipe, prune.syn_iters, imp_schedule, **common)

        ResultProcessor.write_csv(ResultProcessor.sparsity_curve(record), os.path.join(run_dir, "sparsity_accuracy.csv"))
        ResultProcessor.write_csv(ResultProcessor.layer_density_table(record), os.path.join(run_dir, "layer_density.csv"))

        final = record.final()
        results: Dict[str, Any] = {
            "final_sparsity": final.sparsity,
            "final_test_acc": final.test_acc,
            "matching_iterations": record.matching_iterations(),
            "data_points_used": final.data_points_used,
        }
        if record.phase_boundary is not None:
            results["phase_boundary"] = record.phase_boundary
            results["phase_boundary_sparsity"] = record.at_iteration(record.phase_boundary).sparsity
        if synthetic is not None:
            results["compression"] = compression_ratio(task.real_per_class, synthetic.ipc).to_dict()
        manifest.results = results

        ledger = os.path.join(os.fspath(out_dir), LEDGER_FILE)
        for entry in record.iterations:
            append_row(ledger, {
                "kind": "prune",
                "run_id": run_id,
                "method": record.method,
                "init_seed": record.init_seed,
                "iteration": entry.iteration,
                "phase": entry.phase,
                "sparsity": entry.sparsity,
                "test_acc": entry.test_acc,
                "data_points_used": entry.data_points_used,
            })
        _log_summary("Pruning Results", {
            "method": record.method,
            "iterations": len(record.iterations) - 1,
            "final sparsity": final.sparsity,
            "final test acc": final.test_acc,
        })
    return manifest


# ========== analyze ==========

def lmc_stem(iteration: int) -> str:
    return f"lmc_iter_{iteration:03d}"


def _method_tag(record: PruneRunRecord, iteration: int) -> str:
    if iteration == 0:
        return "dense"
    return "imp" if record.at_iteration(iteration).phase == PHASE_IMP else "synthetic"


def _branch_start(record: PruneRunRecord, reference: ModelState, iteration: int) -> Tuple[ModelState, int]:
    """(state, start epoch) the pipeline trained iteration t from"""
    if iteration == 0:
        return init_state(record.arch, record.init_seed), 0
    return reference, record.rewind_epoch


def _analysis_iterations(config: ExperimentConfig, record: PruneRunRecord) -> List[int]:
    available = len(record.iterations)
    requested = list(config.analysis.iterations) or list(range(available))
    missing = [t for t in requested if t < 0 or t >= available]
    if missing:
        raise MissingCheckpointError(
            f"record {record.run_id} has no iterations {missing} (it holds 0..{available - 1})",
            record.sparsities(),
        )
    return requested


def cmd_analyze(
    config: ExperimentConfig,
    record_path: PathLike,
    analyses: Optional[Sequence[str]] = None,
    out_dir: Optional[PathLike] = None,
) -> RunManifest:
    """
    Run the requested analyses at each selected iteration of a pruning record

    Reports go to <record_path>/analysis; ledger rows go to out_dir (the
    record's parent directory by default).

    Raises:
        ConfigError: unknown analysis, or exact-tiny on a model above the parameter limit
        MissingArtifactError: no record at record_path
        MissingCheckpointError: requested iterations absent from the record
    """
    record_path = os.fspath(record_path)
    analyses = tuple(analyses) if analyses else tuple(config.analysis.analyses)
    unknown = [name for name in analyses if name not in ANALYSES]
    if unknown:
        raise ConfigError(f"unknown analyses {unknown}; choose from {list(ANALYSES)}", field="analysis.analyses")

    record = PruneRunRecord.load(record_path)
    hessian = config.analysis.hessian
    if "hessian" in analyses and hessian.estimator == "exact-tiny" and record.arch.param_count > EXACT_PARAM_LIMIT:
        raise ConfigError(
            f"exact-tiny needs at most {EXACT_PARAM_LIMIT} parameters, model has {record.arch.param_count}; "
            f"use estimator 'hutchinson'",
            field="analysis.hessian.estimator",
        )
    iterations = _analysis_iterations(config, record)

    parameters = {"record": record.run_id, "analyses": list(analyses), "iterations": iterations}
    run_id = run_id_for("analyze", config, parameters)
    run_dir = os.path.join(record_path, ANALYSIS_DIR)
    manifest, done = _open_run("analyze", run_id, run_dir, config, parameters)
    if done:
        return manifest

    ledger = os.path.join(os.fspath(out_dir) if out_dir is not None else os.path.dirname(record_path), LEDGER_FILE)
    with _tracked(manifest, run_dir):
        task = load_task(config)
        expected = record.metadata.get("real_examples")
        if expected is not None and expected != len(task.train):
            raise ConfigError(
                f"record was trained on {expected} real examples, this task has {len(task.train)}",
                field="task",
            )
        recipe = config.recipe()
        reference = load_reference(record_path)
        seed_a, seed_b = config.seeds.order
        batch_size = config.analysis.batch_size

        logger.info("=" * 60)
        logger.info(f"   Analyze run {run_id}: {', '.join(analyses)} at iterations {iterations}")
        logger.info("=" * 60)

        rows = []
        reports: Dict[int, InstabilityReport] = {}
        for t in iterations:
            entry = record.at_iteration(t)
            mask = entry.mask
            start, start_epoch = _branch_start(record, reference, t)
            tag = _method_tag(record, t)
            row: Dict[str, Any] = {
                "kind": "analyze",
                "run_id": run_id,
                "record_run_id": record.run_id,
                "method": record.method,
                "method_tag": tag,
                "iteration": t,
                "sparsity": entry.sparsity,
            }
            branches = None
            if "lmc" in analyses:
                report = lmc_study(
                    start, mask, task.train, recipe, seed_a, seed_b,
                    alpha_steps=config.analysis.lmc.alpha_steps,
                    test_data=task.test,
                    method_tag=tag,
                    allow_equal_seeds=config.analysis.lmc.allow_equal_seeds,
                    batch_size=batch_size,
                    start_epoch=start_epoch,
                )
                report.save(run_dir, lmc_stem(t))
                reports[t] = report
                branches = report.branches
                row.update(barrier_height=report.barrier_height, max_barrier=report.max_barrier,
                           acc_a=report.endpoint_accs[0], acc_b=report.endpoint_accs[1])
            if branches is None and ("landscape" in analyses or "hessian" in analyses):
                branches = train_branches(start, mask, task.train, recipe, seed_a, seed_b, start_epoch=start_epoch)
            if "landscape" in analyses:
                grid = landscape_grid(
                    branches[0], branches[1], task.train,
                    grid_n=config.analysis.landscape.grid_n,
                    margin=config.analysis.landscape.margin,
                    mask=mask,
                    seed=config.seeds.init,
                    batch_size=batch_size,
                )
                grid.save(run_dir, f"landscape_iter_{t:03d}")
                row["landscape_evaluations"] = grid.evaluations
            if "hessian" in analyses:
                summary = hessian_diag(
                    branches[0], mask, task.train,
                    estimator=hessian.estimator,
                    probe_count=hessian.probe_count,
                    batch_size=batch_size,
                    seed=config.seeds.init,
                )
                atomic_write(os.path.join(run_dir, f"hessian_iter_{t:03d}.json"),
                             canonical_json(summary.to_dict()))
                row.update({f"hessian_{key}": summary.to_dict()[key] for key in ("min", "max", "mean", "mean_abs")})
            append_row(ledger, row)
            rows.append(row)

        ResultProcessor.write_csv(pd.DataFrame(rows), os.path.join(run_dir, "analysis_summary.csv"))
        if reports:
            ResultProcessor.write_csv(ResultProcessor.instability_table(reports),
                                      os.path.join(run_dir, "instability.csv"))
        manifest.results = {"iterations": iterations, "analyses": list(analyses)}
    return manifest


# ========== compare ==========

def load_reports(run_dir: PathLike) -> Dict[float, InstabilityReport]:
    """Saved LMC reports of an analyzed run, keyed by sparsity"""
    analysis_dir = os.path.join(os.fspath(run_dir), ANALYSIS_DIR)
    paths = sorted(glob.glob(os.path.join(analysis_dir, "lmc_iter_*.json")))
    if not paths:
        raise MissingArtifactError(f"no LMC reports under {analysis_dir}; run `synprune analyze` first")
    reports = {}
    for path in paths:
        iteration = int(_LMC_STEM.search(path).group(1))
        report = InstabilityReport.load(analysis_dir, lmc_stem(iteration))
        reports[report.sparsity] = report
    return reports


def _compression_of(run_dir: PathLike) -> Optional[CompressionRatio]:
    manifest = RunManifest.find(run_dir)
    if manifest is None or "compression" not in manifest.results:
        return None
    data = manifest.results["compression"]
    return compression_ratio(int(data["real_per_class"]), int(data["ipc"]))


def cmd_compare(syn_run: PathLike, imp_run: PathLike, out_dir: PathLike) -> Tuple[RunManifest, pd.DataFrame]:
    """
    Performance and stability ratios at every checkpoint analyzed in both runs

    Raises:
        MissingArtifactError: a run lacks its record or its LMC reports
        MissingCheckpointError: the runs share no analyzed checkpoint
    """
    syn_record = PruneRunRecord.load(syn_run)
    imp_record = PruneRunRecord.load(imp_run)
    syn_reports = load_reports(syn_run)
    imp_reports = load_reports(imp_run)
    compression = _compression_of(syn_run)

    frame = compare_records(syn_record, imp_record, syn_reports, imp_reports, compression)
    parameters = {
        "syn_run": syn_record.run_id,
        "imp_run": imp_record.run_id,
        "syn_reports": sorted(syn_reports),
        "imp_reports": sorted(imp_reports),
    }
    run_id = run_id_for("compare", None, parameters)
    run_dir = os.path.join(os.fspath(out_dir), f"compare-{run_id}")
    existing = RunManifest.find(run_dir)
    if existing is not None and existing.run_id == run_id and existing.complete:
        logger.info(f"Run {run_id} already complete in {run_dir}; nothing to do")
        return existing, frame

    os.makedirs(run_dir, exist_ok=True)
    manifest = RunManifest(run_id=run_id, subcommand="compare", config={}, parameters=parameters,
                           started_at=format_timestamp())
    with _tracked(manifest, run_dir):
        ResultProcessor.write_csv(frame, os.path.join(run_dir, "comparison.csv"))
        ResultProcessor.write_csv(ResultProcessor.scatter_table(frame), os.path.join(run_dir, "scatter.csv"))
        ledger = os.path.join(os.fspath(out_dir), LEDGER_FILE)
        for row in frame.to_dict(orient="records"):
            append_row(ledger, {"kind": "compare", "run_id": run_id, **row})
        manifest.results = {"rows": len(frame), "degenerate_rows": int(frame["degenerate"].sum())}
        for row in frame.itertuples():
            logger.info(f"   sparsity {row.sparsity:.4f}: performance {row.performance_ratio:.4f}, "
                        f"stability {row.stability_ratio:.4f}")
    return manifest, frame


# ========== sweep ==========

def sweep_seeds(seed: int) -> Tuple[int, Tuple[int, int]]:
    """(init seed, order seed pair) of one sweep member; both vary with the member seed"""
    return seed, (2 * seed + 1, 2 * seed + 2)


def _launch(commands: List[List[str]]) -> List[int]:
    """Start every command as an independent process, wait for all, return exit codes"""
    processes = [subprocess.Popen(command) for command in commands]
    return [process.wait() for process in processes]


def _completed_prune_dirs(seed_dir: str) -> List[str]:
    found = []
    for path in sorted(glob.glob(os.path.join(seed_dir, "prune-*"))):
        manifest = RunManifest.find(path)
        if manifest is not None and manifest.complete:
            found.append(path)
    return found


def cmd_sweep(
    config_path: Optional[PathLike],
    seeds: Sequence[int],
    out_dir: PathLike,
    analyses: Optional[Sequence[str]] = None,
    verbose: bool = False,
) -> Tuple[int, Optional[pd.DataFrame]]:
    """
    Prune and analyze once per seed in independent processes, then merge the ledgers

    Each member gets a copy of the config with seeds.init = s and
    seeds.order = (2s + 1, 2s + 2) under <out_dir>/seed-<s>.

    Returns:
        (worst child exit code, merged ledger or None when nothing finished)
    """
    if not seeds:
        raise ConfigError("sweep needs at least one seed", field="--seeds")
    base = load_config(config_path)
    out_dir = os.fspath(out_dir)
    flags = ["--verbose"] if verbose else []

    member_dirs = {}
    prune_commands = []
    for seed in seeds:
        init, order = sweep_seeds(seed)
        member = base.with_seeds(init, order)
        seed_dir = os.path.join(out_dir, f"seed-{seed}")
        os.makedirs(seed_dir, exist_ok=True)
        config_file = os.path.join(seed_dir, SWEEP_CONFIG_FILE)
        atomic_write(config_file, yaml.safe_dump(member.model_dump(mode="json"), sort_keys=True))
        member_dirs[seed] = (seed_dir, config_file)
        prune_commands.append([sys.executable, "-m", "synprune", *flags, "prune",
                               "--config", config_file, "--out-dir", seed_dir])

    logger.info("=" * 60)
    logger.info(f"   Sweep over seeds {list(seeds)} ({len(seeds)} processes per stage)")
    logger.info("=" * 60)
    codes = _launch(prune_commands)

    analyze_commands = []
    for seed, code in zip(seeds, codes):
        seed_dir, config_file = member_dirs[seed]
        if code != 0:
            logger.warning(f"seed {seed}: prune exited with code {code}")
            continue
        for record_dir in _completed_prune_dirs(seed_dir):
            command = [sys.executable, "-m", "synprune", *flags, "analyze",
                       "--config", config_file, "--record", record_dir, "--out-dir", seed_dir]
            if analyses:
                command += ["--analyses", *analyses]
            analyze_commands.append(command)
    codes += _launch(analyze_commands)

    ledgers = [os.path.join(member_dirs[s][0], LEDGER_FILE) for s in seeds]
    ledgers = [path for path in ledgers if os.path.exists(path)]
    merged = merge_ledgers(ledgers, os.path.join(out_dir, LEDGER_FILE)) if ledgers else None
    worst = max(codes, default=0)
    logger.info(f"Sweep finished: {len(ledgers)} ledgers merged, worst exit code {worst}")
    return worst, merged
