"""
Directional experiments on a desk-scale blob task

These take minutes; run them with `pytest -m slow`.
"""

from dataclasses import replace

import numpy as np
import pytest

from synprune.analysis import hessian_diag, lmc_study
from synprune.data import load_dataset, sample_per_class
from synprune.distill import eval_distillate
from synprune.experiments import cmd_analyze, cmd_compare, cmd_distill, cmd_prune, load_config, load_task
from synprune.experiments.models import apply_overrides
from synprune.experiments.runner import SYNTHETIC_DIR
from synprune.models.state import init_state
from synprune.pruning import PruneSchedule, run_combined, run_distilled_pruning, run_imp
from synprune.training import train

pytestmark = pytest.mark.slow

DESK = {
    "task": {"per_class": 200, "test_per_class": 100, "dim": 20, "spread": 0.5},
    "arch": {"hidden": [64]},
    "train": {"epochs": 8, "batch_size": 32},
    "distill": {"ipc": 4, "outer_steps": 20, "teacher_seeds": [0, 1]},
    "prune": {"iterations": 4},
    "analysis": {"iterations": [0, 4], "lmc": {"alpha_steps": 11}},
    "eval": {"student_seeds": [0, 1]},
}


@pytest.fixture(scope="module")
def desk_dir(tmp_path_factory):
    return tmp_path_factory.mktemp("desk")


@pytest.fixture(scope="module")
def runs(desk_dir):
    config = load_config(overrides=DESK)
    distilled = cmd_distill(config, desk_dir)
    synthetic = str(desk_dir / f"distill-{distilled.run_id}" / SYNTHETIC_DIR)
    syn_config = apply_overrides(config, "prune", {"method": "distilled", "synthetic_path": synthetic})
    syn_run = cmd_prune(syn_config, desk_dir)
    imp_run = cmd_prune(config, desk_dir)
    syn_dir = desk_dir / f"prune-{syn_run.run_id}"
    imp_dir = desk_dir / f"prune-{imp_run.run_id}"
    for record_dir in (syn_dir, imp_dir):
        cmd_analyze(config, record_dir)
    _, frame = cmd_compare(syn_dir, imp_dir, desk_dir)
    return distilled, syn_run, imp_run, frame


def test_distilled_masks_keep_accuracy(runs):
    """Masks found with 4 images per class still train to high accuracy on real data"""
    _, syn_run, _, _ = runs
    assert syn_run.results["final_sparsity"] == pytest.approx(0.5904, abs=2e-3)
    assert syn_run.results["final_test_acc"] >= 0.9


def test_performance_ratio_near_one(runs):
    """On separable blobs the synthetic subnetwork matches IMP at every analyzed sparsity"""
    _, _, _, frame = runs
    assert len(frame) == 2
    assert (frame["performance_ratio"] >= 0.9).all()
    assert (frame["compression"] == 50.0).all()


def test_distillate_beats_chance(runs):
    distilled, _, _, _ = runs
    assert distilled.results["distillate_acc_mean"] > 0.5


# ========== Paired runs over several initializations ==========

PAIRED_SEEDS = (0, 1, 2, 3)


@pytest.fixture(scope="module")
def desk_task(runs, desk_dir):
    distilled, _, _, _ = runs
    config = load_config(overrides=DESK)
    task = load_task(config)
    arch = config.arch.build(task.train.feature_shape, task.train.class_count)
    synthetic = load_dataset(desk_dir / f"distill-{distilled.run_id}" / SYNTHETIC_DIR)
    return config, task, arch, synthetic


def test_distilled_masks_are_more_stable(desk_task):
    """Mean barrier and Hessian scale under distilled masks stay at or below their IMP / dense counterparts"""
    config, task, arch, synthetic = desk_task
    recipe = config.recipe()
    imp_schedule = PruneSchedule(iterations=4)
    syn_schedule = PruneSchedule(iterations=4, method="distilled")
    syn_barriers, imp_barriers, syn_curvature, dense_curvature = [], [], [], []
    for seed in PAIRED_SEEDS:
        init = init_state(arch, seed)
        syn_mask = run_distilled_pruning(init, synthetic, task.train, recipe, syn_schedule).final().mask
        imp_mask = run_imp(init, task.train, recipe, imp_schedule).final().mask
        for mask, barriers in ((syn_mask, syn_barriers), (imp_mask, imp_barriers)):
            report = lmc_study(init, mask, task.train, recipe, 1, 2, alpha_steps=11)
            barriers.append(report.barrier_height)

        syn_trained = train(init, syn_mask, task.train, recipe).state
        dense_trained = train(init, None, task.train, recipe).state
        syn_curvature.append(hessian_diag(syn_trained, syn_mask, task.train, probe_count=100, seed=seed).mean_abs)
        dense_curvature.append(hessian_diag(dense_trained, None, task.train, probe_count=100, seed=seed).mean_abs)

    assert np.mean(syn_barriers) <= np.mean(imp_barriers) + 1e-3
    assert np.mean(syn_curvature) <= np.mean(dense_curvature)


def test_combined_keeps_imp_accuracy_at_high_sparsity(desk_task):
    """8 distilled rounds then 3 IMP rounds (91.4% sparse) against 11 IMP rounds"""
    config, task, arch, synthetic = desk_task
    recipe = config.recipe()
    combined_acc, imp_acc = [], []
    for seed in PAIRED_SEEDS:
        init = init_state(arch, seed)
        combined = run_combined(init, synthetic, task.train, recipe, 8, PruneSchedule(iterations=3),
                                test_data=task.test).final()
        imp = run_imp(init, task.train, recipe, PruneSchedule(iterations=11), test_data=task.test).final()
        assert combined.sparsity == pytest.approx(imp.sparsity)
        assert combined.sparsity >= 0.9
        combined_acc.append(combined.test_acc)
        imp_acc.append(imp.test_acc)
    assert np.mean(combined_acc) >= np.mean(imp_acc) - 0.01


# ========== Distillate value ==========

OVERLAPPING = {
    "task": {"per_class": 200, "test_per_class": 100, "dim": 20, "spread": 3.0},
    "arch": {"hidden": [64]},
    "train": {"epochs": 8, "batch_size": 32},
    "distill": {"ipc": 1, "outer_steps": 40, "teacher_seeds": [0, 1]},
    "eval": {"student_seeds": [0, 1, 2, 3, 4]},
}

MANY_CLASSES = {
    "task": {"class_count": 20, "per_class": 50, "test_per_class": 20, "dim": 20, "spread": 0.5},
    "arch": {"hidden": [64]},
    "train": {"epochs": 8, "batch_size": 32},
    "distill": {"ipc": 2, "outer_steps": 10, "teacher_seeds": [0]},
    "eval": {"student_seeds": [0, 1, 2, 3, 4]},
}


def _distilled(tmp_path_factory, overrides, name):
    config = load_config(overrides=overrides)
    out = tmp_path_factory.mktemp(name)
    manifest = cmd_distill(config, out)
    task = load_task(config)
    arch = config.arch.build(task.train.feature_shape, task.train.class_count)
    synthetic = load_dataset(out / f"distill-{manifest.run_id}" / SYNTHETIC_DIR)
    return config, task, arch, synthetic


def test_distillate_beats_random_real_subset(tmp_path_factory):
    """On overlapping blobs the distillate does at least as well as the real subset it started from"""
    config, task, arch, synthetic = _distilled(tmp_path_factory, OVERLAPPING, "overlap")
    recipe = config.recipe()
    seeds = config.eval.student_seeds
    baseline = sample_per_class(task.train, ipc=1, seed=config.distill_config().seed)
    distilled = eval_distillate(synthetic, task.test, arch, recipe, seeds)
    random_real = eval_distillate(baseline, task.test, arch, recipe, seeds)
    assert distilled.mean >= random_real.mean


def test_label_permuted_distillate_scores_chance(tmp_path_factory):
    config, task, arch, synthetic = _distilled(tmp_path_factory, MANY_CLASSES, "many")
    recipe = config.recipe()
    chance = 1.0 / task.train.class_count
    scores = []
    for shuffle in range(4):
        labels = np.random.default_rng(shuffle).permutation(synthetic.labels)
        permuted = replace(synthetic, labels=labels)
        scores.extend(eval_distillate(permuted, task.test, arch, recipe, config.eval.student_seeds).accuracies)
    assert abs(np.mean(scores) - chance) <= 0.05
