"""
Test linear mode connectivity, loss landscapes, Hessian diagonals, comparisons and ledgers
"""

import json

import numpy as np
import pytest

from synprune.analysis import (
    InstabilityReport,
    append_row,
    barrier_height,
    compare,
    compare_records,
    hessian_diag,
    landscape_grid,
    lmc_study,
    merge_ledgers,
    read_ledger,
)
from synprune.analysis.compare import RATIO_CAP, stability_ratio
from synprune.analysis.hessian import HessianSummary, diagonal_estimate
from synprune.analysis.landscape import plane_basis, plane_grid
from synprune.analysis.lmc import alpha_grid, max_barrier, path_losses, train_branches
from synprune.core import QuadraticObjective
from synprune.data import compression_ratio, make_blobs
from synprune.exceptions import (
    ConfigError,
    DegeneratePairError,
    InvalidParameterError,
    MissingArtifactError,
    MissingCheckpointError,
)
from synprune.models.architecture import mlp
from synprune.models.state import init_state
from synprune.pruning import PruneSchedule, SparsityMask, magnitude_prune, run_imp
from synprune.pruning.pipelines import load_reference, load_trained
from synprune.training import train


def report(sparsity, barrier, tag="imp"):
    """Hand-built report whose midpoint sits `barrier` above flat endpoints"""
    return InstabilityReport(
        alphas=[0.0, 0.5, 1.0],
        losses=[0.1, 0.1 + barrier, 0.1],
        endpoint_accs=(0.9, 0.9),
        barrier_height=barrier,
        sparsity=sparsity,
        method_tag=tag,
    )


class TestBarrier:

    def test_midpoint_barrier(self):
        assert barrier_height([0.1, 0.6, 0.1], [0.0, 0.5, 1.0]) == pytest.approx(0.5)

    def test_floored_at_zero(self):
        assert barrier_height([1.0, 0.2, 1.0], [0.0, 0.5, 1.0]) == 0.0

    def test_max_barrier_sees_off_midpoint_peaks(self):
        alphas = [0.0, 0.25, 0.5, 0.75, 1.0]
        losses = [0.0, 1.0, 0.0, 0.0, 0.0]
        assert barrier_height(losses, alphas) == 0.0
        assert max_barrier(losses, alphas) == pytest.approx(1.0)

    def test_alpha_grid_always_has_midpoint(self):
        assert alpha_grid(21).size == 21
        grid = alpha_grid(4)
        assert grid.size == 5
        assert 0.5 in grid

    def test_grid_lacking_midpoint(self):
        with pytest.raises(InvalidParameterError):
            barrier_height([0.0, 1.0], [0.0, 1.0])

    def test_parallel_path_matches_serial(self):
        objective = QuadraticObjective(np.diag([1.0, 2.0, 3.0]))
        alphas = alpha_grid(7)
        a, b = np.zeros(3), np.ones(3)
        serial = path_losses(a, b, alphas, objective.loss, workers=1)
        parallel = path_losses(a, b, alphas, objective.loss, workers=4)
        assert np.array_equal(serial, parallel)


class TestLmcStudy:

    def test_equal_seeds_need_opt_in(self, init, blobs, recipe):
        with pytest.raises(InvalidParameterError):
            lmc_study(init, None, blobs, recipe, 1, 1)

    def test_equal_seeds_have_no_barrier(self, init, blobs, recipe):
        result = lmc_study(init, None, blobs, recipe, 1, 1, alpha_steps=5, allow_equal_seeds=True)
        assert result.branches[0] == result.branches[1]
        assert result.barrier_height == pytest.approx(0.0, abs=1e-9)

    @pytest.mark.parametrize("seeds", [(1, 2), (3, 4), (5, 6), (7, 8)])
    def test_convex_model_has_no_barrier(self, tiny_linear, blobs, recipe, seeds):
        """Softmax regression is convex, so the midpoint never rises above the endpoint mean"""
        init = init_state(tiny_linear, 0)
        result = lmc_study(init, None, blobs, recipe, *seeds, alpha_steps=11)
        assert result.barrier_height == pytest.approx(0.0, abs=1e-9)
        assert result.max_barrier == pytest.approx(0.0, abs=1e-9)
        assert result.order_seeds == seeds

    def test_masked_branches(self, init, blobs, recipe):
        trained = train(init, None, blobs, recipe).state
        mask = magnitude_prune(trained, SparsityMask.dense(init.arch), 0.5)
        result = lmc_study(init, mask, blobs, recipe, 1, 2, alpha_steps=5, method_tag="imp")
        assert result.sparsity == pytest.approx(mask.sparsity)
        for branch in result.branches:
            assert not branch.params[~mask.bits].any()

    def test_rewound_branches_match_pipeline_retrain(self, init, blobs, recipe, tmp_path):
        """Branches from the epoch-1 reference train the remaining epochs, like the pruning run"""
        record = run_imp(init, blobs, recipe, PruneSchedule(iterations=1, rewind_epoch=1), run_dir=tmp_path)
        reference = load_reference(tmp_path)
        assert reference.epoch_tag == 1
        branch, other = train_branches(reference, record.final().mask, blobs, recipe,
                                       recipe.order_seed, recipe.order_seed + 1, start_epoch=1)
        assert branch.epoch_tag == other.epoch_tag == recipe.epochs
        assert branch == load_trained(tmp_path, record)

    def test_rewound_study_reports_trained_endpoints(self, init, blobs, recipe, tmp_path):
        record = run_imp(init, blobs, recipe, PruneSchedule(iterations=1, rewind_epoch=1), run_dir=tmp_path)
        result = lmc_study(load_reference(tmp_path), record.final().mask, blobs, recipe,
                           recipe.order_seed, 5, alpha_steps=5, start_epoch=1)
        assert result.branches[0] == load_trained(tmp_path, record)

    def test_save_and_load(self, init, blobs, recipe, tmp_path):
        result = lmc_study(init, None, blobs, recipe, 1, 2, alpha_steps=5)
        result.save(tmp_path, "lmc_iter_000")
        loaded = InstabilityReport.load(tmp_path, "lmc_iter_000")
        assert loaded.barrier_height == result.barrier_height
        np.testing.assert_array_equal(loaded.losses, result.losses)
        summary = json.loads((tmp_path / "lmc_iter_000.json").read_text())
        assert summary["alpha_count"] == 5

    def test_load_missing(self, tmp_path):
        with pytest.raises(MissingArtifactError):
            InstabilityReport.load(tmp_path, "lmc_iter_000")


class TestLandscape:

    @pytest.fixture
    def quadratic(self):
        return QuadraticObjective(np.diag([1.0, 4.0, 9.0, 0.5]), center=np.array([0.5, 0.0, -0.5, 1.0]))

    def test_exactly_n_squared_grid_evaluations(self, quadratic):
        calls = []

        def counted(theta):
            calls.append(1)
            return quadratic.loss(theta)

        grid = plane_grid(np.zeros(4), np.ones(4), counted, grid_n=7, workers=1)
        assert grid.evaluations == 49
        assert len(calls) == 49 + 2
        assert grid.losses.shape == (7, 7)

    def test_grid_values_on_the_plane(self, quadratic):
        a, b = np.zeros(4), np.array([1.0, 2.0, 0.0, -1.0])
        grid = plane_grid(a, b, quadratic.loss, grid_n=5, margin=0.25, seed=3)
        i, j = 1, 4
        point = a + grid.a_coords[i] * grid.basis_u + grid.b_coords[j] * grid.basis_v
        assert grid.losses[i, j] == pytest.approx(quadratic.loss(point))
        assert grid.endpoint_losses == (pytest.approx(quadratic.loss(a)), pytest.approx(quadratic.loss(b)))

    def test_basis_is_orthonormal_on_support(self):
        support = np.array([True, True, False, True])
        u, v, distance = plane_basis(np.zeros(4), np.array([1.0, 1.0, 0.0, 0.0]), support, seed=0)
        assert distance == pytest.approx(np.sqrt(2))
        assert np.linalg.norm(u) == pytest.approx(1.0)
        assert np.linalg.norm(v) == pytest.approx(1.0)
        assert abs(u @ v) < 1e-12
        assert v[2] == 0.0

    def test_segment_read_out(self, quadratic):
        """With no margin the segment lies on grid nodes, so the read-out is exact"""
        a, b = np.zeros(4), np.ones(4)
        grid = plane_grid(a, b, quadratic.loss, grid_n=3, margin=0.0)
        values = grid.segment_losses(np.array([0.0, 0.5, 1.0]))
        np.testing.assert_allclose(values, [quadratic.loss(a), quadratic.loss(0.5 * (a + b)), quadratic.loss(b)])

    @pytest.mark.parametrize("grid_n", [4, 6, 7])
    def test_interpolation_line_is_a_grid_row(self, quadratic, grid_n):
        a, b = np.zeros(4), np.array([1.0, 2.0, 0.0, -1.0])
        grid = plane_grid(a, b, quadratic.loss, grid_n=grid_n, margin=0.0, workers=1)
        zero = int(np.flatnonzero(grid.b_coords == 0.0)[0])
        assert zero == (grid_n - 1) // 2
        expected = [quadratic.loss(a + x * grid.basis_u) for x in grid.a_coords]
        np.testing.assert_allclose(grid.losses[:, zero], expected)
        np.testing.assert_allclose(grid.segment_losses(np.array([0.0, 1.0])), [quadratic.loss(a), quadratic.loss(b)])

    def test_degenerate_pair(self, quadratic):
        with pytest.raises(DegeneratePairError):
            plane_grid(np.ones(4), np.ones(4), quadratic.loss, grid_n=3)

    def test_network_landscape(self, init, blobs, recipe, tmp_path):
        a = train(init, None, blobs, recipe, order_seed=1).state
        b = train(init, None, blobs, recipe, order_seed=2).state
        grid = landscape_grid(a, b, blobs, grid_n=4)
        assert np.isfinite(grid.losses).all()
        csv_path, json_path = grid.save(tmp_path, "landscape_iter_000")
        header = json.loads(open(json_path).read())
        assert header["grid_n"] == 4
        assert header["evaluations"] == 16


class TestHessian:

    @pytest.fixture
    def matrix(self):
        rng = np.random.default_rng(0)
        off = 0.3 * rng.standard_normal((10, 10))
        return np.diag(np.linspace(1.0, 5.0, 10)) + 0.5 * (off + off.T)

    def test_exact_tiny_recovers_diagonal(self, matrix):
        estimate = diagonal_estimate(QuadraticObjective(matrix), np.zeros(10), estimator="exact-tiny")
        np.testing.assert_allclose(estimate, np.diag(matrix), rtol=1e-6, atol=1e-8)

    def test_hutchinson_error_shrinks_with_probes(self, matrix):
        objective = QuadraticObjective(matrix)
        truth = np.diag(matrix)

        def error(probes):
            return np.mean([
                np.abs(diagonal_estimate(objective, np.zeros(10), probe_count=probes, seed=s) - truth).mean()
                for s in range(8)
            ])

        errors = [error(p) for p in (100, 300, 1000)]
        assert errors[0] > errors[1] > errors[2]

    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_hutchinson_within_ten_percent_per_coordinate(self, seed):
        rng = np.random.default_rng(1)
        off = 0.1 * rng.standard_normal((10, 10))
        matrix = np.diag(np.linspace(2.0, 6.0, 10)) + 0.5 * (off + off.T - 2 * np.diag(np.diag(off)))
        estimate = diagonal_estimate(QuadraticObjective(matrix), np.zeros(10), probe_count=1000, seed=seed)
        truth = np.diag(matrix)
        assert (np.abs(estimate - truth) <= 0.1 * np.abs(truth)).all()

    def test_support_restricts_coordinates(self, matrix):
        support = np.zeros(10, dtype=bool)
        support[[1, 4, 7]] = True
        estimate = diagonal_estimate(QuadraticObjective(matrix), np.zeros(10), support=support,
                                     estimator="exact-tiny")
        np.testing.assert_allclose(estimate, np.diag(matrix)[[1, 4, 7]], rtol=1e-6)

    def test_exact_tiny_guard(self):
        arch = mlp(20, 2, hidden=(256,))
        data = make_blobs(2, 5, 20, 1.0, seed=0)
        with pytest.raises(ConfigError) as info:
            hessian_diag(init_state(arch, 0), None, data, estimator="exact-tiny")
        assert info.value.field == "analysis.hessian.estimator"

    def test_network_summary(self, init, blobs, recipe):
        trained = train(init, None, blobs, recipe).state
        mask = magnitude_prune(trained, SparsityMask.dense(init.arch), 0.5)
        summary = hessian_diag(trained, mask, blobs, probe_count=5)
        assert summary.coordinates == mask.bits.sum()
        assert summary.min <= summary.mean <= summary.max
        assert set(summary.to_dict()) >= {"mean_abs", "estimator", "probe_count"}

    def test_empty_summary(self):
        with pytest.raises(InvalidParameterError):
            HessianSummary.from_diagonal(np.zeros(0), "hutchinson", 1)


class TestCompare:

    @pytest.fixture
    def record(self, init, blobs, recipe):
        return run_imp(init, blobs, recipe, PruneSchedule(iterations=2))

    def test_stability_guards(self):
        assert stability_ratio(0.0, 0.0) == (1.0, False)
        assert stability_ratio(0.5, 0.0) == (RATIO_CAP, True)
        assert stability_ratio(0.2, 0.4) == (pytest.approx(0.5), False)
        assert stability_ratio(1000.0, 1.0) == (RATIO_CAP, True)

    def test_self_comparison_is_unity(self, record):
        reports = {e.sparsity: report(e.sparsity, 0.2) for e in record.iterations}
        point = compare(record, record, reports, reports, record.iterations[1].sparsity)
        assert point.performance_ratio == pytest.approx(1.0)
        assert point.stability_ratio == pytest.approx(1.0)
        assert not point.degenerate

    def test_zero_accuracy_guard(self, record):
        reports = {e.sparsity: report(e.sparsity, 0.2) for e in record.iterations}
        target = record.iterations[1]
        target.test_acc = 0.0
        point = compare(record, record, reports, reports, target.sparsity)
        assert point.performance_ratio == 1.0

    def test_records_frame(self, record):
        reports = {e.sparsity: report(e.sparsity, 0.1) for e in record.iterations}
        frame = compare_records(record, record, reports, reports, compression=compression_ratio(20, 2))
        assert len(frame) == 3
        assert (frame["compression"] == 10.0).all()
        assert (frame["marker_size"] == 10.0).all()

    def test_no_shared_checkpoints(self, record):
        syn = {0.5: report(0.5, 0.1, "synthetic")}
        imp = {0.9: report(0.9, 0.1)}
        with pytest.raises(MissingCheckpointError):
            compare_records(record, record, syn, imp)

    def test_missing_report(self, record):
        reports = {record.iterations[0].sparsity: report(0.0, 0.1, "dense")}
        with pytest.raises(MissingCheckpointError):
            compare(record, record, reports, reports, record.iterations[2].sparsity)


class TestLedger:

    def test_append_and_read(self, tmp_path):
        path = tmp_path / "ledger.jsonl"
        append_row(path, {"b": 2, "a": 1})
        append_row(path, {"a": 3, "b": 4})
        frame = read_ledger(path)
        assert frame["a"].tolist() == [1, 3]
        assert path.read_text().splitlines()[0] == '{"a":1,"b":2}'

    def test_merge_drops_duplicates_in_order(self, tmp_path):
        first, second = tmp_path / "one.jsonl", tmp_path / "two.jsonl"
        append_row(first, {"seed": 0})
        append_row(first, {"seed": 1})
        append_row(second, {"seed": 1})
        append_row(second, {"seed": 2})
        merged = merge_ledgers([first, second], tmp_path / "all.jsonl")
        assert merged["seed"].tolist() == [0, 1, 2]
        assert read_ledger(tmp_path / "all.jsonl")["seed"].tolist() == [0, 1, 2]

    def test_missing_ledger(self, tmp_path):
        with pytest.raises(MissingArtifactError):
            read_ledger(tmp_path / "absent.jsonl")
