"""
Test architectures, model states and the masked trainer
"""

import numpy as np
import pytest
from pydantic import ValidationError

from synprune.data import DatasetRole, LabeledDataset
from synprune.exceptions import (
    ArchitectureMismatchError,
    DatasetFormatError,
    InvalidParameterError,
    NumericFailureError,
    ShapeMismatchError,
)
from synprune.models.architecture import LayerSpec, convnet3, linear, mlp
from synprune.models.network import check_batch
from synprune.models.state import ModelState, init_state, load_state, save_state
from synprune.pruning.mask import SparsityMask
from synprune.training import Trainer, TrainRecipe, evaluate, train


class TestArchitecture:

    def test_mlp_layout(self):
        arch = mlp(20, 2, hidden=(256,))
        assert arch.param_count == 20 * 256 + 256 + 256 * 2 + 2
        flags = [block.prunable for block in arch.param_blocks()]
        assert flags == [True, False, True, False]

    def test_convnet_shapes(self):
        arch = convnet3((1, 8, 8), 10, width=4, depth=3)
        shapes = arch.layer_shapes
        assert shapes[-1] == (10,)
        assert arch.param_count > 0

    def test_hash_is_stable(self):
        assert mlp(4, 2, (8,)).arch_hash() == mlp(4, 2, (8,)).arch_hash()
        assert mlp(4, 2, (8,)).arch_hash() != mlp(4, 2, (9,)).arch_hash()

    def test_layer_spec_needs_fields(self):
        with pytest.raises(ValidationError):
            LayerSpec(kind="dense")

    def test_check_batch(self):
        arch = linear(3, 2)
        with pytest.raises(ShapeMismatchError):
            check_batch(arch, np.zeros((2, 4)), np.array([0, 1]))
        with pytest.raises(ShapeMismatchError):
            check_batch(arch, np.zeros((2, 3)), np.array([0, 2]))


class TestModelState:

    def test_init_is_deterministic(self, tiny_mlp):
        assert init_state(tiny_mlp, 3) == init_state(tiny_mlp, 3)
        assert init_state(tiny_mlp, 3) != init_state(tiny_mlp, 4)

    def test_biases_start_at_zero(self, tiny_mlp):
        state = init_state(tiny_mlp, 0)
        for block in tiny_mlp.param_blocks():
            if not block.prunable:
                assert not state.params[block.offset:block.stop].any()

    def test_length_checked(self, tiny_mlp):
        with pytest.raises(InvalidParameterError):
            ModelState(np.zeros(3), tiny_mlp, init_seed=0)

    def test_compatibility(self, tiny_mlp, tiny_linear):
        with pytest.raises(ArchitectureMismatchError):
            init_state(tiny_mlp, 0).check_compatible(init_state(tiny_linear, 0))

    def test_save_load(self, init, tmp_path):
        path = tmp_path / "state.npz"
        save_state(init.with_params(init.params, epoch_tag=2), path)
        loaded = load_state(path)
        assert loaded.epoch_tag == 2
        assert np.array_equal(loaded.params, init.params)
        assert loaded.arch == init.arch

    def test_load_missing(self, tmp_path):
        with pytest.raises(DatasetFormatError):
            load_state(tmp_path / "missing.npz")


class TestTrainer:

    def test_same_seeds_same_weights(self, init, blobs, recipe):
        a = train(init, None, blobs, recipe, order_seed=1)
        b = train(init, None, blobs, recipe, order_seed=1)
        assert a.state == b.state
        assert a.loss_history == b.loss_history

    def test_order_seed_changes_weights(self, init, blobs, recipe):
        a = train(init, None, blobs, recipe, order_seed=1)
        b = train(init, None, blobs, recipe, order_seed=2)
        assert not np.array_equal(a.state.params, b.state.params)

    def test_learns_separable_blobs(self, init, blobs, blobs_test):
        recipe = TrainRecipe(lr=0.1, momentum=0.9, epochs=10, batch_size=8, early_stop_patience=0)
        result = train(init, None, blobs, recipe)
        assert result.final_train_loss < result.loss_history[0]
        assert evaluate(result.state, blobs_test).accuracy >= 0.9

    def test_step_and_example_counts(self, init, blobs, recipe):
        result = train(init, None, blobs, recipe)
        assert result.epochs_run == 3
        assert result.steps == 3 * 5
        assert result.examples_seen == 3 * 40
        assert result.state.epoch_tag == 3

    def test_mask_holds_zeros(self, init, blobs, recipe):
        bits = np.ones(init.arch.param_count, dtype=bool)
        bits[:10] = False
        mask = SparsityMask.dense(init.arch).with_bits(bits)
        result = train(init, mask, blobs, recipe)
        assert not result.state.params[:10].any()

    def test_checkpoints(self, init, blobs):
        recipe = TrainRecipe(epochs=3, batch_size=8, checkpoint_epochs=(0, 2), early_stop_patience=0)
        result = train(init, None, blobs, recipe)
        assert sorted(result.checkpoints) == [0, 2]
        assert result.checkpoints[0] == init
        assert result.checkpoints[2].epoch_tag == 2

    def test_resume_from_epoch_matches_full_run(self, init, blobs):
        """Training epochs k..E from the epoch-k checkpoint reproduces the full run"""
        recipe = TrainRecipe(epochs=3, batch_size=8, momentum=0.0, checkpoint_epochs=(1,), early_stop_patience=0)
        full = train(init, None, blobs, recipe, order_seed=4)
        rest = Trainer(recipe).fit(full.checkpoints[1], None, blobs, order_seed=4, start_epoch=1)
        assert rest.epochs_run == 2
        assert rest.state == full.state

    def test_start_epoch_bounds(self, init, blobs, recipe):
        with pytest.raises(InvalidParameterError):
            train(init, None, blobs, recipe, start_epoch=3)

    def test_early_stop_waits_for_patience(self, init, blobs):
        recipe = TrainRecipe(epochs=50, batch_size=40, lr=1e-6, momentum=0.0,
                             early_stop_patience=2, early_stop_tol=1e-3)
        result = train(init, None, blobs, recipe)
        assert result.stopped_early
        assert result.epochs_run == 3

    def test_non_finite_data_reports_step(self, init):
        data = LabeledDataset(np.full((4, 4), np.nan), np.array([0, 1, 0, 1]), DatasetRole.REAL_TRAIN, 2)
        recipe = TrainRecipe(epochs=1, batch_size=2)
        with pytest.raises(NumericFailureError) as info:
            train(init, None, data, recipe)
        assert info.value.step == 0
        assert info.value.layer_index is not None

    def test_recipe_validation(self):
        with pytest.raises(ValidationError):
            TrainRecipe(lr=0)
        with pytest.raises(ValidationError):
            TrainRecipe(epochs=2, checkpoint_epochs=(3,))
        assert TrainRecipe(checkpoint_epochs=(2, 1, 2)).checkpoint_epochs == (1, 2)
