"""
Test datasets, IDX ingestion, blob tasks, epoch orders and containers
"""

import json
import os

import numpy as np
import pytest

from synprune.data import (
    DatasetRole,
    LabeledDataset,
    compression_ratio,
    epoch_order,
    load_dataset,
    load_idx,
    make_blobs,
    read_manifest,
    sample_per_class,
    save_dataset,
    split_dataset,
    write_idx,
)
from synprune.data.ordering import permutation_for
from synprune.exceptions import DatasetFormatError, InvalidParameterError


class TestLabeledDataset:

    def test_rejects_mismatched_rows(self):
        with pytest.raises(InvalidParameterError):
            LabeledDataset(np.zeros((3, 2)), np.zeros(2), DatasetRole.REAL_TRAIN, class_count=2)

    def test_rejects_labels_out_of_range(self):
        with pytest.raises(InvalidParameterError):
            LabeledDataset(np.zeros((2, 2)), np.array([0, 2]), DatasetRole.REAL_TRAIN, class_count=2)

    def test_ipc_must_match_counts(self):
        with pytest.raises(InvalidParameterError):
            LabeledDataset(np.zeros((3, 2)), np.array([0, 0, 1]), DatasetRole.SYNTHETIC, class_count=2, ipc=1)

    def test_arrays_are_read_only(self, blobs):
        with pytest.raises(ValueError):
            blobs.features[0, 0] = 1.0


class TestBlobs:

    def test_shape_and_range(self):
        ds = make_blobs(class_count=3, per_class=50, dim=6, spread=1.0, seed=7)
        assert ds.features.shape == (150, 6)
        assert ds.ipc == 50
        assert ds.features.min() >= 0.0 and ds.features.max() <= 1.0
        assert np.array_equal(ds.class_counts(), [50, 50, 50])

    def test_deterministic(self):
        a = make_blobs(2, 10, 4, 1.0, seed=3)
        b = make_blobs(2, 10, 4, 1.0, seed=3)
        assert a.dataset_hash() == b.dataset_hash()

    def test_draws_share_means_but_not_points(self):
        """A second draw is a fresh sample from the same class-conditional distribution"""
        train = make_blobs(2, 200, 4, 0.1, seed=3)
        test = make_blobs(2, 200, 4, 0.1, seed=3, draw=1)
        assert train.dataset_hash() != test.dataset_hash()
        for label in range(2):
            np.testing.assert_allclose(
                train.features[train.labels == label].mean(axis=0),
                test.features[test.labels == label].mean(axis=0),
                atol=0.05,
            )

    def test_rejects_non_positive_sizes(self):
        with pytest.raises(InvalidParameterError):
            make_blobs(0, 10, 4, 1.0, seed=0)


class TestSplits:

    def test_stratified_sizes(self):
        real = make_blobs(class_count=2, per_class=500, dim=20, spread=1.0, seed=7)
        kept, held = split_dataset(real, fraction=0.2, seed=0)
        assert (len(kept), len(held)) == (800, 200)
        assert held.role == DatasetRole.VALIDATION
        assert np.array_equal(held.class_counts(), [100, 100])

    def test_parts_are_disjoint(self, blobs):
        kept, held = split_dataset(blobs, fraction=0.25, seed=1)
        assert not set(kept.row_hashes()) & set(held.row_hashes())
        assert len(kept) + len(held) == len(blobs)

    def test_fraction_bounds(self, blobs):
        with pytest.raises(InvalidParameterError):
            split_dataset(blobs, fraction=1.0)
        with pytest.raises(InvalidParameterError):
            split_dataset(blobs, fraction=0.01)

    def test_sample_per_class(self, blobs):
        subset = sample_per_class(blobs, ipc=3, seed=0)
        assert subset.role == DatasetRole.SYNTHETIC
        assert subset.ipc == 3
        assert np.array_equal(subset.labels, [0, 0, 0, 1, 1, 1])

    def test_sample_per_class_too_many(self, blobs):
        with pytest.raises(InvalidParameterError):
            sample_per_class(blobs, ipc=21, seed=0)


class TestOrdering:

    def test_permutation_is_bijection(self):
        order = permutation_for(5, 0, 100)
        assert np.array_equal(np.sort(order), np.arange(100))

    def test_two_seeds_disagree_almost_everywhere(self):
        a = permutation_for(1, 0, 1000)
        b = permutation_for(2, 0, 1000)
        assert np.count_nonzero(a != b) >= 900

    def test_order_depends_only_on_seed_and_epoch(self, blobs):
        a = epoch_order(blobs, order_seed=1, epoch=0)
        b = epoch_order(blobs, order_seed=1, epoch=0)
        assert np.array_equal(a.permutation, b.permutation)
        assert not np.array_equal(a.permutation, epoch_order(blobs, 2, 0).permutation)
        assert not np.array_equal(a.permutation, epoch_order(blobs, 1, 1).permutation)

    def test_batches_cover_everything(self, blobs):
        order = epoch_order(blobs, order_seed=0, epoch=0)
        batches = list(order.batches(7))
        assert [b.size for b in batches] == [7, 7, 7, 7, 7, 5]
        assert np.array_equal(np.sort(np.concatenate(batches)), np.arange(40))

    def test_compression_ratio(self):
        ratio = compression_ratio(500, 10)
        assert float(ratio) == 50.0
        assert ratio.to_dict() == {"real_per_class": 500, "ipc": 10, "ratio": 50.0}
        assert float(compression_ratio(5000, 10)) == 500.0

    def test_compression_ratio_rejects_zero_ipc(self):
        with pytest.raises(InvalidParameterError):
            compression_ratio(500, 0)


class TestIdx:

    @pytest.fixture
    def idx_pair(self, tmp_path):
        images = np.arange(4 * 3 * 3, dtype=np.uint8).reshape(4, 3, 3) * 7
        labels = np.array([0, 1, 2, 1], dtype=np.uint8)
        images_path = tmp_path / "images.idx"
        labels_path = tmp_path / "labels.idx"
        write_idx(images, labels, images_path, labels_path)
        return images, labels, images_path, labels_path

    def test_round_trip(self, idx_pair):
        images, labels, images_path, labels_path = idx_pair
        ds = load_idx(images_path, labels_path)
        assert ds.features.shape == (4, 1, 3, 3)
        assert ds.class_count == 3
        np.testing.assert_allclose(ds.features[:, 0], images / 255.0, rtol=1e-6)
        assert np.array_equal(ds.labels, labels)

    def test_bad_magic(self, idx_pair):
        _, _, images_path, labels_path = idx_pair
        with pytest.raises(DatasetFormatError) as info:
            load_idx(labels_path, labels_path)
        assert info.value.field == "magic"

    def test_truncated_pixels(self, idx_pair):
        _, _, images_path, labels_path = idx_pair
        raw = images_path.read_bytes()
        images_path.write_bytes(raw[:-5])
        with pytest.raises(DatasetFormatError) as info:
            load_idx(images_path, labels_path)
        assert info.value.field == "pixels"

    def test_count_mismatch(self, idx_pair, tmp_path):
        images, labels, images_path, _ = idx_pair
        short_labels = tmp_path / "short.idx"
        write_idx(images[:3], labels[:3], tmp_path / "unused.idx", short_labels)
        with pytest.raises(DatasetFormatError) as info:
            load_idx(images_path, short_labels)
        assert info.value.field == "count"

    def test_missing_file(self, tmp_path):
        with pytest.raises(DatasetFormatError) as info:
            load_idx(tmp_path / "nope", tmp_path / "nope")
        assert info.value.field == "path"


class TestContainer:

    def test_round_trip_keeps_hash(self, synthetic, tmp_path):
        save_dataset(synthetic, tmp_path / "syn", extra={"compression": {"ratio": 10.0}})
        loaded = load_dataset(tmp_path / "syn")
        assert loaded.dataset_hash() == synthetic.dataset_hash()
        assert loaded.role == DatasetRole.SYNTHETIC
        assert loaded.ipc == 2
        assert read_manifest(tmp_path / "syn")["compression"] == {"ratio": 10.0}

    def test_truncated_blob(self, synthetic, tmp_path):
        directory = save_dataset(synthetic, tmp_path / "syn")
        path = os.path.join(directory, "features.f32")
        with open(path, "rb") as handle:
            raw = handle.read()
        with open(path, "wb") as handle:
            handle.write(raw[:-4])
        with pytest.raises(DatasetFormatError) as info:
            load_dataset(directory)
        assert info.value.field == "features"

    def test_missing_manifest(self, tmp_path):
        with pytest.raises(DatasetFormatError) as info:
            load_dataset(tmp_path)
        assert info.value.field == "manifest"

    def test_manifest_is_sorted_json(self, synthetic, tmp_path):
        directory = save_dataset(synthetic, tmp_path / "syn")
        with open(os.path.join(directory, "manifest.json"), encoding="utf-8") as handle:
            manifest = json.load(handle)
        assert manifest["shape"] == [4, 4]
        assert manifest["class_count"] == 2
