"""
Unit tests for datasets, search splits and augmentation
"""

import numpy as np
import pytest
import torch

from lib.data.augment import AugmentationPolicy, AugmentationStage, augment, augment_pair
from lib.data.datasets import load_dataset, make_synthetic
from lib.data.splits import SplitSpec, load_ids, make_splits, save_ids, split_indices
from lib.errors import CoverageError, InsufficientDataError
from lib.utils.seed import make_generator


class TestSyntheticData:
    """Test suite for the synthetic blob dataset"""

    def test_shapes_and_balance(self, train_data, test_data):
        """Test per-class counts, image shape and value range"""
        assert len(train_data) == 160
        assert len(test_data) == 64
        assert train_data.image_shape == (3, 16, 16)
        assert np.bincount(train_data.labels.numpy()).tolist() == [40] * 4
        assert float(train_data.images.min()) >= 0.0
        assert float(train_data.images.max()) <= 1.0

    def test_deterministic_by_seed(self):
        """Test the same seed renders identical images"""
        a, _ = make_synthetic(num_classes=3, per_class_train=5, per_class_test=2, seed=7)
        b, _ = make_synthetic(num_classes=3, per_class_train=5, per_class_test=2, seed=7)
        assert torch.equal(a.images, b.images)

    def test_unknown_dataset(self):
        """Test unknown dataset names raise ValueError"""
        with pytest.raises(ValueError, match="Unknown dataset"):
            load_dataset("imagenet")

    def test_batches_cover_dataset(self, train_data):
        """Test batch iteration visits every id once, shuffled or not"""
        plain = torch.cat([b.ids for b in train_data.batches(48)])
        shuffled = torch.cat([b.ids for b in train_data.batches(48, shuffle=True, generator=make_generator(0))])
        assert plain.tolist() == list(range(160))
        assert sorted(shuffled.tolist()) == list(range(160))
        assert train_data.num_batches(48) == 4
        assert train_data.num_batches(48, drop_last=True) == 3

    def test_select_ids_keeps_order(self, train_data):
        """Test select_ids returns rows in the requested order"""
        picked = train_data.select_ids([5, 2, 9])
        assert picked.ids.tolist() == [5, 2, 9]
        assert torch.equal(picked.images[1], train_data.images[2])

    def test_select_missing_ids(self, train_data):
        """Test unknown ids raise CoverageError"""
        with pytest.raises(CoverageError):
            train_data.select_ids([0, 10_000])


class TestSplits:
    """Test suite for D^subset / D^val sampling"""

    def test_split_counts_and_disjointness(self, train_data):
        """Test exact per-class counts and disjoint id sets"""
        subset, val = make_splits(train_data, SplitSpec(per_class_subset=16, per_class_val=8, seed=3))
        assert np.bincount(subset.labels.numpy()).tolist() == [16] * 4
        assert np.bincount(val.labels.numpy()).tolist() == [8] * 4
        assert not set(subset.ids.tolist()) & set(val.ids.tolist())

    def test_split_reproducible(self, train_data):
        """Test the seed alone determines the index lists"""
        spec = SplitSpec(per_class_subset=10, per_class_val=5, seed=11)
        first = split_indices(train_data.labels.numpy(), spec)
        second = split_indices(train_data.labels.numpy(), spec)
        assert all(np.array_equal(a, b) for a, b in zip(first, second))

    def test_insufficient_class(self, train_data):
        """Test a class smaller than subset + val raises InsufficientDataError"""
        with pytest.raises(InsufficientDataError):
            make_splits(train_data, SplitSpec(per_class_subset=32, per_class_val=16))

    def test_ids_round_trip(self, tmp_path):
        """Test id lists persist one per line"""
        save_ids(tmp_path / "splits" / "val.txt", [3, 1, 4])
        assert load_ids(tmp_path / "splits" / "val.txt") == [3, 1, 4]


class TestAugmentation:
    """Test suite for augmentation policies"""

    def test_search_stage_is_identity(self, train_data):
        """Test the search stage leaves images untouched"""
        images = train_data.images[:8]
        policy = AugmentationPolicy.for_stage("search")
        assert policy.ops == []
        assert torch.equal(augment(images, policy, make_generator(0)), images)

    def test_stage_ops(self):
        """Test finetune stages add flip, crop and colour distortion"""
        base = AugmentationPolicy.for_stage(AugmentationStage.FINETUNE_BASE)
        extra = AugmentationPolicy.for_stage("finetune-extra")
        assert [op["op"] for op in base.describe()["ops"]] == ["hflip", "pad-crop"]
        assert [op["op"] for op in extra.describe()["ops"]] == ["hflip", "pad-crop", "color"]

    def test_pair_is_seeded(self, train_data):
        """Test a fixed seed yields a fixed pair of views"""
        images = train_data.images[:8]
        policy = AugmentationPolicy.for_stage("finetune-extra")
        first = augment_pair(images, policy, make_generator(5))
        second = augment_pair(images, policy, make_generator(5))
        assert torch.equal(first[0], second[0])
        assert torch.equal(first[1], second[1])
        assert first[0].shape == images.shape
        assert float(first[0].min()) >= 0.0 and float(first[0].max()) <= 1.0

    def test_pair_of_single_example(self, train_data):
        """Test a single (C, H, W) example yields two (C, H, W) views"""
        view_a, view_b = augment_pair(train_data.images[0], AugmentationPolicy.for_stage("finetune-base"))
        assert view_a.shape == view_b.shape == (3, 16, 16)
