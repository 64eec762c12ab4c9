"""
Shared fixtures: small synthetic datasets and toy networks.
"""

import pytest
import torch

from lib.data.datasets import make_synthetic
from lib.data.splits import SplitSpec, make_splits
from lib.harness.config import RunConfig, Settings
from lib.netcore.network import PrunableNetwork
from lib.netcore.zoo import ToyCNN


@pytest.fixture
def synthetic():
    """(train, test) with 4 classes of 16x16 blobs"""
    return make_synthetic(num_classes=4, per_class_train=40, per_class_test=16, image_size=16, seed=0)


@pytest.fixture
def train_data(synthetic):
    return synthetic[0]


@pytest.fixture
def test_data(synthetic):
    return synthetic[1]


@pytest.fixture
def splits(train_data):
    """(subset, val) with 16 and 8 examples per class"""
    return make_splits(train_data, SplitSpec(per_class_subset=16, per_class_val=8, seed=0))


@pytest.fixture
def toy_network():
    torch.manual_seed(0)
    return PrunableNetwork(ToyCNN(in_channels=3, widths=[8, 16], num_classes=4, image_size=16))


@pytest.fixture
def linear_network():
    """Two-layer toy CNN without batch norm or activation, in float64"""
    torch.manual_seed(0)
    module = ToyCNN(
        in_channels=3,
        widths=[6, 8],
        num_classes=4,
        image_size=8,
        batch_norm=False,
        activation="identity",
    ).double()
    module.eval()
    return PrunableNetwork(module)


@pytest.fixture(scope="session")
def toy_config():
    """Desk-scale run config; tests pass their own run directory"""
    return RunConfig.model_validate(
        {
            "name": "toy",
            "seed": 0,
            "dataset": {"name": "synthetic", "num_classes": 4, "per_class_train": 40, "per_class_test": 16},
            "model": {"arch": "toy-cnn", "params": {"widths": [8, 16]}},
            "splits": {"per_class_subset": 16, "per_class_val": 8},
            "pretrain": {"epochs": 2, "batch_size": 32, "lr": 0.05, "milestones": [1]},
            "warmup": {"epochs": 1, "batch_size": 32, "lr": 1e-3, "augmentation": "search"},
            "search": {"ratio": 0.2, "target_rate": 0.3, "batch_size": 64},
            "membank": {"k": 2, "batch_size": 64},
            "finetune": {"epochs": 2, "batch_size": 32, "lr": 1e-2, "milestones": [1]},
            "landscape": {"enabled": False},
        }
    )


@pytest.fixture(scope="session")
def settings():
    """Settings independent of the caller's environment"""
    return Settings(run_dir=None, device="cpu", log_level="WARNING")
