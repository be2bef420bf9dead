"""Test configuration for the BD-BNN toolkit."""
import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).resolve().parent.parent))

from generate_sample_data import write_cifar10, write_mnist  # noqa: E402
from models.base import ForwardMode, LossTerm  # noqa: E402
from models.config import DataConfig, KurtosisConfig, ModelConfig, StageSpec, TrainConfig, WdmConfig  # noqa: E402
from networks import build  # noqa: E402


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run slow acceptance tests")


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long-running acceptance check (needs --runslow)")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip)


@pytest.fixture
def rng():
    return np.random.default_rng(0)


@pytest.fixture
def tiny_model():
    """tiny-cnn on 1x8x8 inputs, float64."""
    return build("tiny-cnn", in_channels=1, input_size=8, num_classes=4, seed=0, dtype="float64")


@pytest.fixture
def tiny_bireal():
    return build("tiny-cnn", "bireal", in_channels=1, input_size=8, num_classes=4, seed=1, dtype="float64")


@pytest.fixture
def mnist_dir(tmp_path):
    """Synthetic MNIST IDX files (120 train / 40 test images)."""
    return write_mnist(tmp_path / "mnist", n_train=120, n_test=40, seed=0)


@pytest.fixture
def cifar_dir(tmp_path):
    return write_cifar10(tmp_path / "cifar10", per_batch=6, n_test=8, seed=0)


def small_config(**updates) -> TrainConfig:
    """Two short stages on tiny-cnn, float64, no prefetch."""
    cfg = TrainConfig(
        seed=0,
        precision="float64",
        epochs=1,
        teacher_epochs=1,
        model=ModelConfig(arch="tiny-cnn", num_classes=10),
        data=DataConfig(dataset="mnist", batch_size=32, prefetch=0),
        kurtosis=KurtosisConfig(lam=1e-3, kt=1.0),
        wdm=WdmConfig(bins=16),
        stages=[
            StageSpec(name="bnn-act", mode=ForwardMode.BINARY_ACT_ONLY, losses=[LossTerm.CE, LossTerm.KURTOSIS]),
            StageSpec(name="distill", mode=ForwardMode.FULL_BINARY,
                      losses=[LossTerm.CE, LossTerm.KURTOSIS, LossTerm.WDM], teacher="teacher"),
        ],
    )
    return cfg.model_copy(update=updates)


@pytest.fixture
def train_config():
    return small_config()


@pytest.fixture
def mnist_pair(mnist_dir):
    from data_loader import load_dataset

    train = load_dataset("mnist", "train", mnist_dir, dtype="float64")
    test = load_dataset("mnist", "test", mnist_dir, dtype="float64")
    return train, test
