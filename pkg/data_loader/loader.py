"""
Dataset loaders for CIFAR-10 binary batches and MNIST IDX files.
"""
import logging
from pathlib import Path
from typing import Optional, Union

import numpy as np

from config import settings
from data_loader.validators import (
    IDX_IMAGES_MAGIC,
    IDX_LABELS_MAGIC,
    check_pairing,
    parse_cifar_records,
    parse_idx,
)
from models.base import DatasetName, Split
from models.dataset import Dataset, Normalization
from utils.errors import ArtifactNotFoundError

logger = logging.getLogger(__name__)

CIFAR_TRAIN_FILES = tuple(f"data_batch_{i}.bin" for i in range(1, 6))
CIFAR_TEST_FILES = ("test_batch.bin",)
CIFAR_NORMALIZATION = Normalization(mean=[0.4914, 0.4822, 0.4465], std=[0.2470, 0.2435, 0.2616])

MNIST_FILES = {
    Split.TRAIN: ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
    Split.TEST: ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"),
}
MNIST_NORMALIZATION = Normalization(mean=[0.1307], std=[0.3081])


def _read(path: Path) -> bytes:
    if not path.is_file():
        raise ArtifactNotFoundError(str(path), what="dataset file")
    return path.read_bytes()


def normalize(pixels: np.ndarray, norm: Normalization, dtype: str = "float32") -> np.ndarray:
    """uint8 [N, C, H, W] -> (pixels / 255 - mean) / std per channel."""
    mean = np.asarray(norm.mean, dtype=np.float64).reshape(1, -1, 1, 1)
    std = np.asarray(norm.std, dtype=np.float64).reshape(1, -1, 1, 1)
    return ((pixels.astype(np.float64) / 255.0 - mean) / std).astype(dtype)


def load_cifar10(
    data_dir: Union[str, Path],
    split: Union[Split, str] = Split.TRAIN,
    subset: Optional[int] = None,
    dtype: str = "float32",
) -> Dataset:
    """Read the five training batches (or the test batch) of the binary CIFAR-10 release."""
    split = Split(split)
    root = Path(data_dir)
    names = CIFAR_TRAIN_FILES if split is Split.TRAIN else CIFAR_TEST_FILES
    pixels, labels = [], []
    for name in names:
        p, l = parse_cifar_records(_read(root / name), source=name)
        pixels.append(p)
        labels.append(l)
    ds = Dataset(
        name=DatasetName.CIFAR10.value,
        split=split,
        images=normalize(np.concatenate(pixels), CIFAR_NORMALIZATION, dtype),
        labels=np.concatenate(labels),
        num_classes=10,
        normalization=CIFAR_NORMALIZATION,
    )
    logger.info("Loaded CIFAR-10 %s: %d images from %s", split.value, len(ds), root)
    return ds.subset(subset) if subset else ds


def load_mnist(
    data_dir: Union[str, Path],
    split: Union[Split, str] = Split.TRAIN,
    subset: Optional[int] = None,
    dtype: str = "float32",
) -> Dataset:
    """Read an MNIST image/label IDX pair and normalize with mean 0.1307, std 0.3081."""
    split = Split(split)
    root = Path(data_dir)
    image_file, label_file = MNIST_FILES[split]
    images = parse_idx(_read(root / image_file), IDX_IMAGES_MAGIC, source=image_file)
    labels = parse_idx(_read(root / label_file), IDX_LABELS_MAGIC, source=label_file)
    check_pairing(images, labels, source=f"{image_file}/{label_file}")
    ds = Dataset(
        name=DatasetName.MNIST.value,
        split=split,
        images=normalize(images[:, None, :, :], MNIST_NORMALIZATION, dtype),
        labels=labels.astype(np.int64),
        num_classes=10,
        normalization=MNIST_NORMALIZATION,
    )
    logger.info("Loaded MNIST %s: %d images from %s", split.value, len(ds), root)
    return ds.subset(subset) if subset else ds


def load_dataset(
    name: Union[DatasetName, str],
    split: Union[Split, str] = Split.TRAIN,
    data_dir: Optional[Union[str, Path]] = None,
    subset: Optional[int] = None,
    dtype: str = "float32",
) -> Dataset:
    """Dispatch on the dataset name; data_dir defaults to <settings.data_dir>/<name>."""
    name = DatasetName(name)
    root = Path(data_dir) if data_dir else settings.data_dir / name.value
    loader = load_mnist if name is DatasetName.MNIST else load_cifar10
    return loader(root, split, subset, dtype)
