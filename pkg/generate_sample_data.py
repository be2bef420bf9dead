"""
Generate synthetic MNIST (IDX) and CIFAR-10 (binary batch) datasets.

The files are byte-compatible with the official releases, so every loader and
CLI command runs on them. Each class draws a fixed random template plus noise,
which keeps the task learnable in a few epochs.
"""
import argparse
import struct
from pathlib import Path
from typing import Tuple, Union

import numpy as np

from data_loader.loader import CIFAR_TEST_FILES, CIFAR_TRAIN_FILES, MNIST_FILES
from data_loader.validators import IDX_IMAGES_MAGIC, IDX_LABELS_MAGIC
from models.base import Split


def encode_idx(array: np.ndarray, magic: int) -> bytes:
    array = np.asarray(array, dtype=np.uint8)
    header = struct.pack(">I", magic) + struct.pack(f">{array.ndim}I", *array.shape)
    return header + array.tobytes()


def encode_cifar(pixels: np.ndarray, labels: np.ndarray) -> bytes:
    """pixels uint8 [N, 3, 32, 32] + labels -> N records of 3073 bytes."""
    pixels = np.asarray(pixels, dtype=np.uint8).reshape(len(labels), -1)
    records = np.concatenate([np.asarray(labels, dtype=np.uint8)[:, None], pixels], axis=1)
    return records.tobytes()


def synthetic_images(n: int, shape: Tuple[int, ...], classes: int = 10, seed: int = 0, noise: float = 40.0):
    """uint8 images [n, *shape] and balanced labels; class templates depend only on the shape."""
    templates = np.random.default_rng(1234).uniform(0, 255, (classes,) + shape)
    rng = np.random.default_rng(seed)
    labels = np.arange(n) % classes
    rng.shuffle(labels)
    images = templates[labels] + rng.normal(0.0, noise, (n,) + shape)
    return np.clip(np.rint(images), 0, 255).astype(np.uint8), labels.astype(np.uint8)


def write_mnist(root: Union[str, Path], n_train: int = 2000, n_test: int = 500, seed: int = 0) -> Path:
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    for split, n, offset in ((Split.TRAIN, n_train, 0), (Split.TEST, n_test, 1)):
        images, labels = synthetic_images(n, (28, 28), seed=seed + offset)
        image_file, label_file = MNIST_FILES[split]
        (root / image_file).write_bytes(encode_idx(images, IDX_IMAGES_MAGIC))
        (root / label_file).write_bytes(encode_idx(labels, IDX_LABELS_MAGIC))
    return root


def write_cifar10(root: Union[str, Path], per_batch: int = 200, n_test: int = 200, seed: int = 0) -> Path:
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    for k, name in enumerate(CIFAR_TRAIN_FILES):
        pixels, labels = synthetic_images(per_batch, (3, 32, 32), seed=seed + 10 + k)
        (root / name).write_bytes(encode_cifar(pixels, labels))
    pixels, labels = synthetic_images(n_test, (3, 32, 32), seed=seed + 1)
    (root / CIFAR_TEST_FILES[0]).write_bytes(encode_cifar(pixels, labels))
    return root


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.strip().splitlines()[0])
    parser.add_argument("--out", default="data", help="parent directory; writes <out>/mnist and <out>/cifar10")
    parser.add_argument("--train", type=int, default=2000, help="MNIST training images")
    parser.add_argument("--test", type=int, default=500)
    parser.add_argument("--cifar-per-batch", type=int, default=200)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    out = Path(args.out)
    mnist = write_mnist(out / "mnist", args.train, args.test, args.seed)
    cifar = write_cifar10(out / "cifar10", args.cifar_per_batch, args.test, args.seed)
    print(f"Wrote synthetic MNIST to {mnist} and CIFAR-10 to {cifar}")


if __name__ == "__main__":
    main()
