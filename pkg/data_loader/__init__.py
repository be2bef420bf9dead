from data_loader.loader import load_cifar10, load_dataset, load_mnist, normalize
from data_loader.validators import parse_cifar_records, parse_idx
from data_loader.batching import batches, crop_flip, epoch_order, prefetch

__all__ = [
    "load_cifar10",
    "load_dataset",
    "load_mnist",
    "normalize",
    "parse_cifar_records",
    "parse_idx",
    "batches",
    "crop_flip",
    "epoch_order",
    "prefetch"
]
