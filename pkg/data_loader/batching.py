"""
Seeded mini-batch streams, CIFAR-style augmentation and a bounded-queue prefetcher.
"""
import queue
import threading
from typing import Iterable, Iterator, Tuple, Union

import numpy as np

from models.base import Augment
from models.dataset import Dataset

Batch = Tuple[np.ndarray, np.ndarray]

CROP_PAD = 4


def epoch_order(n: int, seed: int, epoch: int) -> np.ndarray:
    """Permutation of range(n) that depends only on (seed, epoch)."""
    return np.random.default_rng([seed, epoch]).permutation(n)


def crop_flip(images: np.ndarray, rng: np.random.Generator, pad: int = CROP_PAD) -> np.ndarray:
    """Zero-pad by `pad`, take a random crop of the original size, flip horizontally with p=0.5."""
    n, c, h, w = images.shape
    padded = np.pad(images, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    dy = rng.integers(0, 2 * pad + 1, size=n)
    dx = rng.integers(0, 2 * pad + 1, size=n)
    flip = rng.random(n) < 0.5
    out = np.empty_like(images)
    for i in range(n):
        crop = padded[i, :, dy[i]:dy[i] + h, dx[i]:dx[i] + w]
        out[i] = crop[:, :, ::-1] if flip[i] else crop
    return out


def batches(
    ds: Dataset,
    batch: int,
    seed: int = 0,
    augment: Union[Augment, str] = Augment.NONE,
    epoch: int = 0,
    shuffle: bool = True,
) -> Iterator[Batch]:
    """
    One epoch of (images, labels) batches. The order is reshuffled per epoch
    from (seed, epoch); the last partial batch is kept.
    """
    augment = Augment(augment)
    n = len(ds)
    batch = max(1, min(batch, n)) if n else 1
    order = epoch_order(n, seed, epoch) if shuffle else np.arange(n)
    rng = np.random.default_rng([seed, epoch, 1])
    for start in range(0, n, batch):
        idx = order[start:start + batch]
        images = ds.images[idx]
        if augment is Augment.CROP_FLIP:
            images = crop_flip(images, rng)
        yield images, ds.labels[idx]


_DONE = object()


def prefetch(stream: Iterable[Batch], depth: int = 2) -> Iterator[Batch]:
    """
    Produce batches on a background thread into a queue of at most `depth`
    items. depth 0 iterates inline. Producer exceptions re-raise in the consumer.
    """
    if depth <= 0:
        yield from stream
        return

    slots: "queue.Queue" = queue.Queue(maxsize=depth)
    stop = threading.Event()

    def produce():
        try:
            for item in stream:
                if stop.is_set():
                    return
                slots.put(item)
            slots.put(_DONE)
        except BaseException as exc:
            slots.put(exc)

    worker = threading.Thread(target=produce, name="batch-prefetch", daemon=True)
    worker.start()
    try:
        while True:
            item = slots.get()
            if item is _DONE:
                break
            if isinstance(item, BaseException):
                raise item
            yield item
    finally:
        stop.set()
        while worker.is_alive():
            try:
                slots.get_nowait()
            except queue.Empty:
                worker.join(timeout=0.05)
