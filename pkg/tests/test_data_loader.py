"""Tests for dataset parsing, loading and batching."""
import struct

import numpy as np
import pytest

from data_loader import batches, crop_flip, epoch_order, load_dataset, parse_cifar_records, parse_idx, prefetch
from data_loader.validators import CIFAR_RECORD, IDX_IMAGES_MAGIC, IDX_LABELS_MAGIC
from generate_sample_data import encode_cifar, encode_idx
from utils.errors import ArtifactNotFoundError, FormatError


class TestParsers:
    """Byte-level decoding of IDX and CIFAR-10 records."""

    def test_idx_roundtrip(self):
        """IDX header carries the magic and the big-endian extents."""
        images = np.arange(2 * 3 * 4, dtype=np.uint8).reshape(2, 3, 4)
        raw = encode_idx(images, IDX_IMAGES_MAGIC)
        assert raw[:4] == struct.pack(">I", 0x00000803)
        np.testing.assert_array_equal(parse_idx(raw, IDX_IMAGES_MAGIC), images)

    def test_idx_bad_magic(self):
        raw = encode_idx(np.zeros(5, dtype=np.uint8), IDX_LABELS_MAGIC)
        with pytest.raises(FormatError) as exc:
            parse_idx(raw, IDX_IMAGES_MAGIC, source="labels")
        assert exc.value.offset == 0

    def test_idx_truncated_data(self):
        raw = encode_idx(np.zeros((2, 4, 4), dtype=np.uint8), IDX_IMAGES_MAGIC)
        with pytest.raises(FormatError, match="need 32 data bytes"):
            parse_idx(raw[:-3], IDX_IMAGES_MAGIC)

    def test_cifar_records(self):
        pixels = np.random.default_rng(0).integers(0, 256, (3, 3, 32, 32), dtype=np.uint8)
        raw = encode_cifar(pixels, np.array([0, 9, 4]))
        assert len(raw) == 3 * CIFAR_RECORD
        decoded, labels = parse_cifar_records(raw)
        np.testing.assert_array_equal(decoded, pixels)
        np.testing.assert_array_equal(labels, [0, 9, 4])

    def test_cifar_truncated_record(self):
        raw = encode_cifar(np.zeros((2, 3, 32, 32), dtype=np.uint8), np.array([1, 2]))
        with pytest.raises(FormatError) as exc:
            parse_cifar_records(raw[:-10])
        assert exc.value.offset == CIFAR_RECORD

    def test_cifar_label_out_of_range(self):
        raw = bytearray(encode_cifar(np.zeros((2, 3, 32, 32), dtype=np.uint8), np.array([1, 2])))
        raw[CIFAR_RECORD] = 12
        with pytest.raises(FormatError, match="label byte 12"):
            parse_cifar_records(bytes(raw))


class TestLoaders:
    def test_mnist(self, mnist_dir):
        """MNIST comes back NCHW, normalized, with int64 labels."""
        ds = load_dataset("mnist", "train", mnist_dir)
        assert ds.images.shape == (120, 1, 28, 28)
        assert ds.images.dtype == np.float32
        assert ds.labels.dtype == np.int64
        assert ds.num_classes == 10
        assert ds.metadata()["normalization"]["mean"] == [0.1307]

    def test_cifar10(self, cifar_dir):
        train = load_dataset("cifar10", "train", cifar_dir, dtype="float64")
        test = load_dataset("cifar10", "test", cifar_dir)
        assert train.images.shape == (30, 3, 32, 32)
        assert len(test) == 8
        assert train.images.dtype == np.float64

    def test_normalization_constants(self, mnist_dir):
        ds = load_dataset("mnist", "test", mnist_dir, dtype="float64")
        raw = parse_idx((mnist_dir / "t10k-images-idx3-ubyte").read_bytes(), IDX_IMAGES_MAGIC)
        expected = (raw[:, None].astype(np.float64) / 255.0 - 0.1307) / 0.3081
        np.testing.assert_allclose(ds.images, expected)

    def test_subset(self, mnist_dir):
        assert len(load_dataset("mnist", "train", mnist_dir, subset=10)) == 10

    def test_missing_file(self, tmp_path):
        with pytest.raises(ArtifactNotFoundError):
            load_dataset("mnist", "train", tmp_path)

    def test_mismatched_pair(self, mnist_dir):
        (mnist_dir / "train-labels-idx1-ubyte").write_bytes(encode_idx(np.zeros(7, dtype=np.uint8), IDX_LABELS_MAGIC))
        with pytest.raises(FormatError, match="120 images but 7 labels"):
            load_dataset("mnist", "train", mnist_dir)


class TestBatching:
    """Epoch order, augmentation and prefetching."""

    def test_epoch_order_deterministic(self):
        np.testing.assert_array_equal(epoch_order(50, 3, 1), epoch_order(50, 3, 1))
        assert not np.array_equal(epoch_order(50, 3, 1), epoch_order(50, 3, 2))
        assert sorted(epoch_order(50, 3, 1)) == list(range(50))

    def test_batches_cover_dataset(self, mnist_pair):
        train, _ = mnist_pair
        sizes = [len(labels) for _, labels in batches(train, 32, seed=0)]
        assert sizes == [32, 32, 32, 24]

    def test_unshuffled_order(self, mnist_pair):
        train, _ = mnist_pair
        images, labels = next(batches(train, 5, shuffle=False))
        np.testing.assert_array_equal(labels, train.labels[:5])
        np.testing.assert_array_equal(images, train.images[:5])

    def test_crop_flip_preserves_shape(self, rng):
        images = rng.normal(size=(4, 3, 8, 8))
        out = crop_flip(images, np.random.default_rng(0), pad=2)
        assert out.shape == images.shape
        again = crop_flip(images, np.random.default_rng(0), pad=2)
        np.testing.assert_array_equal(out, again)

    def test_prefetch_preserves_order(self, mnist_pair):
        train, _ = mnist_pair
        inline = [labels for _, labels in batches(train, 16, seed=2)]
        threaded = [labels for _, labels in prefetch(batches(train, 16, seed=2), depth=2)]
        assert len(inline) == len(threaded)
        for a, b in zip(inline, threaded):
            np.testing.assert_array_equal(a, b)

    def test_prefetch_reraises(self):
        def broken():
            yield np.zeros(1), np.zeros(1)
            raise FormatError("bad record")

        with pytest.raises(FormatError):
            list(prefetch(broken(), depth=1))
