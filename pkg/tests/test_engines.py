"""
Tests for bit packing, the XNOR-popcount kernels, packed convolutions, the
deployment export and the micro-benchmark.
"""
import itertools

import numpy as np
import pandas as pd
import pytest

from autodiff import Tensor, ops
from binarization import scale_factors, sign
from engines import (
    DEFAULT_SUITE,
    SMOKE_SUITE,
    BenchCase,
    PackedModel,
    bench,
    bench_case,
    binary_conv2d,
    export_packed,
    load_packed_model,
    pack,
    pack_conv,
    unpack,
    word_masks,
    xnor_dot,
    xnor_matmul,
)
from models.analysis_output import BENCH_COLUMNS
from models.base import ForwardMode
from networks import build, forward
from training import Checkpoint
from utils.errors import ArtifactNotFoundError, FormatError, ShapeError

WORD_SIZES = (8, 16, 32, 64)


def random_signs(rng, *shape):
    return np.where(rng.random(shape) < 0.5, -1.0, 1.0)


# ==================== PACKING ====================

class TestPacking:
    def test_lsb_first(self):
        b = pack(np.array([1, -1, 1, -1]))
        assert b.n_words == 1
        assert int(b.words[0]) == 5

    def test_padding(self):
        b = pack(np.ones(65))
        assert b.n_words == 2
        assert b.padding_bits == 63
        assert int(b.words[1]) == 1
        np.testing.assert_array_equal(b.word_masks(), [np.uint64(2**64 - 1), np.uint64(1)])

    def test_word_dtype(self):
        for bits in WORD_SIZES:
            b = pack(np.ones(20), bits)
            assert b.words.dtype.itemsize * 8 == bits
            assert b.n_words == -(-20 // bits)

    def test_unpack_inverts_pack(self, rng):
        x = random_signs(rng, 3, 70)
        np.testing.assert_array_equal(unpack(pack(x, 16)), x)

    def test_rejects_non_sign_values(self):
        with pytest.raises(ValueError, match=r"\(0, 2\)"):
            pack(np.array([[1.0, -1.0, 0.0]]))
        with pytest.raises(ValueError):
            pack(np.ones(4), word_bits=12)

    def test_masks(self):
        np.testing.assert_array_equal(word_masks(10, 8), [255, 3])


# ==================== XNOR DOT ====================

class TestXnorDot:
    """Packed dot products equal the +-1 dot product for every word size."""

    def test_examples(self):
        ones = pack(np.ones(8))
        assert xnor_dot(ones, ones) == 8
        assert xnor_dot(pack(np.array([1, -1] * 4)), ones) == 0

    @pytest.mark.parametrize("bits", WORD_SIZES)
    def test_random_vectors(self, rng, bits):
        a, b = random_signs(rng, 1000), random_signs(rng, 1000)
        assert xnor_dot(pack(a, bits), pack(b, bits)) == int(a @ b)

    @pytest.mark.parametrize("n", [1, 7, 16])
    def test_exhaustive_short_vectors(self, rng, n):
        every = np.array(list(itertools.product([-1.0, 1.0], repeat=n)))
        probes = random_signs(rng, 4, n)
        for bits in (8, 64):
            np.testing.assert_array_equal(xnor_matmul(pack(every, bits), pack(probes, bits)), every @ probes.T)

    def test_mismatches(self):
        with pytest.raises(ShapeError):
            xnor_dot(pack(np.ones(8)), pack(np.ones(9)))
        with pytest.raises(ShapeError):
            xnor_dot(pack(np.ones(8), 8), pack(np.ones(8), 16))
        with pytest.raises(ShapeError):
            xnor_dot(pack(np.ones((2, 8))), pack(np.ones((2, 8))))


# ==================== BINARY CONVOLUTION ====================

class TestBinaryConv:
    @pytest.mark.parametrize("kernel,stride,pad,size", [(3, 1, 1, 6), (3, 2, 1, 7), (3, 2, 1, 8), (1, 1, 0, 5), (1, 2, 0, 6)])
    def test_matches_sign_domain_convolution(self, rng, kernel, stride, pad, size):
        x = random_signs(rng, 2, 5, size, size)
        w = rng.normal(size=(6, 5, kernel, kernel))
        layer = pack_conv("c", sign(w), scale_factors(w), stride, pad, truncate=True)
        reference = ops.conv2d(Tensor(x), Tensor(sign(w)), stride=stride, pad=pad, pad_value=-1.0, truncate=True).data
        np.testing.assert_array_equal(binary_conv2d(x, layer, scale=False), reference)
        np.testing.assert_allclose(binary_conv2d(x, layer), reference * scale_factors(w).reshape(1, -1, 1, 1))

    def test_layout_and_word_size_invariant(self, rng):
        x = random_signs(rng, 1, 7, 5, 5)
        w = rng.normal(size=(3, 7, 3, 3))
        outputs = [
            binary_conv2d(x, pack_conv("c", sign(w), scale_factors(w), 1, 1, word_bits=bits, layout=layout))
            for bits in WORD_SIZES for layout in ("hwc", "chw")
        ]
        for out in outputs[1:]:
            np.testing.assert_array_equal(out, outputs[0])

    def test_all_ones(self):
        w = np.full((4, 3, 3, 3), 0.5)
        layer = pack_conv("c", sign(w), scale_factors(w))
        out = binary_conv2d(np.ones((1, 3, 4, 4)), layer)
        np.testing.assert_allclose(out, np.full((1, 4, 2, 2), 0.5 * 27))

    def test_packed_activations_accepted(self, rng):
        x = random_signs(rng, 1, 4, 4, 4)
        w = rng.normal(size=(2, 4, 3, 3))
        layer = pack_conv("c", sign(w), scale_factors(w), 1, 1)
        np.testing.assert_array_equal(binary_conv2d(pack(x, 32), layer), binary_conv2d(x, layer))

    def test_channel_mismatch(self, rng):
        w = rng.normal(size=(2, 4, 3, 3))
        layer = pack_conv("c", sign(w), scale_factors(w), 1, 1)
        with pytest.raises(ShapeError):
            binary_conv2d(np.ones((1, 3, 4, 4)), layer)

    def test_storage_is_one_bit_per_weight(self, rng):
        w = rng.normal(size=(256, 256, 3, 3))
        layer = pack_conv("c", sign(w), scale_factors(w))
        assert layer.packed_bytes == 256 * 36 * 8
        assert layer.float_bytes / layer.packed_bytes == pytest.approx(32.0)


# ==================== EXPORT ====================

def _warm_statistics(model, rng):
    """Give the batchnorm layers non-trivial running statistics."""
    for _ in range(3):
        forward(model, rng.normal(size=(8,) + model.input_shape), ForwardMode.FULL_BINARY, training=True)
    return model


class TestPackedModel:
    @pytest.mark.parametrize("variant,activation", [("plain", "hardtanh"), ("bireal", "prelu"), ("plain", "relu")])
    def test_matches_full_binary_forward(self, rng, variant, activation):
        model = build("tiny-cnn", variant, num_classes=4, in_channels=1, input_size=8, activation=activation, dtype="float64")
        _warm_statistics(model, rng)
        x = rng.normal(size=(5, 1, 8, 8))
        expected = forward(model, x, ForwardMode.FULL_BINARY).data
        np.testing.assert_allclose(export_packed(model).predict(x), expected, atol=1e-6)

    def test_resnet20_downsampling(self, rng):
        model = build("resnet20", "bireal", in_channels=3, input_size=8, dtype="float64")
        _warm_statistics(model, rng)
        x = rng.normal(size=(2, 3, 8, 8))
        expected = forward(model, x, ForwardMode.FULL_BINARY).data
        np.testing.assert_allclose(export_packed(model).predict(x), expected, atol=1e-6)

    def test_codec_roundtrip(self, tiny_bireal, rng, tmp_path):
        packed = export_packed(Checkpoint.from_model(tiny_bireal, "demo"), word_bits=32, layout="chw")
        raw = packed.to_bytes()
        assert raw[:4] == b"BDBN"
        loaded = load_packed_model(packed.save(tmp_path / "demo.bdbn"))
        assert loaded.to_bytes() == raw
        assert loaded.word_bits == 32 and loaded.layout == "chw"
        x = rng.normal(size=(3, 1, 8, 8))
        np.testing.assert_array_equal(loaded.predict(x), packed.predict(x))

    def test_float32_blocks(self, tiny_model, rng):
        wide = export_packed(tiny_model)
        narrow = export_packed(tiny_model, float_dtype="float32")
        assert len(narrow.to_bytes()) < len(wide.to_bytes())
        x = rng.normal(size=(2, 1, 8, 8))
        reloaded = PackedModel.from_bytes(narrow.to_bytes())
        np.testing.assert_array_equal(reloaded.predict(x), narrow.predict(x))

    def test_memory_report(self, tiny_model):
        rows = {row.layer_id: row for row in export_packed(tiny_model, float_dtype="float32").memory_report()}
        assert set(rows) == {"conv2", "conv3", "conv4"}
        conv3 = rows["conv3"]
        assert conv3.bytes_float32 == 64 * 64 * 9 * 4
        assert conv3.bytes_packed == 64 * 9 * 8 + 64 * 4
        assert conv3.ratio > 30.0

    def test_missing_file(self, tmp_path):
        with pytest.raises(ArtifactNotFoundError):
            load_packed_model(tmp_path / "absent.bdbn")

    def test_corrupt_bytes(self, tiny_model):
        raw = export_packed(tiny_model).to_bytes()
        with pytest.raises(FormatError) as exc:
            PackedModel.from_bytes(b"XXXX" + raw[4:])
        assert exc.value.offset == 0
        with pytest.raises(FormatError, match="truncated"):
            PackedModel.from_bytes(raw[:-5])
        with pytest.raises(FormatError, match="trailing"):
            PackedModel.from_bytes(raw + b"\x00")

    def test_input_shape_checked(self, tiny_model):
        with pytest.raises(ShapeError):
            export_packed(tiny_model).predict(np.zeros((1, 1, 9, 9)))

    def test_bad_options(self, tiny_model):
        with pytest.raises(ValueError):
            export_packed(tiny_model, word_bits=12)
        with pytest.raises(ValueError):
            export_packed(tiny_model, layout="whc")


# ==================== BENCH ====================

class TestBench:
    def test_smoke_suite(self, tmp_path):
        frame = bench(SMOKE_SUITE, iterations=1, warmup=1, path=tmp_path / "bench.csv")
        assert list(frame.columns) == BENCH_COLUMNS
        assert list(frame["suite"]) == ["c16-3x3", "c8-1x1"]
        on_disk = pd.read_csv(tmp_path / "bench.csv")
        assert list(on_disk["suite"]) == ["c16-3x3", "c8-1x1"]
        assert (frame["ns_per_op_binary"] > 0).all()

    def test_row_sizes(self):
        row = bench_case(BenchCase(name="tiny", channels=64, filters=2, size=3), iterations=1, warmup=0)
        assert row.bytes_float == 2 * 64 * 9 * 4
        assert row.bytes_binary == 2 * 9 * 8 + 2 * 4

    @pytest.mark.slow
    def test_binary_at_least_4x_on_wide_layer(self):
        case = next(c for c in DEFAULT_SUITE if c.name == "c256-3x3")
        row = bench_case(case, iterations=3, warmup=1)
        assert row.speedup >= 4.0
