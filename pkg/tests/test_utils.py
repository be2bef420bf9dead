import numpy as np
import pytest

from utils import (
    binarization_cosine,
    cosine_similarity,
    format_bytes,
    format_duration_ns,
    format_loss_terms,
    format_pct,
    sign_flips,
    topk_accuracy,
    topk_correct
)


class TestCalculations:
    def test_cosine(self):
        assert cosine_similarity([1.0, 0.0], [0.0, 2.0]) == 0.0
        assert cosine_similarity([1.0, 2.0], [2.0, 4.0]) == pytest.approx(1.0)
        assert cosine_similarity([0.0, 0.0], [1.0, 1.0]) == 0.0

    def test_binarization_cosine_is_one_for_two_valued_filters(self):
        w = np.array([[0.5, -0.5, 0.5], [-2.0, 2.0, 2.0]])
        assert binarization_cosine(w) == pytest.approx(1.0)
        assert binarization_cosine(np.array([[1.0, 0.1]])) < 1.0

    def test_sign_flips_treat_zero_as_positive(self):
        assert sign_flips(np.array([0.0, -1.0, 2.0]), np.array([1.0, 1.0, -2.0])) == (2, 3)
        with pytest.raises(ValueError):
            sign_flips(np.zeros(2), np.zeros(3))

    def test_topk(self):
        logits = np.array([[0.1, 0.9, 0.0], [0.5, 0.2, 0.3], [0.0, 0.0, 1.0]])
        labels = np.array([1, 2, 0])
        assert topk_correct(logits, labels, 1) == 1
        assert topk_correct(logits, labels, 2) == 3
        assert topk_accuracy(logits, labels, 5) == 100.0
        assert topk_accuracy(np.zeros((0, 3)), np.zeros(0, dtype=int)) == 0.0


class TestFormatters:
    def test_format_pct(self):
        assert format_pct(12.345) == "12.35%"
        assert format_pct(None) == "N/A"

    @pytest.mark.parametrize(
        "value, expected",
        [(512, "512 B"), (1536, "1.5 KiB"), (3 * 1024 ** 2, "3.0 MiB")],
    )
    def test_format_bytes(self, value, expected):
        assert format_bytes(value) == expected

    @pytest.mark.parametrize(
        "value, expected",
        [(850, "850 ns"), (1500, "1.50 us"), (2.5e6, "2.50 ms"), (3e9, "3.00 s")],
    )
    def test_format_duration(self, value, expected):
        assert format_duration_ns(value) == expected

    def test_format_loss_terms(self):
        assert format_loss_terms({"ce": 0.5, "kd": None, "wdm": 0.25}, precision=2) == "ce=0.50 wdm=0.25"
