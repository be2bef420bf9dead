"""
Tests for the kurtosis statistic, K_T schedules, the kurtosis loss and
distribution shaping.
"""
import numpy as np
import pytest

from autodiff import Tensor, gradcheck
from models.base import KtStrategy
from models.config import KurtosisConfig
from regularizers import (
    compare_with_tape,
    is_bimodal,
    kt_schedule,
    kurtosis,
    kurtosis_loss,
    kurtosis_report,
    kurtosis_tensor,
    resolve_kt,
    shape_distribution,
)
from utils.errors import ConfigError, DegenerateDistributionError, ShapeError


# ==================== STATISTIC ====================

class TestKurtosis:
    """Reference values of the fourth standardized moment."""

    def test_uniform(self):
        w = np.random.default_rng(1).uniform(-1.0, 1.0, 200_000)
        assert kurtosis(w) == pytest.approx(1.8, abs=0.05)

    def test_normal(self):
        w = np.random.default_rng(2).normal(size=200_000)
        assert kurtosis(w) == pytest.approx(3.0, abs=0.1)

    def test_balanced_two_point(self):
        assert kurtosis(np.array([1.0, -1.0] * 50)) == pytest.approx(1.0)

    def test_scale_and_shift_invariant(self, rng):
        w = rng.normal(size=500)
        assert kurtosis(3.0 * w + 7.0) == pytest.approx(kurtosis(w))

    def test_constant_is_degenerate(self):
        with pytest.raises(DegenerateDistributionError):
            kurtosis(np.full(10, 0.3))

    def test_single_element(self):
        with pytest.raises(ShapeError):
            kurtosis(np.array([1.0]))

    def test_tensor_matches_numpy(self, rng):
        w = rng.normal(size=(8, 3, 3, 3))
        assert kurtosis_tensor(Tensor(w)).item() == pytest.approx(kurtosis(w))


# ==================== K_T SCHEDULES ====================

class TestKtSchedule:
    def test_uniform(self, tiny_model):
        targets = kt_schedule(tiny_model, 1.2)
        assert targets == {"conv2": 1.2, "conv3": 1.2, "conv4": 1.2}

    def test_heterogeneous_ramp(self, tiny_model):
        targets = kt_schedule(tiny_model, 1.5, KtStrategy.HETEROGENEOUS, spread=0.4, applies_to="all")
        values = list(targets.values())
        assert list(targets) == ["conv1", "conv2", "conv3", "conv4", "fc"]
        assert np.mean(values) == pytest.approx(1.5)
        assert values == sorted(values)
        assert values[0] == pytest.approx(1.1)
        assert values[-1] == pytest.approx(1.9)

    def test_per_layer_override(self, tiny_model):
        cfg = KurtosisConfig(kt=1.0, kt_per_layer={"conv3": 2.5})
        assert resolve_kt(tiny_model, cfg) == {"conv2": 1.0, "conv3": 2.5, "conv4": 1.0}

    @pytest.mark.parametrize("layer_id", ["nope", "bn2"])
    def test_bad_override(self, tiny_model, layer_id):
        with pytest.raises(ConfigError) as exc:
            resolve_kt(tiny_model, KurtosisConfig(kt_per_layer={layer_id: 1.0}))
        assert exc.value.key == f"kurtosis.kt_per_layer.{layer_id}"


# ==================== LOSS ====================

class TestKurtosisLoss:
    def test_zero_at_target(self, tiny_model):
        targets = {layer_id: kurtosis(tiny_model.weight(layer_id).data) for layer_id in ("conv2", "conv3")}
        assert kurtosis_loss(tiny_model, KurtosisConfig(), targets).item() == pytest.approx(0.0, abs=1e-12)

    def test_mean_over_layers(self, tiny_model):
        targets = {"conv2": 1.0, "conv4": 2.0}
        expected = np.mean([(kurtosis(tiny_model.weight(k).data) - v) ** 2 for k, v in targets.items()])
        assert kurtosis_loss(tiny_model, KurtosisConfig(), targets).item() == pytest.approx(expected)

    def test_gradient_matches_finite_differences(self, rng):
        w = Tensor(rng.normal(size=40), requires_grad=True)

        def loss(t):
            diff = kurtosis_tensor(t) - 1.2
            return diff * diff

        assert gradcheck(loss, [w])[0] < 1e-4

    def test_closed_form_tail_agreement(self, rng):
        w = rng.normal(size=4000)
        above = compare_with_tape(w, kt=1.8)
        below = compare_with_tape(w, kt=5.0)
        assert above.kurtosis > 1.8
        assert above.tail_sign_agreement > 0.9
        assert below.tail_sign_agreement < 0.1

    def test_report_marks_constant_layer(self, tiny_model):
        tiny_model.weight("conv3").data[:] = 0.1
        rows = {row.layer_id: row for row in kurtosis_report(tiny_model, {"conv2": 1.0})}
        assert np.isnan(rows["conv3"].kurtosis)
        assert rows["conv2"].gap == pytest.approx(abs(rows["conv2"].kurtosis - 1.0))
        assert rows["fc"].kt is None


# ==================== SHAPING ====================

class TestShaping:
    def test_is_bimodal(self):
        assert is_bimodal(np.array([1, 5, 9, 5, 1, 0, 1, 5, 9, 5, 1]))
        assert not is_bimodal(np.array([1, 3, 6, 9, 6, 3, 1]))
        assert not is_bimodal(np.zeros(8))

    def test_short_run_lowers_kurtosis(self):
        w = np.random.default_rng(3).normal(0.0, 1.0, 500)
        result = shape_distribution(w, kt=1.0, steps=60, lr=0.01, record_every=20)
        assert result.steps == 60
        assert result.final_kurtosis < kurtosis(w)
        assert result.kurtosis_trace[0] == pytest.approx(kurtosis(w))
        np.testing.assert_array_equal(w, np.random.default_rng(3).normal(0.0, 1.0, 500))

    def test_tolerance_stops_early(self):
        w = np.random.default_rng(4).uniform(-1.0, 1.0, 1000)
        result = shape_distribution(w, kt=kurtosis(w), steps=100, tolerance=1e-6)
        assert result.steps == 1

    @pytest.mark.slow
    def test_gaussian_becomes_bimodal(self):
        """100k N(0, 0.05) weights reach K_T = 1 within 2000 steps and split into two modes."""
        w = np.random.default_rng(5).normal(0.0, 0.05, 100_000)
        result = shape_distribution(w, kt=1.0, steps=2000, lr=0.01)
        assert result.steps <= 2000
        assert abs(result.final_kurtosis - 1.0) <= 0.05
        counts, _ = np.histogram(result.weights, bins=50)
        assert is_bimodal(counts, valley_ratio=0.6)
