"""
Tests for logit distillation and Weight Distribution Mimicking.
"""
import numpy as np
import pytest

from autodiff import Tensor, backward, gradcheck, ops
from distill import bin_centers, hard_density, kd_loss, layer_kl, soft_histogram, softened_probs, wdm_loss, weight_density, weight_kl
from models.config import WdmConfig
from networks import build
from utils.errors import ShapeError, TopologyError


class TestKnowledgeDistillation:
    """Batch-mean KL between temperature-softened distributions."""

    def test_zero_for_identical_logits(self, rng):
        z = rng.normal(size=(6, 10))
        assert kd_loss(z, Tensor(z.copy())).item() == pytest.approx(0.0, abs=1e-12)

    def test_matches_direct_formula(self, rng):
        z_t, z_s = rng.normal(size=(4, 5)), rng.normal(size=(4, 5))
        p, q = softened_probs(z_t, 2.0), softened_probs(z_s, 2.0)
        expected = np.mean(np.sum(p * np.log(p / q), axis=1))
        assert kd_loss(z_t, Tensor(z_s), temperature=2.0).item() == pytest.approx(expected)

    def test_teacher_receives_no_gradient(self, rng):
        z_t = Tensor(rng.normal(size=(3, 4)), requires_grad=True)
        z_s = Tensor(rng.normal(size=(3, 4)), requires_grad=True)
        grads = backward(kd_loss(z_t, z_s))
        assert z_s in grads
        assert z_t not in grads

    def test_gradient(self, rng):
        z_t = rng.normal(size=(3, 4))
        z_s = Tensor(rng.normal(size=(3, 4)), requires_grad=True)
        assert gradcheck(lambda s: kd_loss(z_t, s, 3.0), [z_s])[0] < 1e-4

    def test_rejects_bad_input(self, rng):
        with pytest.raises(ValueError):
            kd_loss(rng.normal(size=(2, 3)), Tensor(rng.normal(size=(2, 3))), temperature=0.0)
        with pytest.raises(ShapeError):
            kd_loss(rng.normal(size=(2, 3)), Tensor(rng.normal(size=(2, 4))))


class TestWeightDensity:
    """Soft triangular histograms over [-range, +range]."""

    def test_partition_of_unity(self, rng):
        cfg = WdmConfig(bins=16)
        w = Tensor(rng.uniform(-2.0, 2.0, 300))
        counts = soft_histogram(w, bin_centers(cfg), cfg.kernel_width)
        assert counts.data.sum() == pytest.approx(300.0)

    def test_normalized(self, rng):
        density = weight_density(rng.normal(0.0, 0.5, 200), WdmConfig(bins=32))
        assert density.numpy().sum() == pytest.approx(1.0)
        assert np.all(density.numpy() > 0)

    def test_centers_match_hard_histogram(self):
        cfg = WdmConfig(bins=8, eps=1e-12)
        centers = bin_centers(cfg)
        w = np.concatenate([np.full(3, centers[1]), np.full(5, centers[6])])
        np.testing.assert_allclose(weight_density(w, cfg).numpy(), hard_density(w, cfg), atol=1e-9)

    def test_gradient(self, rng):
        cfg = WdmConfig(bins=12, support=1.0)
        target = np.full(12, 1.0 / 12)
        w = Tensor(rng.uniform(-0.9, 0.9, 30), requires_grad=True)
        errors = gradcheck(lambda t: ops.kl_div(target, ops.log(weight_density(t, cfg).probs)), [w])
        assert errors[0] < 1e-4


class TestWeightMimicking:
    def test_identical_models_have_zero_kl(self, tiny_model):
        per_layer = layer_kl(tiny_model, tiny_model.clone(), WdmConfig(bins=16))
        assert list(per_layer) == ["conv2", "conv3", "conv4"]
        for value in per_layer.values():
            assert value.item() == pytest.approx(0.0, abs=1e-12)

    def test_only_student_weights_get_gradients(self, tiny_model):
        student = build("tiny-cnn", in_channels=1, input_size=8, num_classes=4, seed=7, dtype="float64")
        grads = backward(weight_kl(tiny_model, student, WdmConfig(bins=16)))
        for layer_id in ("conv2", "conv3", "conv4"):
            assert student.weight(layer_id) in grads
            assert tiny_model.weight(layer_id) not in grads
        assert student.weight("conv1") not in grads

    def test_loss_adds_weighted_kd(self, tiny_model, rng):
        student = tiny_model.clone()
        student.weight("conv3").data *= 0.5
        cfg = WdmConfig(bins=16, beta=0.5, temperature=2.0)
        z_t, z_s = rng.normal(size=(4, 4)), Tensor(rng.normal(size=(4, 4)))
        expected = weight_kl(tiny_model, student, cfg).item() + 0.5 * kd_loss(z_t, z_s, 2.0).item()
        assert wdm_loss(tiny_model, student, cfg, z_t, z_s).item() == pytest.approx(expected)
        assert wdm_loss(tiny_model, student, cfg).item() == pytest.approx(weight_kl(tiny_model, student, cfg).item())

    def test_topology_mismatch(self, tiny_model):
        other = build("tiny-cnn", in_channels=1, input_size=8, num_classes=10, seed=0, dtype="float64")
        with pytest.raises(TopologyError):
            weight_kl(tiny_model, other, WdmConfig(bins=16))
