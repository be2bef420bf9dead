"""
Tests for optimizers, checkpoints, the stage trainer, the BD-BNN pipeline,
evaluation and the ablation helpers.
"""
import numpy as np
import pandas as pd
import pytest

from autodiff import Tensor
from models.analysis_output import METRICS_COLUMNS
from models.base import ForwardMode, LossTerm, ScheduleKind
from models.config import KurtosisConfig, OptimizerConfig, ScheduleConfig, StageSpec
from networks import build
from training import (
    SGD,
    Adam,
    Checkpoint,
    Trainer,
    build_optimizer,
    evaluate,
    learning_rate,
    run_bdbnn,
    sign_flip_by_layer,
    suite_variants,
    summarize,
    train_bnn_stage,
    train_teacher,
)
from utils.errors import ArtifactNotFoundError, DivergenceError, FormatError, NonFiniteError, ShapeError, TopologyError

from tests.conftest import small_config


@pytest.fixture
def small_data(mnist_pair):
    train, test = mnist_pair
    return train.subset(64), test.subset(32)


# ==================== OPTIMIZERS ====================

class TestOptimizers:
    def test_sgd_with_momentum(self):
        p = Tensor(np.array([1.0, -1.0]), requires_grad=True)
        opt = SGD([p], lr=0.1, momentum=0.9)
        p.grad = np.array([1.0, 2.0])
        opt.step()
        np.testing.assert_allclose(p.data, [0.9, -1.2])
        p.grad = np.array([1.0, 2.0])
        opt.step()
        np.testing.assert_allclose(p.data, [0.9 - 0.19, -1.2 - 0.38])

    def test_adam_first_step_is_lr(self):
        p = Tensor(np.array([0.5, 0.5]), requires_grad=True)
        opt = Adam([p], lr=0.01)
        p.grad = np.array([3.0, -0.002])
        opt.step()
        np.testing.assert_allclose(p.data, [0.49, 0.51], atol=1e-6)

    def test_build_optimizer(self):
        p = Tensor(np.zeros(2), requires_grad=True)
        assert isinstance(build_optimizer(OptimizerConfig(kind="sgd", lr=0.1), [p]), SGD)
        assert isinstance(build_optimizer(OptimizerConfig(), [p]), Adam)

    @pytest.mark.parametrize("kind,epoch,expected", [
        (ScheduleKind.LINEAR, 0, 0.1),
        (ScheduleKind.LINEAR, 5, 0.05),
        (ScheduleKind.LINEAR, 10, 0.0),
        (ScheduleKind.COSINE, 5, 0.05),
        (ScheduleKind.STEP, 4, 0.001),
    ])
    def test_schedules(self, kind, epoch, expected):
        cfg = ScheduleConfig(kind=kind, step_size=2, gamma=0.1)
        assert learning_rate(cfg, 0.1, epoch, 10) == pytest.approx(expected)


# ==================== CHECKPOINTS ====================

class TestCheckpoint:
    """BDCK codec."""

    def test_roundtrip_is_byte_identical(self, tiny_model, tmp_path):
        ckpt = Checkpoint.from_model(tiny_model, "demo", mode="full-binary", seed=3)
        path = ckpt.save(tmp_path / "demo.bdck")
        loaded = Checkpoint.load(path)
        assert loaded.to_bytes() == ckpt.to_bytes()
        assert loaded.mode is ForwardMode.FULL_BINARY
        restored = loaded.to_model()
        for key, value in tiny_model.state().items():
            np.testing.assert_array_equal(restored.state()[key], value)

    def test_float32_state(self):
        model = build("tiny-cnn", input_size=8, dtype="float32")
        ckpt = Checkpoint.from_bytes(Checkpoint.from_model(model, "f32").to_bytes())
        assert ckpt.to_model().dtype == np.float32

    def test_missing(self, tmp_path):
        with pytest.raises(ArtifactNotFoundError):
            Checkpoint.load(tmp_path / "absent.bdck")

    def test_bad_magic(self, tiny_model):
        raw = bytearray(Checkpoint.from_model(tiny_model, "x").to_bytes())
        raw[:4] = b"NOPE"
        with pytest.raises(FormatError) as exc:
            Checkpoint.from_bytes(bytes(raw))
        assert exc.value.offset == 0

    def test_truncated_tensor_data(self, tiny_model):
        raw = Checkpoint.from_model(tiny_model, "x").to_bytes()
        with pytest.raises(FormatError, match="past end of file"):
            Checkpoint.from_bytes(raw[:-8])


# ==================== TRAINER ====================

class TestTrainer:
    def test_loss_terms_add_up(self, small_data):
        train, _ = small_data
        cfg = small_config()
        model = build("tiny-cnn", input_size=28, num_classes=10, dtype="float64")
        teacher = model.clone().freeze()
        stage = cfg.stages[1]
        trainer = Trainer(cfg, train)
        targets = {"conv2": 1.0, "conv3": 1.0, "conv4": 1.0}
        loss, terms = trainer.compute_loss(model, stage, train.images[:8], train.labels[:8], cfg.kurtosis, targets, teacher)
        assert set(terms) == {"ce", "kurtosis", "wdm", "kd"}
        assert loss.item() == pytest.approx(sum(terms.values()))
        assert terms["wdm"] == pytest.approx(0.0, abs=1e-12)

    def test_distillation_needs_teacher(self, small_data):
        train, test = small_data
        cfg = small_config()
        with pytest.raises(TopologyError):
            train_bnn_stage(cfg, cfg.stages[1], None, train, test)

    def test_teacher_is_deterministic(self, small_data):
        train, test = small_data
        cfg = small_config()
        first = train_teacher(cfg, train, test)
        second = train_teacher(cfg, train, test)
        assert first.to_bytes() == second.to_bytes()
        assert first.metadata["stage"] == "teacher"
        assert len(first.metadata["metrics"]) == 1

    def test_single_sample_batch_skipped(self, small_data):
        train, test = small_data
        cfg = small_config()
        stage = StageSpec(name="only", mode=ForwardMode.FULL_BINARY, losses=[LossTerm.CE])
        ckpt = train_bnn_stage(cfg, stage, None, train.subset(33), test)
        assert ckpt.metadata["epochs"] == 1

    def test_latent_weights_clipped(self, small_data):
        train, test = small_data
        cfg = small_config(latent_clip=0.05)
        stage = StageSpec(name="clip", mode=ForwardMode.FULL_BINARY, losses=[LossTerm.CE])
        model = train_bnn_stage(cfg, stage, None, train, test).to_model()
        for layer in model.binarized_layers():
            assert np.abs(model.weight(layer.id).data).max() <= 0.05
        assert np.abs(model.weight("conv1").data).max() > 0.05

    def test_divergence_leaves_dump(self, small_data, tmp_path, monkeypatch):
        train, test = small_data
        cfg = small_config()

        def explode(*args, **kwargs):
            raise NonFiniteError("loss is not finite")

        monkeypatch.setattr(Trainer, "compute_loss", explode)
        stage = StageSpec(name="boom", mode=ForwardMode.FULL_BINARY, losses=[LossTerm.CE])
        with pytest.raises(DivergenceError) as exc:
            train_bnn_stage(cfg, stage, None, train, test, artifact_dir=tmp_path)
        assert exc.value.exit_code == 4
        assert Checkpoint.load(exc.value.dump_path).name == "boom-diverged"


# ==================== PIPELINE ====================

class TestPipeline:
    def test_run_writes_checkpoints_and_metrics(self, small_data, tmp_path):
        train, test = small_data
        result = run_bdbnn(small_config(), train, test, out_dir=tmp_path)
        assert list(result.checkpoints) == ["teacher", "bnn-act", "distill"]
        for path in result.checkpoints.values():
            assert Checkpoint.load(path)
        frame = pd.read_csv(result.metrics_path)
        assert list(frame.columns) == METRICS_COLUMNS
        assert list(frame["stage"]) == ["teacher", "bnn-act", "distill"]
        assert 0.0 <= result.sign_flip_pct <= 100.0
        assert set(result.sign_flip_by_layer) == {"conv2", "conv3", "conv4"}
        assert [s.name for s in result.stages] == ["teacher", "bnn-act", "distill"]

    def test_teacher_untouched_by_distillation(self, small_data):
        train, test = small_data
        cfg = small_config()
        teacher = train_teacher(cfg, train, test)
        before = teacher.to_bytes()
        result = run_bdbnn(cfg, train, test, teacher=teacher)
        assert teacher.to_bytes() == before
        assert list(result.checkpoints) == []
        assert result.student.name == "distill"

    def test_kd_only_stage(self, small_data):
        train, test = small_data
        cfg = small_config(stages=[
            StageSpec(name="kd", mode=ForwardMode.FULL_BINARY, losses=[LossTerm.CE, LossTerm.KD], teacher="teacher"),
        ])
        result = run_bdbnn(cfg, train, test)
        row = result.metrics[-1]
        assert row.loss_kd > 0.0
        assert row.loss_wdm == 0.0


# ==================== EVALUATION ====================

class TestEvaluation:
    def test_evaluate_checkpoint(self, small_data):
        _, test = small_data
        model = build("tiny-cnn", input_size=28, num_classes=10)
        ckpt = Checkpoint.from_model(model, "fresh", mode="full-binary")
        report = evaluate(ckpt, test)
        assert report.mode == "full-binary"
        assert report.samples == 32
        assert 0.0 <= report.top1 <= report.top5 <= 100.0
        assert [l.layer_id for l in report.binarized_layers] == ["conv2", "conv3", "conv4"]
        assert evaluate(ckpt, test, mode="fp").mode == "fp"

    def test_empty_split(self, small_data):
        _, test = small_data
        ckpt = Checkpoint.from_model(build("tiny-cnn", input_size=28), "fresh")
        with pytest.raises(ShapeError):
            evaluate(ckpt, test.subset(0))

    def test_sign_flip_against_self(self, tiny_model):
        flips = sign_flip_by_layer(tiny_model, tiny_model.clone())
        assert all(f == 0 for f, _ in flips.values())
        negated = tiny_model.clone()
        for layer in negated.binarized_layers():
            negated.weight(layer.id).data *= -1.0
        flips = sign_flip_by_layer(tiny_model, negated)
        assert all(f == n for f, n in flips.values())


# ==================== ABLATION ====================

class TestAblation:
    def test_components_suite(self):
        names = [name for name, _, _ in suite_variants("components")]
        assert names == ["BNN", "BNN+WDR", "BNN+WDR+KD", "BNN+WDR+WDM"]
        _, _, stages = suite_variants("components")[-1]
        assert LossTerm.WDM in stages[-1].losses and stages[-1].teacher == "teacher"

    def test_teacher_student_suite(self):
        kinds = {kind for _, kind, _ in suite_variants("teacher-student")}
        assert kinds == {"fp", "fp+wdr"}

    def test_unknown_suite(self):
        with pytest.raises(ValueError):
            suite_variants("everything")

    def test_summarize_keeps_variant_order(self):
        frame = pd.DataFrame({
            "variant": ["b", "a", "b", "a"],
            "seed": [0, 0, 1, 1],
            "top1": [50.0, 60.0, 52.0, 62.0],
        })
        summary = summarize(frame)
        assert list(summary["variant"]) == ["b", "a"]
        assert list(summary["top1_mean"]) == [51.0, 61.0]
        assert list(summary["seeds"]) == [2, 2]


# ==================== DESK-SCALE RUNS ====================

@pytest.fixture(scope="module")
def desk_data():
    """The desk recipe's MNIST split from BDBNN_DATA_DIR; these runs need real digits."""
    from config import recipe, settings
    from data_loader import load_dataset

    root = settings.data_dir / "mnist"
    if not (root / "train-images-idx3-ubyte").is_file():
        pytest.skip(f"MNIST not found under {root}")
    cfg = recipe("desk")
    train = load_dataset("mnist", "train", root, cfg.data.subset, cfg.precision)
    test = load_dataset("mnist", "test", root, cfg.data.test_subset, cfg.precision)
    return cfg, train, test


@pytest.mark.slow
class TestDeskScale:
    def test_component_ordering(self, desk_data):
        """Mean top-1 over three seeds: BNN <= BNN+WDR <= BNN+WDR+WDM, with a 0.3 point total gain."""
        from training import run_ablation

        cfg, train, test = desk_data
        summary = summarize(run_ablation(cfg, "components", [0, 1, 2], train, test)).set_index("variant")
        mean = summary["top1_mean"]
        assert mean["BNN"] <= mean["BNN+WDR"] <= mean["BNN+WDR+WDM"]
        assert mean["BNN+WDR+WDM"] - mean["BNN"] >= 0.3

    def test_student_cosine_beats_plain_bnn(self, desk_data):
        """The distilled student sits closer to alpha * sign(W) than plain BNN on >= 70% of binarized layers."""
        from training import layer_reports
        from training.ablation import variant_config

        cfg, train, test = desk_data
        variants = {name: (kind, stages) for name, kind, stages in suite_variants("components")}
        teacher = None
        cosines = {}
        for name in ("BNN", "BNN+WDR+WDM"):
            kind, stages = variants[name]
            run_cfg = variant_config(cfg, kind, stages, seed=0)
            if teacher is None:
                teacher = train_teacher(run_cfg, train, test)
            student = run_bdbnn(run_cfg, train, test, teacher=teacher).student
            rows = layer_reports(student.to_model(), with_gradients=False)
            cosines[name] = {row.layer_id: row.cosine for row in rows if row.binarized}
        layers = list(cosines["BNN"])
        wins = sum(cosines["BNN+WDR+WDM"][k] >= cosines["BNN"][k] for k in layers)
        assert wins >= 0.7 * len(layers)
