"""
Stage trainer and the teacher / BNN stage entry points.

Total loss of a stage (each term gated by the stage's loss list):
    ce + lambda * kurtosis + alpha_wdm * (density KL + beta * KD)
A stage that enables kd without wdm adds beta * KD on its own.
"""
import logging
import sys
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np
from tqdm import tqdm

from autodiff import ops
from autodiff.tensor import Tensor, backward, no_grad
from binarization import clip_latent
from config import settings
from data_loader import batches, prefetch
from distill import kd_loss, weight_kl
from models.base import ForwardMode, LossTerm
from models.config import KurtosisConfig, StageSpec, TrainConfig
from models.analysis_output import EpochMetrics
from models.dataset import Dataset
from networks import ModelGraph, build, forward
from regularizers import compare_with_tape, kurtosis, kurtosis_loss, kurtosis_report, resolve_kt
from training.checkpoint import Checkpoint
from training.optimizers import build_optimizer, learning_rate
from utils.calculations import binarization_cosine, topk_correct
from utils.errors import DegenerateDistributionError, DivergenceError, NonFiniteError, TopologyError
from utils.formatters import format_loss_terms

logger = logging.getLogger(__name__)

TEACHER_STAGE = "teacher"


def build_model(cfg: TrainConfig, sample_shape: Tuple[int, ...]) -> ModelGraph:
    """Fresh, seeded model for the configured architecture and input geometry."""
    channels, size = sample_shape[0], sample_shape[1]
    return build(
        cfg.model.arch,
        cfg.model.variant,
        cfg.model.num_classes,
        in_channels=channels,
        input_size=size,
        binarize_downsample=cfg.model.binarize_downsample,
        seed=cfg.seed,
        dtype=cfg.precision,
    )


def predict_logits(model: ModelGraph, images: np.ndarray, mode: ForwardMode, batch_size: int = 256) -> np.ndarray:
    """Eval-mode logits for a whole array, computed batch by batch without a tape."""
    out = []
    with no_grad():
        for start in range(0, len(images), batch_size):
            chunk = images[start:start + batch_size].astype(model.dtype)
            out.append(forward(model, chunk, mode, training=False).data)
    if not out:
        return np.zeros((0, model.num_classes), dtype=model.dtype)
    return np.concatenate(out)


class Trainer:
    """
    Runs training stages for one TrainConfig over a fixed train/test pair.
    """

    def __init__(
        self,
        cfg: TrainConfig,
        train: Dataset,
        test: Optional[Dataset] = None,
        quiet: bool = True,
        artifact_dir=None,
        threads: Optional[int] = None,
    ):
        self.cfg = cfg
        self.train = train
        self.test = test if test is not None else train
        self.quiet = quiet
        self.artifact_dir = artifact_dir
        self.threads = settings.threads if threads is None else threads

    # ==================== LOSS ====================

    def compute_loss(
        self,
        model: ModelGraph,
        stage: StageSpec,
        images: np.ndarray,
        labels: np.ndarray,
        kcfg: KurtosisConfig,
        targets: Dict[str, float],
        teacher: Optional[ModelGraph] = None,
    ) -> Tuple[Tensor, Dict[str, float]]:
        """Weighted loss terms of one batch; the returned floats add up to the total."""
        cfg = self.cfg
        logits = forward(
            model, images, stage.mode, training=True,
            weight_ste=cfg.weight_ste, activation_ste=cfg.activation_ste,
        )
        parts: Dict[str, Tensor] = {}
        if LossTerm.CE in stage.losses:
            parts["ce"] = ops.cross_entropy(logits, labels)
        if LossTerm.KURTOSIS in stage.losses and kcfg.lam > 0 and targets:
            parts["kurtosis"] = kurtosis_loss(model, kcfg, targets) * kcfg.lam

        wants_wdm = LossTerm.WDM in stage.losses
        wants_kd = LossTerm.KD in stage.losses
        if (wants_wdm or wants_kd) and teacher is None:
            raise TopologyError(f"stage '{stage.name}' needs a teacher model")
        if wants_wdm or wants_kd:
            with no_grad():
                teacher_logits = forward(teacher, images, ForwardMode.FP, training=False).data
            kd_scale = cfg.wdm.beta * (cfg.wdm.alpha_wdm if wants_wdm else 1.0)
            if wants_wdm:
                parts["wdm"] = weight_kl(teacher, model, cfg.wdm) * cfg.wdm.alpha_wdm
            if kd_scale > 0:
                parts["kd"] = kd_loss(teacher_logits, logits, cfg.wdm.temperature) * kd_scale

        if not parts:
            raise ValueError(f"stage '{stage.name}' has no active loss terms")
        names = list(parts)
        total = parts[names[0]]
        for name in names[1:]:
            total = total + parts[name]
        return total, {name: term.item() for name, term in parts.items()}

    # ==================== EPOCHS ====================

    def fit(
        self,
        model: ModelGraph,
        stage: StageSpec,
        epochs: int,
        kcfg: KurtosisConfig,
        teacher: Optional[ModelGraph] = None,
    ) -> List[EpochMetrics]:
        """Train model in place for `epochs` epochs; returns one metrics row per epoch."""
        cfg = self.cfg
        if LossTerm.KURTOSIS in stage.losses:
            targets = resolve_kt(model, kcfg)
            model.set_kt(targets)
        else:
            targets = {}
        optimizer = build_optimizer(cfg.optimizer, model.parameters())
        clip = cfg.latent_clip if stage.mode is not ForwardMode.FP else None
        clipped = [model.weight(layer.id) for layer in model.binarized_layers()] if clip else []
        depth = cfg.data.prefetch if self.threads > 1 else 0
        history: List[EpochMetrics] = []

        for epoch in range(epochs):
            optimizer.lr = learning_rate(cfg.schedule, cfg.optimizer.lr, epoch, epochs)
            sums: Dict[str, float] = {}
            seen = 0
            stream = prefetch(batches(self.train, cfg.data.batch_size, cfg.seed, cfg.data.augment, epoch), depth)
            total_batches = -(-len(self.train) // max(1, min(cfg.data.batch_size, len(self.train))))
            progress = tqdm(
                stream,
                total=total_batches,
                desc=f"{stage.name} {epoch + 1}/{epochs}",
                leave=False,
                disable=self.quiet or not sys.stderr.isatty(),
            )
            for images, labels in progress:
                if len(labels) < 2:
                    # batchnorm statistics need two samples
                    continue
                images = images.astype(model.dtype)
                try:
                    loss, terms = self.compute_loss(model, stage, images, labels, kcfg, targets, teacher)
                    if not np.isfinite(loss.item()):
                        raise NonFiniteError("loss is not finite")
                    backward(loss)
                except (NonFiniteError, DegenerateDistributionError) as exc:
                    self._diverged(model, stage, epoch, exc)
                optimizer.step()
                for tensor in clipped:
                    clip_latent(tensor, clip)
                n = len(labels)
                seen += n
                for name, value in terms.items():
                    sums[name] = sums.get(name, 0.0) + value * n
                progress.set_postfix(loss=f"{loss.item():.4f}")

            means = {name: value / seen for name, value in sums.items()} if seen else {}
            row = self._epoch_metrics(model, stage, epoch, means)
            history.append(row)
            logger.info(
                "[%s] epoch %d/%d lr=%.3g %s top1=%.2f kurtosis=%.3f cosine=%.4f",
                stage.name, epoch + 1, epochs, optimizer.lr,
                format_loss_terms(means), row.top1, row.mean_kurtosis, row.mean_cosine,
            )
            if targets:
                self._log_gradient_diagnostic(model, targets)
        return history

    def _epoch_metrics(self, model: ModelGraph, stage: StageSpec, epoch: int, means: Dict[str, float]) -> EpochMetrics:
        logits = predict_logits(model, self.test.images, stage.mode)
        top1 = 100.0 * topk_correct(logits, self.test.labels, 1) / max(len(self.test), 1)
        layers = model.binarized_layers() or model.weight_layers()
        kurt, cos = [], []
        for layer in layers:
            w = model.weight(layer.id).data
            cos.append(binarization_cosine(w))
            try:
                kurt.append(kurtosis(w))
            except DegenerateDistributionError:
                continue
        return EpochMetrics(
            epoch=epoch,
            stage=stage.name,
            loss_total=float(sum(means.values())),
            loss_ce=means.get("ce", 0.0),
            loss_kurtosis=means.get("kurtosis", 0.0),
            loss_wdm=means.get("wdm", 0.0),
            loss_kd=means.get("kd", 0.0),
            top1=top1,
            mean_kurtosis=float(np.mean(kurt)) if kurt else float("nan"),
            mean_cosine=float(np.mean(cos)) if cos else 0.0,
        )

    def _log_gradient_diagnostic(self, model: ModelGraph, targets: Dict[str, float]) -> None:
        agreements = []
        for layer_id, kt in targets.items():
            try:
                result = compare_with_tape(model.weight(layer_id).data, kt)
            except DegenerateDistributionError:
                continue
            agreements.append(result.tail_sign_agreement)
            logger.debug("closed-form vs tape gradient %s: %s", layer_id, result.model_dump())
        if agreements:
            logger.info("closed-form vs tape gradient: mean tail sign agreement %.3f over %d layers",
                        float(np.mean(agreements)), len(agreements))

    def _diverged(self, model: ModelGraph, stage: StageSpec, epoch: int, exc: Exception) -> None:
        dump_path = None
        if self.artifact_dir is not None:
            dump = Checkpoint.from_model(model, f"{stage.name}-diverged", stage=stage.name, epoch=epoch,
                                         mode=stage.mode.value, error=str(exc))
            dump_path = str(dump.save(Path(self.artifact_dir) / f"{stage.name}-diverged.bdck"))
        logger.error("Stage %s diverged at epoch %d: %s", stage.name, epoch, exc)
        raise DivergenceError(f"stage '{stage.name}' diverged at epoch {epoch}: {exc}", dump_path) from exc


# ==================== STAGE ENTRY POINTS ====================

def _metadata(cfg: TrainConfig, model: ModelGraph, stage: StageSpec, train: Dataset, history: List[EpochMetrics]) -> dict:
    report = kurtosis_report(model)
    return {
        "stage": stage.name,
        "mode": stage.mode.value,
        "losses": [term.value for term in stage.losses],
        "epochs": len(history),
        "seed": cfg.seed,
        "config": cfg.model_dump(mode="json", by_alias=True),
        "dataset": train.metadata(),
        "kt_targets": model.kt_targets,
        "kurtosis_report": [row.model_dump() for row in report],
        "metrics": [row.model_dump() for row in history],
    }


def train_teacher(
    cfg: TrainConfig,
    train: Dataset,
    test: Optional[Dataset] = None,
    quiet: bool = True,
    artifact_dir=None,
) -> Checkpoint:
    """
    Full-precision teacher trained with ce + lambda * kurtosis under the
    teacher kurtosis config (heterogeneous K_T by default).
    """
    stage = StageSpec(name=TEACHER_STAGE, mode=ForwardMode.FP, losses=[LossTerm.CE, LossTerm.KURTOSIS])
    model = build_model(cfg, train.sample_shape)
    trainer = Trainer(cfg, train, test, quiet=quiet, artifact_dir=artifact_dir)
    history = trainer.fit(model, stage, cfg.teacher_stage_epochs, cfg.teacher_kurtosis)
    return Checkpoint.from_model(model, TEACHER_STAGE, **_metadata(cfg, model, stage, train, history))


def train_bnn_stage(
    cfg: TrainConfig,
    stage: StageSpec,
    init: Optional[Checkpoint],
    train: Dataset,
    test: Optional[Dataset] = None,
    teacher: Optional[Checkpoint] = None,
    quiet: bool = True,
    artifact_dir=None,
) -> Checkpoint:
    """
    One BNN stage, starting from `init` (or a fresh model). The teacher, when
    the stage distills, is loaded frozen and never updated.
    """
    model = build_model(cfg, train.sample_shape)
    if init is not None:
        start = init.to_model(cfg.precision)
        model.check_same_topology(start, what="init checkpoint and configured model")
        model = start
    teacher_model = None
    if LossTerm.WDM in stage.losses or LossTerm.KD in stage.losses:
        if teacher is None:
            raise TopologyError(f"stage '{stage.name}' distills but no teacher checkpoint was given")
        teacher_model = teacher.to_model(cfg.precision).freeze()
        teacher_model.check_same_topology(model, what="teacher and student")

    trainer = Trainer(cfg, train, test, quiet=quiet, artifact_dir=artifact_dir)
    history = trainer.fit(model, stage, cfg.stage_epochs(stage), cfg.kurtosis, teacher_model)
    return Checkpoint.from_model(model, stage.name, **_metadata(cfg, model, stage, train, history))
