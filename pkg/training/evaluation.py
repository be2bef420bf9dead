"""
Checkpoint evaluation: top-k accuracy plus per-layer kurtosis, binarization
cosine and the closed-form gradient diagnostic.
"""
import logging
from typing import List, Optional, Union

import numpy as np

from models.analysis_output import EvaluationReport, LayerReport
from models.base import ForwardMode
from models.dataset import Dataset
from networks.graph import ModelGraph
from regularizers import compare_with_tape, kurtosis
from training.checkpoint import Checkpoint
from training.trainer import predict_logits
from utils.calculations import binarization_cosine, sign_flips, topk_accuracy
from utils.errors import DegenerateDistributionError, ShapeError

logger = logging.getLogger(__name__)


def layer_reports(model: ModelGraph, with_gradients: bool = True) -> List[LayerReport]:
    targets = model.kt_targets
    rows = []
    for layer in model.weight_layers():
        w = model.weight(layer.id).data
        agreement = None
        try:
            value = kurtosis(w)
            if with_gradients and layer.id in targets:
                agreement = compare_with_tape(w, targets[layer.id]).tail_sign_agreement
        except DegenerateDistributionError:
            value = float("nan")
        rows.append(LayerReport(
            layer_id=layer.id,
            numel=int(w.size),
            binarized=layer.binarize,
            kurtosis=value,
            kt=targets.get(layer.id),
            cosine=binarization_cosine(w),
            grad_sign_agreement=agreement,
        ))
    return rows


def evaluate(
    checkpoint: Checkpoint,
    ds: Dataset,
    mode: Optional[Union[ForwardMode, str]] = None,
    batch_size: int = 256,
    dtype: Optional[str] = None,
) -> EvaluationReport:
    """Accuracy over a split under the checkpoint's own mode unless `mode` overrides it."""
    if len(ds) == 0:
        raise ShapeError(f"cannot evaluate on an empty {ds.split.value} split")
    mode = ForwardMode(mode) if mode is not None else checkpoint.mode
    model = checkpoint.to_model(dtype)
    logits = predict_logits(model, ds.images, mode, batch_size)
    report = EvaluationReport(
        checkpoint=checkpoint.name,
        split=ds.split.value,
        mode=mode.value,
        samples=len(ds),
        top1=topk_accuracy(logits, ds.labels, 1),
        top5=topk_accuracy(logits, ds.labels, 5),
        layers=layer_reports(model),
    )
    logger.info("Evaluated %s on %s (%s): top1=%.2f top5=%.2f", checkpoint.name, ds.split.value,
                mode.value, report.top1, report.top5)
    return report


def sign_flip_by_layer(baseline: ModelGraph, current: ModelGraph, binarized_only: bool = True) -> dict:
    """Percent of weights per layer whose sign differs between two models of equal topology."""
    baseline.check_same_topology(current, what="baseline and checkpoint")
    layers = current.binarized_layers() if binarized_only else current.weight_layers()
    out = {}
    for layer in layers:
        flipped, total = sign_flips(baseline.weight(layer.id).data, current.weight(layer.id).data)
        out[layer.id] = (flipped, total)
    return out


def overall_sign_flip(per_layer: dict) -> float:
    flipped = sum(f for f, _ in per_layer.values())
    total = sum(n for _, n in per_layer.values())
    return 100.0 * flipped / total if total else 0.0
