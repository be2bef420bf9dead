"""
Logit distillation and Weight Distribution Mimicking.

The teacher is always a constant: its logits and weight densities enter the
losses as plain arrays, so no gradient can reach teacher parameters.
"""
import math
from dataclasses import dataclass
from typing import Dict, List, Optional, Union

import numpy as np

from autodiff import ops
from autodiff.tensor import Tensor, make_op
from models.config import WdmConfig
from networks.graph import ModelGraph
from utils.errors import ShapeError

ArrayLike = Union[Tensor, np.ndarray]


def _constant(x: ArrayLike) -> np.ndarray:
    return x.data if isinstance(x, Tensor) else np.asarray(x, dtype=np.float64)


def softened_probs(logits: ArrayLike, temperature: float) -> np.ndarray:
    z = _constant(logits) / temperature
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def kd_loss(z_t: ArrayLike, z_s: Tensor, temperature: float = 4.0) -> Tensor:
    """
    Batch-mean KL(softmax(z_t / T) || softmax(z_s / T)).

    No T^2 factor is applied; the loss equals the direct
    mean_n sum_k p log(p / q).
    """
    if temperature <= 0:
        raise ValueError(f"temperature must be positive, got {temperature}")
    teacher = _constant(z_t)
    if teacher.shape != z_s.shape:
        raise ShapeError(f"teacher logits {teacher.shape} vs student logits {z_s.shape}")
    p = softened_probs(teacher, temperature).astype(z_s.dtype)
    log_q = ops.log_softmax(z_s * (1.0 / temperature), axis=-1)
    return ops.kl_div(p, log_q, reduction="batchmean")


# ==================== WEIGHT DENSITIES ====================

@dataclass
class WeightDensity:
    """Soft histogram of one weight tensor; probs is differentiable w.r.t. the weights."""
    bin_centers: np.ndarray
    probs: Tensor

    def numpy(self) -> np.ndarray:
        return self.probs.data


def bin_centers(cfg: WdmConfig) -> np.ndarray:
    return -cfg.support + (np.arange(cfg.bins) + 0.5) * cfg.bin_width


def soft_histogram(w: Tensor, centers: np.ndarray, width: float) -> Tensor:
    """
    Triangular-kernel bin counts: element x adds max(0, 1 - |x - c| / width)
    to the bin at center c. Elements outside the centers are clamped onto the
    edge bins and carry no gradient.
    """
    if w.size == 0:
        raise ShapeError("weight_density of an empty tensor")
    x = w.data.reshape(-1).astype(np.float64)
    step = centers[1] - centers[0]
    clamped = np.clip(x, centers[0], centers[-1])
    inside = (x >= centers[0]) & (x <= centers[-1])
    base = np.floor((clamped - centers[0]) / step).astype(np.int64)
    reach = int(math.ceil(width / step))
    nbins = centers.size

    counts = np.zeros(nbins)
    taps = []
    for offset in range(-reach, reach + 2):
        j = base + offset
        valid = (j >= 0) & (j < nbins)
        jj = np.where(valid, j, 0)
        dist = clamped - centers[jj]
        weight = np.where(valid, np.maximum(0.0, 1.0 - np.abs(dist) / width), 0.0)
        counts += np.bincount(jj[valid], weight[valid], minlength=nbins)
        slope = np.where(valid & inside & (weight > 0), -np.sign(dist) / width, 0.0)
        taps.append((jj, slope))

    def rule(g):
        grad = np.zeros_like(x)
        for jj, slope in taps:
            grad += g[jj] * slope
        return (grad.reshape(w.shape).astype(w.dtype),)

    return make_op("soft_histogram", counts.astype(w.dtype), (w,), rule)


def weight_density(w: ArrayLike, cfg: WdmConfig) -> WeightDensity:
    """Normalized, eps-smoothed soft histogram over [-range, +range]."""
    w = w if isinstance(w, Tensor) else Tensor(np.asarray(w, dtype=np.float64))
    centers = bin_centers(cfg)
    counts = soft_histogram(w, centers, cfg.kernel_width)
    probs = (counts + cfg.eps) / (ops.sum(counts) + cfg.eps * cfg.bins)
    return WeightDensity(bin_centers=centers, probs=probs)


def hard_density(w: np.ndarray, cfg: WdmConfig) -> np.ndarray:
    """Plain histogram over the same bins (out-of-range values clamp to the edges)."""
    edges = -cfg.support + np.arange(cfg.bins + 1) * cfg.bin_width
    x = np.clip(np.asarray(w, dtype=np.float64).reshape(-1), edges[0], edges[-1])
    counts, _ = np.histogram(x, bins=edges)
    return counts / counts.sum()


def _density_layers(teacher: ModelGraph, student: ModelGraph, layers: Optional[List[str]]) -> List[str]:
    teacher.check_same_topology(student, what="teacher and student")
    if layers is None:
        return [layer.id for layer in student.binarized_layers()]
    return list(layers)


def layer_kl(teacher: ModelGraph, student: ModelGraph, cfg: WdmConfig, layers: Optional[List[str]] = None) -> Dict[str, Tensor]:
    """KL(D(W_teacher) || D(W_student)) per layer; teacher densities are constants."""
    out = {}
    for layer_id in _density_layers(teacher, student, layers):
        target = weight_density(teacher.weight(layer_id).data, cfg).numpy()
        student_density = weight_density(student.weight(layer_id), cfg)
        out[layer_id] = ops.kl_div(target, ops.log(student_density.probs), reduction="sum")
    return out


def weight_kl(teacher: ModelGraph, student: ModelGraph, cfg: WdmConfig, layers: Optional[List[str]] = None) -> Tensor:
    """Sum of per-layer density KLs over the binarized layers."""
    terms = list(layer_kl(teacher, student, cfg, layers).values())
    if not terms:
        raise ShapeError("weight_kl: no layers to compare")
    total = terms[0]
    for term in terms[1:]:
        total = total + term
    return total


def wdm_loss(
    teacher: ModelGraph,
    student: ModelGraph,
    cfg: WdmConfig,
    z_t: Optional[ArrayLike] = None,
    z_s: Optional[Tensor] = None,
    layers: Optional[List[str]] = None,
) -> Tensor:
    """
    sum_i KL(D(W_i teacher) || D(W_i student)) + beta * kd_loss(z_t, z_s).

    The KD term is dropped when no logits are passed.
    """
    loss = weight_kl(teacher, student, cfg, layers)
    if z_t is not None and z_s is not None and cfg.beta > 0:
        loss = loss + kd_loss(z_t, z_s, cfg.temperature) * cfg.beta
    return loss
