"""
Kurtosis statistics and the kurtosis regularization loss.

kurtosis(w) = E[((w - mu) / sigma)^4] with population moments. The loss
averages |kurtosis(W_i) - K_T(i)|^2 over the regularized layers and is
differentiated through the tape; the closed form gradient printed alongside
the method is available only as a diagnostic.
"""
import logging
from typing import Dict, List, Optional, Union

import numpy as np
from pydantic import BaseModel

from autodiff import ops
from autodiff.tensor import Tensor, backward
from models.base import KtStrategy
from models.config import KurtosisConfig
from networks.graph import ModelGraph
from utils.errors import ConfigError, DegenerateDistributionError, ShapeError

logger = logging.getLogger(__name__)

ArrayLike = Union[Tensor, np.ndarray]


def _as_array(w: ArrayLike) -> np.ndarray:
    return w.data if isinstance(w, Tensor) else np.asarray(w, dtype=np.float64)


def _check_spread(data: np.ndarray, what: str = "weights") -> None:
    if data.size < 2:
        raise ShapeError(f"kurtosis needs at least 2 elements, got {data.size}")
    if not np.var(data) > 0:
        raise DegenerateDistributionError(f"{what} have zero variance: kurtosis is undefined")


def kurtosis(w: ArrayLike) -> float:
    """Fourth standardized moment (3 for a Gaussian, 1.8 uniform, 1 for a balanced two-point)."""
    data = _as_array(w).astype(np.float64).reshape(-1)
    _check_spread(data)
    centered = data - data.mean()
    m2 = np.mean(centered ** 2)
    return float(np.mean(centered ** 4) / (m2 * m2))


def kurtosis_tensor(w: Tensor, what: str = "weights") -> Tensor:
    """Differentiable kurtosis of every element of w."""
    _check_spread(w.data, what)
    centered = w - ops.mean(w)
    squared = centered * centered
    m2 = ops.mean(squared)
    return ops.mean(squared * squared) / (m2 * m2)


# ==================== K_T SCHEDULES ====================

def kt_schedule(
    model: ModelGraph,
    mean_target: float,
    strategy: Union[KtStrategy, str] = KtStrategy.UNIFORM,
    spread: float = 0.4,
    applies_to: str = "binarized",
) -> Dict[str, float]:
    """
    K_T per regularized layer.

    uniform gives every layer mean_target. heterogeneous is a linear ramp over
    depth from mean_target - spread (shallowest) to mean_target + spread
    (deepest); its arithmetic mean is mean_target.
    """
    layers = model.regularized_layers(applies_to)
    if not layers:
        raise ShapeError("kt_schedule: the model has no regularized layers")
    strategy = KtStrategy(strategy)
    if strategy is KtStrategy.UNIFORM or len(layers) == 1:
        return {layer.id: float(mean_target) for layer in layers}
    offsets = np.linspace(-spread, spread, len(layers))
    offsets -= offsets.mean()
    return {layer.id: float(mean_target + off) for layer, off in zip(layers, offsets)}


def resolve_kt(model: ModelGraph, cfg: KurtosisConfig) -> Dict[str, float]:
    """Schedule targets, overridden by cfg.kt_per_layer (validated against the model)."""
    layers = {layer.id: layer for layer in model.layers}
    for layer_id in cfg.kt_per_layer:
        if layer_id not in layers:
            raise ConfigError(f"model has no layer '{layer_id}'", key=f"kurtosis.kt_per_layer.{layer_id}")
        if not layers[layer_id].has_weights:
            raise ConfigError(f"layer '{layer_id}' has no weights", key=f"kurtosis.kt_per_layer.{layer_id}")
    targets = kt_schedule(model, cfg.kt, cfg.strategy, cfg.spread, cfg.applies_to)
    targets.update(cfg.kt_per_layer)
    return targets


# ==================== LOSS ====================

def kurtosis_loss(model: ModelGraph, cfg: KurtosisConfig, targets: Optional[Dict[str, float]] = None) -> Tensor:
    """(1/L) * sum_i (kurtosis(W_i) - K_T(i))^2 over the regularized layers."""
    targets = resolve_kt(model, cfg) if targets is None else targets
    if not targets:
        raise ShapeError("kurtosis_loss: no regularized layers")
    terms = []
    for layer_id, kt in targets.items():
        k = kurtosis_tensor(model.weight(layer_id), what=f"weights of layer '{layer_id}'")
        diff = k - kt
        terms.append(diff * diff)
    total = terms[0]
    for term in terms[1:]:
        total = total + term
    return total * (1.0 / len(terms))


def kurtosis_grad_analytic(w: ArrayLike, kt: float) -> np.ndarray:
    """
    Closed-form gradient as commonly printed for this regularizer:
    (8 / sigma) * ((w - mu) / sigma)^3 * |kurtosis(w) - K_T|.

    It drops the 1/n factor, holds mu and sigma constant and takes an absolute
    value where the chain rule gives a sign, so it is not what the optimizer uses.
    """
    data = _as_array(w).astype(np.float64)
    _check_spread(data)
    sigma = float(np.sqrt(np.var(data)))
    z = (data - data.mean()) / sigma
    return (8.0 / sigma) * z ** 3 * abs(kurtosis(data) - kt)


class GradientComparison(BaseModel):
    """Agreement between the closed-form and the tape gradient of one tensor."""
    kurtosis: float
    kt: float
    sign_agreement: float
    tail_sign_agreement: float
    cosine: float
    norm_ratio: float


def compare_with_tape(w: ArrayLike, kt: float) -> GradientComparison:
    """
    Compare kurtosis_grad_analytic with the tape gradient of (kurtosis(w) - K_T)^2.

    tail_sign_agreement counts only elements with |z| > sqrt(kurtosis) + 0.25,
    where the cubic term dominates the exact derivative.
    """
    data = _as_array(w).astype(np.float64)
    probe = Tensor(data.copy(), requires_grad=True)
    diff = kurtosis_tensor(probe) - kt
    tape = backward(diff * diff)[probe]
    analytic = kurtosis_grad_analytic(data, kt)

    k = kurtosis(data)
    z = (data - data.mean()) / np.sqrt(np.var(data))
    tail = np.abs(z) > np.sqrt(k) + 0.25
    same = np.sign(tape) == np.sign(analytic)
    norms = np.linalg.norm(tape) * np.linalg.norm(analytic)
    return GradientComparison(
        kurtosis=k,
        kt=kt,
        sign_agreement=float(same.mean()),
        tail_sign_agreement=float(same[tail].mean()) if tail.any() else 1.0,
        cosine=float(np.vdot(tape, analytic) / norms) if norms > 0 else 1.0,
        norm_ratio=float(np.linalg.norm(analytic) / np.linalg.norm(tape)) if np.linalg.norm(tape) > 0 else 0.0,
    )


class LayerKurtosis(BaseModel):
    layer_id: str
    kurtosis: float
    kt: Optional[float] = None
    numel: int

    @property
    def gap(self) -> Optional[float]:
        return None if self.kt is None else abs(self.kurtosis - self.kt)


def kurtosis_report(model: ModelGraph, targets: Optional[Dict[str, float]] = None) -> List[LayerKurtosis]:
    """Kurtosis of every weighted layer, with its K_T when one is assigned."""
    targets = model.kt_targets if targets is None else targets
    rows = []
    for layer in model.weight_layers():
        w = model.weight(layer.id).data
        try:
            value = kurtosis(w)
        except DegenerateDistributionError:
            logger.warning("Layer %s has constant weights; kurtosis reported as NaN", layer.id)
            value = float("nan")
        rows.append(LayerKurtosis(layer_id=layer.id, kurtosis=value, kt=targets.get(layer.id), numel=w.size))
    return rows
