"""
Sign projection, per-filter scale factors and straight-through estimators.
"""
import logging
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from autodiff import ops
from autodiff.tensor import Tensor, make_op
from models.base import BinarizeMode, SteKind
from utils.errors import ShapeError

logger = logging.getLogger(__name__)

# Floor applied to the scale of an all-zero filter
ALPHA_FLOOR = 1e-8


def sign(x: Union[Tensor, np.ndarray]) -> Union[Tensor, np.ndarray]:
    """+1 where x >= 0, -1 elsewhere (zero maps to +1). Not differentiable; see sign_ste."""
    if isinstance(x, Tensor):
        return Tensor(sign(x.data))
    x = np.asarray(x)
    return np.where(x >= 0, 1.0, -1.0).astype(x.dtype if np.issubdtype(x.dtype, np.floating) else np.float64)


def scale_factor(w_filter: Union[Tensor, np.ndarray]) -> float:
    """
    Least-squares scale of one filter: argmin_a ||w - a*sign(w)||^2 = mean(|w|).
    """
    data = w_filter.data if isinstance(w_filter, Tensor) else np.asarray(w_filter)
    if data.size == 0:
        raise ShapeError("scale_factor of an empty filter")
    alpha = float(np.mean(np.abs(data)))
    if alpha <= 0.0:
        logger.warning("All-zero filter: scale factor clamped to %g", ALPHA_FLOOR)
        return ALPHA_FLOOR
    return alpha


def scale_factors(w: np.ndarray) -> np.ndarray:
    """One scale per output filter (axis 0) of a weight array."""
    w = np.asarray(w)
    alpha = np.abs(w).reshape(w.shape[0], -1).mean(axis=1)
    degenerate = alpha <= 0.0
    if np.any(degenerate):
        logger.warning("%d all-zero filter(s): scale factor clamped to %g", int(degenerate.sum()), ALPHA_FLOOR)
        alpha = np.where(degenerate, ALPHA_FLOOR, alpha)
    return alpha.astype(w.dtype)


def ste_backward(kind: Union[SteKind, str], x: np.ndarray, upstream: np.ndarray) -> np.ndarray:
    """
    Gradient of sign(x) under a straight-through estimator.

    clipped-ste: pass upstream where |x| <= 1.
    polynomial: scale by the derivative of the piecewise quadratic approximation,
    2 + 2x on [-1, 0], 2 - 2x on [0, 1], 0 outside.
    """
    kind = SteKind(kind)
    magnitude = np.abs(x)
    inside = magnitude <= 1.0
    if kind is SteKind.CLIPPED:
        return upstream * inside
    return upstream * np.where(inside, 2.0 - 2.0 * magnitude, 0.0)


def sign_ste(x: Tensor, kind: Union[SteKind, str] = SteKind.CLIPPED) -> Tensor:
    """sign() in the forward pass, straight-through estimate in the backward pass."""
    kind = SteKind(kind)
    return make_op(f"sign[{kind.value}]", sign(x.data), (x,), lambda g: (ste_backward(kind, x.data, g),))


def clip_latent(weights: Tensor, bound: float = 1.5) -> None:
    """Keep latent weights inside [-bound, bound] so the STE clip region stays meaningful."""
    np.clip(weights.data, -bound, bound, out=weights.data)


@dataclass
class BinarizedLayerState:
    """
    Latent weights of one convolution plus their derived sign weights and scales.

    bin_w and alpha are views recomputed by refresh(); latent_w is never mutated
    by binarization.
    """
    latent_w: Tensor
    mode: BinarizeMode = BinarizeMode.WEIGHTS_AND_ACTIVATIONS
    weight_ste: SteKind = SteKind.CLIPPED
    activation_ste: SteKind = SteKind.CLIPPED
    bin_w: np.ndarray = field(init=False)
    alpha: np.ndarray = field(init=False)

    def __post_init__(self):
        self.mode = BinarizeMode(self.mode)
        self.refresh()

    def refresh(self) -> None:
        self.bin_w = sign(self.latent_w.data)
        self.alpha = scale_factors(self.latent_w.data)

    def alpha_view(self, ndim: int = 4) -> np.ndarray:
        return self.alpha.reshape((1, -1) + (1,) * (ndim - 2))


def binary_forward(
    layer: BinarizedLayerState,
    a: Tensor,
    stride: int = 1,
    pad: int = 0,
    pad_value: Optional[float] = None,
    truncate: bool = False,
) -> Tensor:
    """
    Convolution under the layer's binarization mode.

    Binarized activations pad with -1 (the sign domain has no zero) unless
    pad_value is given; the result is conv(B_a, B_w) * alpha per filter.
    """
    mode = layer.mode
    if mode is BinarizeMode.OFF:
        return ops.conv2d(a, layer.latent_w, stride=stride, pad=pad, truncate=truncate)

    layer.refresh()
    if mode.binarizes_activations:
        a = sign_ste(a, layer.activation_ste)
        border = -1.0 if pad_value is None else pad_value
    else:
        border = 0.0 if pad_value is None else pad_value

    if not mode.binarizes_weights:
        return ops.conv2d(a, layer.latent_w, stride=stride, pad=pad, pad_value=border, truncate=truncate)

    w = sign_ste(layer.latent_w, layer.weight_ste)
    z = ops.conv2d(a, w, stride=stride, pad=pad, pad_value=border, truncate=truncate)
    return z * Tensor(layer.alpha_view().astype(z.dtype))
