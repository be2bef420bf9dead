"""
Standalone distribution shaping: drive one tensor toward a target kurtosis with
the kurtosis loss alone and inspect the resulting histogram.
"""
import logging
from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from autodiff.tensor import Tensor, backward
from regularizers.kurtosis import kurtosis, kurtosis_tensor

logger = logging.getLogger(__name__)


@dataclass
class ShapingResult:
    weights: np.ndarray
    kurtosis_trace: List[float]
    final_kurtosis: float
    steps: int


def shape_distribution(
    w: np.ndarray,
    kt: float = 1.0,
    steps: int = 2000,
    lr: float = 0.01,
    tolerance: Optional[float] = None,
    record_every: int = 50,
) -> ShapingResult:
    """
    Minimize (kurtosis(w) - K_T)^2 over the elements of w with Adam.

    Stops early once |kurtosis - K_T| <= tolerance when a tolerance is given.
    """
    from training.optimizers import Adam

    param = Tensor(np.array(w, dtype=np.float64, copy=True), requires_grad=True)
    optimizer = Adam([param], lr=lr)
    trace = [kurtosis(param.data)]
    step = 0
    for step in range(1, steps + 1):
        diff = kurtosis_tensor(param) - kt
        backward(diff * diff)
        optimizer.step()
        if tolerance is not None and abs(kurtosis(param.data) - kt) <= tolerance:
            break
        if step % record_every == 0:
            trace.append(kurtosis(param.data))
    final = kurtosis(param.data)
    trace.append(final)
    logger.info("Shaped %d weights toward K_T=%g: kurtosis %.4f -> %.4f in %d steps",
                param.size, kt, trace[0], final, step)
    return ShapingResult(weights=param.data.copy(), kurtosis_trace=trace, final_kurtosis=final, steps=step)


def is_bimodal(counts: np.ndarray, valley_ratio: float = 0.6) -> bool:
    """
    Two local maxima, one on each side of the center bin, with a minimum between
    them no higher than valley_ratio times the smaller peak.
    """
    counts = np.asarray(counts, dtype=np.float64)
    if counts.size < 3:
        return False
    half = counts.size // 2
    left = int(np.argmax(counts[:half]))
    right = half + int(np.argmax(counts[half:]))
    if right - left < 2:
        return False
    peak = min(counts[left], counts[right])
    if peak <= 0:
        return False
    return bool(counts[left + 1:right].min() <= valley_ratio * peak)
