"""Central finite-difference oracle for reverse-mode gradients."""
from typing import Callable, Dict, Sequence

import numpy as np

from autodiff.tensor import Tensor, backward, no_grad


def numerical_gradient(fn: Callable[..., Tensor], inputs: Sequence[Tensor], index: int, h: float = 1e-5) -> np.ndarray:
    """Central differences of scalar fn(*inputs) with respect to inputs[index]."""
    target = inputs[index]
    target.data = np.ascontiguousarray(target.data)
    grad = np.zeros_like(target.data, dtype=np.float64)
    flat = target.data.reshape(-1)
    out = grad.reshape(-1)
    with no_grad():
        for i in range(flat.size):
            original = flat[i]
            flat[i] = original + h
            plus = fn(*inputs).item()
            flat[i] = original - h
            minus = fn(*inputs).item()
            flat[i] = original
            out[i] = (plus - minus) / (2.0 * h)
    return grad


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """max |a - n| scaled by the largest gradient magnitude seen."""
    scale = max(float(np.max(np.abs(analytic), initial=0.0)), float(np.max(np.abs(numeric), initial=0.0)), 1e-12)
    return float(np.max(np.abs(analytic - numeric), initial=0.0)) / scale


def gradcheck(fn: Callable[..., Tensor], inputs: Sequence[Tensor], h: float = 1e-5) -> Dict[int, float]:
    """
    Compare the tape gradient of scalar fn(*inputs) against central differences.

    Returns the relative error per requires-grad input position.
    """
    for t in inputs:
        t.zero_grad()
    grads = backward(fn(*inputs))
    errors = {}
    for index, t in enumerate(inputs):
        if not t.requires_grad:
            continue
        analytic = grads.get(t, np.zeros_like(t.data))
        errors[index] = relative_error(analytic, numerical_gradient(fn, inputs, index, h))
    return errors
