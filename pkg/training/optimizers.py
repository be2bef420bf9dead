"""
First-order optimizers and per-epoch learning-rate schedules.
"""
import math
from abc import ABC, abstractmethod
from typing import Dict, Iterable, List

import numpy as np

from autodiff.tensor import Tensor
from models.base import OptimizerKind, ScheduleKind
from models.config import OptimizerConfig, ScheduleConfig


class Optimizer(ABC):
    """Updates tensors in place from their .grad; tensors without a gradient are skipped."""

    def __init__(self, params: Iterable[Tensor], lr: float):
        self.params: List[Tensor] = list(params)
        self.lr = lr

    def step(self) -> None:
        for index, param in enumerate(self.params):
            if param.grad is None:
                continue
            self._update(index, param, param.grad)

    def zero_grad(self) -> None:
        for param in self.params:
            param.zero_grad()

    @abstractmethod
    def _update(self, index: int, param: Tensor, grad: np.ndarray) -> None:
        pass

    @abstractmethod
    def state(self) -> Dict[str, np.ndarray]:
        """Buffers needed to resume, keyed by name."""
        pass


class SGD(Optimizer):
    """buf = momentum * buf + (g + wd * w); w -= lr * buf"""

    def __init__(self, params: Iterable[Tensor], lr: float, momentum: float = 0.0, weight_decay: float = 0.0):
        super().__init__(params, lr)
        self.momentum = momentum
        self.weight_decay = weight_decay
        self.buffers: Dict[int, np.ndarray] = {}

    def _update(self, index, param, grad):
        d = grad + self.weight_decay * param.data if self.weight_decay else grad
        if self.momentum:
            buf = self.buffers.get(index)
            buf = d.copy() if buf is None else self.momentum * buf + d
            self.buffers[index] = buf
            d = buf
        param.data -= (self.lr * d).astype(param.dtype)

    def state(self):
        return {f"momentum.{i}": buf for i, buf in sorted(self.buffers.items())}


class Adam(Optimizer):
    def __init__(
        self,
        params: Iterable[Tensor],
        lr: float = 1e-3,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
        weight_decay: float = 0.0,
    ):
        super().__init__(params, lr)
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.weight_decay = weight_decay
        self.m: Dict[int, np.ndarray] = {}
        self.v: Dict[int, np.ndarray] = {}
        self.t: Dict[int, int] = {}

    def _update(self, index, param, grad):
        g = grad + self.weight_decay * param.data if self.weight_decay else grad
        m = self.beta1 * self.m.get(index, 0.0) + (1 - self.beta1) * g
        v = self.beta2 * self.v.get(index, 0.0) + (1 - self.beta2) * g * g
        t = self.t.get(index, 0) + 1
        self.m[index], self.v[index], self.t[index] = m, v, t
        m_hat = m / (1 - self.beta1 ** t)
        v_hat = v / (1 - self.beta2 ** t)
        param.data -= (self.lr * m_hat / (np.sqrt(v_hat) + self.eps)).astype(param.dtype)

    def state(self):
        out = {}
        for i in sorted(self.m):
            out[f"adam_m.{i}"] = self.m[i]
            out[f"adam_v.{i}"] = self.v[i]
        return out


def build_optimizer(cfg: OptimizerConfig, params: Iterable[Tensor]) -> Optimizer:
    if cfg.kind is OptimizerKind.SGD:
        return SGD(params, cfg.lr, cfg.momentum, cfg.weight_decay)
    return Adam(params, cfg.lr, cfg.beta1, cfg.beta2, cfg.eps, cfg.weight_decay)


def learning_rate(cfg: ScheduleConfig, base_lr: float, epoch: int, total_epochs: int) -> float:
    """
    Learning rate for a 0-based epoch.

    linear-decay-to-zero: base * (1 - epoch / total)
    cosine: base * (1 + cos(pi * epoch / total)) / 2
    step: base * gamma ** (epoch // step_size)
    """
    total = max(total_epochs, 1)
    progress = min(epoch, total) / total
    if cfg.kind is ScheduleKind.LINEAR:
        return base_lr * (1.0 - progress)
    if cfg.kind is ScheduleKind.COSINE:
        return base_lr * 0.5 * (1.0 + math.cos(math.pi * progress))
    return base_lr * cfg.gamma ** (epoch // cfg.step_size)
