"""Calculation utilities."""
from typing import Tuple

import numpy as np


def cosine_similarity(a: np.ndarray, b: np.ndarray) -> float:
    """cos(vec(a), vec(b)); 0 when either vector is all zeros."""
    a = np.asarray(a, dtype=np.float64).reshape(-1)
    b = np.asarray(b, dtype=np.float64).reshape(-1)
    norms = np.linalg.norm(a) * np.linalg.norm(b)
    if norms == 0:
        return 0.0
    return float(np.dot(a, b) / norms)


def binarization_cosine(w: np.ndarray) -> float:
    """Cosine between latent weights and their scaled sign projection alpha * sign(W), alpha per filter."""
    w = np.asarray(w, dtype=np.float64)
    alpha = np.abs(w).reshape(w.shape[0], -1).mean(axis=1).reshape((-1,) + (1,) * (w.ndim - 1))
    return cosine_similarity(w, alpha * np.where(w >= 0, 1.0, -1.0))


def sign_flips(a: np.ndarray, b: np.ndarray) -> Tuple[int, int]:
    """(number of elements whose sign projection differs, total elements)."""
    a, b = np.asarray(a), np.asarray(b)
    if a.shape != b.shape:
        raise ValueError(f"cannot compare signs of shapes {a.shape} and {b.shape}")
    return int(np.count_nonzero((a >= 0) != (b >= 0))), int(a.size)


def topk_correct(logits: np.ndarray, labels: np.ndarray, k: int = 1) -> int:
    """Rows whose label is among the k largest logits (ties resolved by index order)."""
    logits = np.asarray(logits)
    k = min(k, logits.shape[1])
    top = np.argsort(-logits, axis=1, kind="stable")[:, :k]
    return int((top == np.asarray(labels)[:, None]).any(axis=1).sum())


def topk_accuracy(logits: np.ndarray, labels: np.ndarray, k: int = 1) -> float:
    """Top-k accuracy in percent."""
    n = len(labels)
    if n == 0:
        return 0.0
    return 100.0 * topk_correct(logits, labels, k) / n
