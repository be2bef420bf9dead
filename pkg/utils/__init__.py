"""Utility modules for the bdbnn toolkit."""
from utils.formatters import format_bytes, format_duration_ns, format_loss_terms, format_pct
from utils.calculations import (
    binarization_cosine,
    cosine_similarity,
    sign_flips,
    topk_accuracy,
    topk_correct
)

__all__ = [
    "format_bytes",
    "format_duration_ns",
    "format_loss_terms",
    "format_pct",
    "binarization_cosine",
    "cosine_similarity",
    "sign_flips",
    "topk_accuracy",
    "topk_correct"
]
