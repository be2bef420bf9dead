from regularizers.kurtosis import (
    GradientComparison,
    LayerKurtosis,
    compare_with_tape,
    kt_schedule,
    kurtosis,
    kurtosis_grad_analytic,
    kurtosis_loss,
    kurtosis_report,
    kurtosis_tensor,
    resolve_kt
)
from regularizers.shaping import ShapingResult, is_bimodal, shape_distribution

__all__ = [
    "GradientComparison",
    "LayerKurtosis",
    "compare_with_tape",
    "kt_schedule",
    "kurtosis",
    "kurtosis_grad_analytic",
    "kurtosis_loss",
    "kurtosis_report",
    "kurtosis_tensor",
    "resolve_kt",
    "ShapingResult",
    "is_bimodal",
    "shape_distribution"
]
