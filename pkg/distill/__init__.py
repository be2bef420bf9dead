from distill.losses import (
    WeightDensity,
    bin_centers,
    hard_density,
    kd_loss,
    layer_kl,
    soft_histogram,
    softened_probs,
    wdm_loss,
    weight_density,
    weight_kl
)

__all__ = [
    "WeightDensity",
    "bin_centers",
    "hard_density",
    "kd_loss",
    "layer_kl",
    "soft_histogram",
    "softened_probs",
    "wdm_loss",
    "weight_density",
    "weight_kl"
]
