from binarization.binarize import (
    ALPHA_FLOOR,
    BinarizedLayerState,
    binary_forward,
    clip_latent,
    scale_factor,
    scale_factors,
    sign,
    sign_ste,
    ste_backward
)

__all__ = [
    "ALPHA_FLOOR",
    "BinarizedLayerState",
    "binary_forward",
    "clip_latent",
    "scale_factor",
    "scale_factors",
    "sign",
    "sign_ste",
    "ste_backward"
]
