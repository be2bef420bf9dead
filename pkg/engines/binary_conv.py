"""
XNOR-popcount convolution over packed filters.

Filters are packed per output channel over one flattened receptive field; the
input windows are gathered the same way and packed per output pixel, which
turns the convolution into a popcount GEMM. The border is -1, the same
constant the training-time binary path pads with, so the integer results
equal conv2d over the +-1 tensors exactly.
"""
from dataclasses import dataclass
from typing import Tuple, Union

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from autodiff.ops import conv_output_size
from autodiff.tensor import Tensor
from engines.bitpack import BitTensor, pack, unpack, xnor_matmul
from utils.errors import ShapeError

# Orders in which a receptive field is flattened before packing
LAYOUTS = ("hwc", "chw")


@dataclass
class PackedConv:
    """A binarized convolution ready for inference."""
    id: str
    weights: BitTensor
    alpha: np.ndarray
    filter_shape: Tuple[int, int, int, int]
    stride: int = 1
    pad: int = 0
    truncate: bool = False
    layout: str = "hwc"

    @property
    def word_bits(self) -> int:
        return self.weights.word_bits

    @property
    def packed_bytes(self) -> int:
        return self.weights.nbytes

    @property
    def float_bytes(self) -> int:
        return int(np.prod(self.filter_shape)) * 4


def _flatten_field(w: np.ndarray, layout: str) -> np.ndarray:
    """[F, C, kh, kw] -> [F, C*kh*kw] in the given layout."""
    if layout not in LAYOUTS:
        raise ValueError(f"unknown packing layout '{layout}', expected one of {LAYOUTS}")
    if layout == "hwc":
        w = w.transpose(0, 2, 3, 1)
    return w.reshape(w.shape[0], -1)


def pack_conv(
    layer_id: str,
    sign_w: np.ndarray,
    alpha: np.ndarray,
    stride: int = 1,
    pad: int = 0,
    truncate: bool = False,
    word_bits: int = 64,
    layout: str = "hwc",
) -> PackedConv:
    sign_w = np.asarray(sign_w)
    if sign_w.ndim != 4:
        raise ShapeError(f"conv filters must be 4-D, got {sign_w.shape}")
    alpha = np.asarray(alpha, dtype=np.float64).reshape(-1)
    if alpha.shape[0] != sign_w.shape[0]:
        raise ShapeError(f"{alpha.shape[0]} scale factors for {sign_w.shape[0]} filters")
    words = pack(_flatten_field(sign_w, layout), word_bits)
    return PackedConv(layer_id, words, alpha, tuple(int(s) for s in sign_w.shape), stride, pad, truncate, layout)


def binary_conv2d(
    a: Union[BitTensor, Tensor, np.ndarray],
    layer: PackedConv,
    stride: int = None,
    pad: int = None,
    scale: bool = True,
) -> np.ndarray:
    """
    Convolve +-1 activations [N, C, H, W] with a packed layer.

    With scale=False the raw integer dot products are returned; otherwise they
    are multiplied by alpha per filter.
    """
    stride = layer.stride if stride is None else stride
    pad = layer.pad if pad is None else pad
    if isinstance(a, BitTensor):
        data = unpack(a)
    else:
        data = a.data if isinstance(a, Tensor) else np.asarray(a)
    if data.ndim != 4:
        raise ShapeError(f"binary_conv2d needs [N, C, H, W] activations, got {data.shape}")

    f, c, kh, kw = layer.filter_shape
    n, ca, h, w = data.shape
    if ca != c:
        raise ShapeError(f"binary_conv2d channel mismatch: input {ca}, filters {c}")
    ho = conv_output_size(h, kh, stride, pad, layer.truncate)
    wo = conv_output_size(w, kw, stride, pad, layer.truncate)

    if pad:
        data = np.pad(data, ((0, 0), (0, 0), (pad, pad), (pad, pad)), constant_values=-1.0)
    windows = sliding_window_view(data, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride][:, :, :ho, :wo]
    # [N, C, ho, wo, kh, kw] -> [N, ho, wo, field]
    if layer.layout == "hwc":
        fields = windows.transpose(0, 2, 3, 4, 5, 1)
    else:
        fields = windows.transpose(0, 2, 3, 1, 4, 5)
    fields = np.ascontiguousarray(fields).reshape(n * ho * wo, c * kh * kw)

    dots = xnor_matmul(pack(fields, layer.word_bits), layer.weights)
    out = dots.reshape(n, ho, wo, f).transpose(0, 3, 1, 2)
    if not scale:
        return np.ascontiguousarray(out)
    return out * layer.alpha.reshape(1, -1, 1, 1)
