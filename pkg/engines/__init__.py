"""
Binary inference engine - bit packing, XNOR-popcount kernels, packed model export and benchmarks.
"""
from engines.bitpack import BitTensor, pack, unpack, word_masks, xnor_dot, xnor_matmul
from engines.binary_conv import PackedConv, binary_conv2d, pack_conv
from engines.packed_model import PackedModel, export_packed, load_packed_model
from engines.bench import DEFAULT_SUITE, SMOKE_SUITE, BenchCase, bench, bench_case

__all__ = [
    "BitTensor",
    "pack",
    "unpack",
    "word_masks",
    "xnor_dot",
    "xnor_matmul",
    "PackedConv",
    "binary_conv2d",
    "pack_conv",
    "PackedModel",
    "export_packed",
    "load_packed_model",
    "BenchCase",
    "DEFAULT_SUITE",
    "SMOKE_SUITE",
    "bench",
    "bench_case"
]
