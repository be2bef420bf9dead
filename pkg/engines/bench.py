"""
Micro-benchmark: XNOR-popcount convolution vs a direct-loop float convolution.

One "op" is a full convolution call over the case's batch. The binary timing
includes packing the input windows; filters are packed once, as at export.
"""
import logging
import time
from pathlib import Path
from typing import Callable, Iterable, List, Optional, Union

import numpy as np
import pandas as pd
from pydantic import BaseModel, Field

from autodiff.ops import conv_output_size
from binarization import scale_factors, sign
from engines.binary_conv import binary_conv2d, pack_conv
from engines.kernels import float_conv2d_naive
from models.analysis_output import BENCH_COLUMNS, BenchRow
from utils.formatters import format_duration_ns

logger = logging.getLogger(__name__)


class BenchCase(BaseModel):
    name: str
    batch: int = Field(1, ge=1)
    channels: int = Field(..., ge=1)
    filters: int = Field(..., ge=1)
    size: int = Field(..., ge=1)
    kernel: int = Field(3, ge=1)
    stride: int = Field(1, ge=1)
    pad: int = Field(1, ge=0)


DEFAULT_SUITE = [
    BenchCase(name="c64-3x3", channels=64, filters=64, size=16),
    BenchCase(name="c128-3x3", channels=128, filters=128, size=8),
    BenchCase(name="c256-3x3", channels=256, filters=256, size=8),
    BenchCase(name="c256-1x1", channels=256, filters=256, size=8, kernel=1, pad=0),
]

SMOKE_SUITE = [
    BenchCase(name="c16-3x3", channels=16, filters=8, size=6),
    BenchCase(name="c8-1x1", channels=8, filters=4, size=4, kernel=1, pad=0),
]


def _time_ns(fn: Callable[[], object], iterations: int, warmup: int) -> float:
    for _ in range(warmup):
        fn()
    start = time.perf_counter_ns()
    for _ in range(iterations):
        fn()
    return (time.perf_counter_ns() - start) / iterations


def bench_case(case: BenchCase, iterations: int = 5, warmup: int = 1, word_bits: int = 64, seed: int = 0) -> BenchRow:
    rng = np.random.default_rng(seed)
    x = sign(rng.standard_normal((case.batch, case.channels, case.size, case.size)))
    w = rng.standard_normal((case.filters, case.channels, case.kernel, case.kernel))
    layer = pack_conv(case.name, sign(w), scale_factors(w), case.stride, case.pad, word_bits=word_bits)

    ho = conv_output_size(case.size, case.kernel, case.stride, case.pad, truncate=True)
    x32 = np.pad(x, ((0, 0), (0, 0), (case.pad, case.pad), (case.pad, case.pad))).astype(np.float32)
    w32 = w.astype(np.float32)

    binary_ns = _time_ns(lambda: binary_conv2d(x, layer), iterations, warmup)
    float_ns = _time_ns(lambda: float_conv2d_naive(x32, w32, case.stride, ho, ho), iterations, warmup)
    row = BenchRow(
        suite=case.name,
        ns_per_op_binary=binary_ns,
        ns_per_op_float=float_ns,
        speedup=float_ns / binary_ns if binary_ns else 0.0,
        bytes_binary=layer.packed_bytes + 4 * case.filters,
        bytes_float=layer.float_bytes,
    )
    logger.info("%s: binary %s, float %s, speedup %.1fx", case.name, format_duration_ns(binary_ns),
                format_duration_ns(float_ns), row.speedup)
    return row


def bench(
    suite: Optional[Iterable[BenchCase]] = None,
    iterations: int = 5,
    warmup: int = 1,
    word_bits: int = 64,
    seed: int = 0,
    path: Optional[Union[str, Path]] = None,
) -> pd.DataFrame:
    """Run every case; returns (and optionally writes as CSV) one row per case."""
    cases: List[BenchCase] = list(DEFAULT_SUITE if suite is None else suite)
    rows = [bench_case(case, iterations, warmup, word_bits, seed).model_dump() for case in cases]
    frame = pd.DataFrame(rows, columns=BENCH_COLUMNS)
    if path is not None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        frame.to_csv(path, index=False)
    return frame
