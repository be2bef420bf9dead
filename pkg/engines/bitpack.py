"""
Bit-packed {-1, +1} tensors.

A BitTensor packs the last axis of a +-1 array into unsigned words, one bit per
element, least significant bit first: element k of a row lands in bit k % W of
word k // W (1 = +1, 0 = -1). The last word of a row is zero-padded; the
padding bits never count toward a dot product.
"""
from dataclasses import dataclass
from typing import Tuple, Union

import numpy as np

from autodiff.tensor import Tensor
from engines.kernels import xnor_popcount_gemm
from utils.errors import ShapeError

WORD_DTYPES = {8: np.uint8, 16: np.uint16, 32: np.uint32, 64: np.uint64}


@dataclass
class BitTensor:
    """words has shape shape[:-1] + (n_words,); valid_length == shape[-1]."""
    shape: Tuple[int, ...]
    words: np.ndarray
    word_bits: int = 64

    @property
    def valid_length(self) -> int:
        return int(self.shape[-1])

    @property
    def n_words(self) -> int:
        return int(self.words.shape[-1])

    @property
    def padding_bits(self) -> int:
        return self.n_words * self.word_bits - self.valid_length

    @property
    def nbytes(self) -> int:
        return int(self.words.size * self.word_bits // 8)

    def word_masks(self) -> np.ndarray:
        """Per-word mask of valid bits (all ones except the tail of the last word)."""
        return word_masks(self.valid_length, self.word_bits)


def word_masks(valid_length: int, word_bits: int) -> np.ndarray:
    n_words = -(-valid_length // word_bits)
    masks = np.full(n_words, (1 << word_bits) - 1, dtype=np.uint64)
    tail = valid_length - (n_words - 1) * word_bits
    if n_words:
        masks[-1] = np.uint64((1 << tail) - 1)
    return masks


def pack(x: Union[Tensor, np.ndarray], word_bits: int = 64) -> BitTensor:
    """Pack the last axis of a strictly +-1 array."""
    if word_bits not in WORD_DTYPES:
        raise ValueError(f"word size must be one of {sorted(WORD_DTYPES)}, got {word_bits}")
    data = x.data if isinstance(x, Tensor) else np.asarray(x)
    if data.ndim == 0:
        raise ShapeError("pack needs at least one axis")
    bad = np.flatnonzero((data != 1) & (data != -1))
    if bad.size:
        index = np.unravel_index(int(bad[0]), data.shape)
        raise ValueError(f"pack: element {tuple(int(i) for i in index)} is {data[index]!r}, expected +1 or -1")

    n = data.shape[-1]
    n_words = -(-n // word_bits)
    bits = np.zeros(data.shape[:-1] + (n_words * word_bits,), dtype=np.uint64)
    bits[..., :n] = data > 0
    bits = bits.reshape(data.shape[:-1] + (n_words, word_bits))
    shifts = np.arange(word_bits, dtype=np.uint64)
    words = np.bitwise_or.reduce(bits << shifts, axis=-1)
    return BitTensor(shape=tuple(data.shape), words=words.astype(WORD_DTYPES[word_bits]), word_bits=word_bits)


def unpack(b: BitTensor, dtype=np.float64) -> np.ndarray:
    """Inverse of pack: a +-1 array of the logical shape."""
    shifts = np.arange(b.word_bits, dtype=np.uint64)
    bits = (b.words.astype(np.uint64)[..., None] >> shifts) & np.uint64(1)
    bits = bits.reshape(b.words.shape[:-1] + (b.n_words * b.word_bits,))[..., :b.valid_length]
    return (2.0 * bits - 1.0).astype(dtype)


def xnor_dot(a: BitTensor, b: BitTensor) -> int:
    """Dot product of two packed +-1 vectors: 2 * popcount(XNOR within valid bits) - n."""
    if a.valid_length != b.valid_length:
        raise ShapeError(f"xnor_dot length mismatch: {a.valid_length} vs {b.valid_length}")
    if a.word_bits != b.word_bits:
        raise ShapeError(f"xnor_dot word size mismatch: {a.word_bits} vs {b.word_bits}")
    if len(a.shape) != 1 or len(b.shape) != 1:
        raise ShapeError("xnor_dot takes 1-D bit vectors")
    agree = xnor_popcount_gemm(
        a.words.astype(np.uint64)[None, :], b.words.astype(np.uint64)[None, :], a.word_masks()
    )
    return int(2 * agree[0, 0] - a.valid_length)


def xnor_matmul(a: BitTensor, b: BitTensor) -> np.ndarray:
    """Row-by-row dot products of [M, n] and [F, n] packed matrices -> int64 [M, F]."""
    if a.valid_length != b.valid_length or a.word_bits != b.word_bits:
        raise ShapeError(f"xnor_matmul operands differ: {a.shape}/{a.word_bits} vs {b.shape}/{b.word_bits}")
    agree = xnor_popcount_gemm(
        np.ascontiguousarray(a.words.reshape(-1, a.n_words), dtype=np.uint64),
        np.ascontiguousarray(b.words.reshape(-1, b.n_words), dtype=np.uint64),
        a.word_masks(),
    )
    return 2 * agree - a.valid_length
