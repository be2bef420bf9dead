"""
Byte-level parsers for the CIFAR-10 binary batch and MNIST IDX formats.

Both report malformed input with the byte offset where parsing failed.
"""
import struct
from typing import Tuple

import numpy as np

from utils.errors import FormatError

CIFAR_LABEL_BYTES = 1
CIFAR_PIXELS = 3 * 32 * 32
CIFAR_RECORD = CIFAR_LABEL_BYTES + CIFAR_PIXELS  # 3073
CIFAR_CLASSES = 10

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801
IDX_UBYTE = 0x08


def parse_cifar_records(raw: bytes, source: str = "<bytes>") -> Tuple[np.ndarray, np.ndarray]:
    """
    Split a CIFAR-10 binary batch into pixels [N, 3, 32, 32] (uint8) and labels.

    Each record is one label byte followed by the R, G and B planes (1024
    bytes each, row-major).
    """
    if len(raw) % CIFAR_RECORD:
        complete = len(raw) // CIFAR_RECORD
        raise FormatError(
            f"{source}: truncated record {complete} ({len(raw) - complete * CIFAR_RECORD} of {CIFAR_RECORD} bytes)",
            offset=complete * CIFAR_RECORD,
        )
    records = np.frombuffer(raw, dtype=np.uint8).reshape(-1, CIFAR_RECORD)
    labels = records[:, 0].astype(np.int64)
    bad = np.flatnonzero(labels >= CIFAR_CLASSES)
    if bad.size:
        index = int(bad[0])
        raise FormatError(f"{source}: label byte {labels[index]} > {CIFAR_CLASSES - 1} in record {index}",
                          offset=index * CIFAR_RECORD)
    pixels = records[:, CIFAR_LABEL_BYTES:].reshape(-1, 3, 32, 32)
    return pixels, labels


def parse_idx(raw: bytes, expected_magic: int, source: str = "<bytes>") -> np.ndarray:
    """
    Decode an unsigned-byte IDX file: big-endian u32 magic (0x0000 08 <ndim>),
    ndim big-endian u32 extents, then the data.
    """
    if len(raw) < 4:
        raise FormatError(f"{source}: file too short for an IDX header", offset=0)
    (magic,) = struct.unpack_from(">I", raw, 0)
    if magic != expected_magic:
        raise FormatError(f"{source}: bad IDX magic 0x{magic:08x}, expected 0x{expected_magic:08x}", offset=0)
    if (magic >> 8) & 0xFF != IDX_UBYTE:
        raise FormatError(f"{source}: only unsigned-byte IDX data is supported", offset=2)
    ndim = magic & 0xFF
    header = 4 + 4 * ndim
    if len(raw) < header:
        raise FormatError(f"{source}: truncated IDX dimensions", offset=len(raw))
    dims = struct.unpack_from(f">{ndim}I", raw, 4)
    expected = int(np.prod(dims)) if dims else 0
    available = len(raw) - header
    if available != expected:
        raise FormatError(
            f"{source}: IDX dims {dims} need {expected} data bytes, found {available}",
            offset=header + min(available, expected),
        )
    return np.frombuffer(raw, dtype=np.uint8, offset=header).reshape(dims)


def check_pairing(images: np.ndarray, labels: np.ndarray, source: str) -> None:
    if images.shape[0] != labels.shape[0]:
        raise FormatError(f"{source}: {images.shape[0]} images but {labels.shape[0]} labels")
