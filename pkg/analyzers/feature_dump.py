"""
Feature-map dumps of one convolution: the full-precision map and the map
produced by the same input convolved with sign(W) (no scale factor).

File layout (little-endian):
    "BDFM" | u16 version | u16 id length | layer id (utf-8)
    | u8 ndim | ndim x u32 shape | fp map (f64) | binary map (f64)
"""
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Tuple, Union

import numpy as np

from analyzers.base_analyzer import BaseAnalyzer, CheckpointLike
from autodiff import ops
from autodiff.tensor import Tensor, no_grad
from binarization import sign
from models.base import ForwardMode, LayerKind
from networks.executor import forward
from training.checkpoint import write_atomic
from utils.errors import ArtifactNotFoundError, FormatError, TopologyError

MAGIC = b"BDFM"
VERSION = 1
_PREFIX = struct.Struct("<4sHH")


@dataclass
class FeatureDump:
    layer_id: str
    fp: np.ndarray
    binary: np.ndarray

    @property
    def shape(self) -> Tuple[int, ...]:
        return tuple(self.fp.shape)

    def to_bytes(self) -> bytes:
        name = self.layer_id.encode("utf-8")
        head = _PREFIX.pack(MAGIC, VERSION, len(name)) + name
        head += struct.pack("<B", self.fp.ndim) + struct.pack(f"<{self.fp.ndim}I", *self.fp.shape)
        return head + np.ascontiguousarray(self.fp, dtype="<f8").tobytes() + np.ascontiguousarray(self.binary, dtype="<f8").tobytes()

    @classmethod
    def from_bytes(cls, raw: bytes, source: str = "<bytes>") -> "FeatureDump":
        if len(raw) < _PREFIX.size:
            raise FormatError(f"{source}: too short for a feature dump", offset=0)
        magic, version, name_len = _PREFIX.unpack_from(raw, 0)
        if magic != MAGIC:
            raise FormatError(f"{source}: bad magic {magic!r}, expected {MAGIC!r}", offset=0)
        if version != VERSION:
            raise FormatError(f"{source}: unsupported dump version {version}", offset=4)
        pos = _PREFIX.size
        layer_id = raw[pos:pos + name_len].decode("utf-8")
        pos += name_len
        if pos >= len(raw):
            raise FormatError(f"{source}: truncated header", offset=pos)
        ndim = raw[pos]
        pos += 1
        if pos + 4 * ndim > len(raw):
            raise FormatError(f"{source}: truncated shape", offset=pos)
        shape = struct.unpack_from(f"<{ndim}I", raw, pos)
        pos += 4 * ndim
        count = int(np.prod(shape))
        if len(raw) != pos + 16 * count:
            raise FormatError(f"{source}: expected {2 * count} values after the header", offset=pos)
        fp = np.frombuffer(raw, dtype="<f8", count=count, offset=pos).astype(np.float64).reshape(shape)
        binary = np.frombuffer(raw, dtype="<f8", count=count, offset=pos + 8 * count).astype(np.float64).reshape(shape)
        return cls(layer_id, fp, binary)


class FeatureDumper(BaseAnalyzer):
    """Computes dumps for one conv layer; its input is taken from a full-precision forward pass."""

    def __init__(self, checkpoint: CheckpointLike, layer_id: str, images: np.ndarray):
        super().__init__(checkpoint)
        layer = self.model.layer(layer_id)
        if layer.kind is not LayerKind.CONV:
            raise TopologyError(f"layer '{layer_id}' is a {layer.kind.value}, feature dumps need a conv2d layer")
        self.layer = layer
        self.images = np.asarray(images, dtype=np.float64)

    def compute(self) -> FeatureDump:
        model = self.model.astype(np.float64)
        p = self.layer.params
        with no_grad():
            _, outputs = forward(model, self.images, ForwardMode.FP, capture=True)
            x = outputs[self.layer.inputs[0]]
            w = model.weight(self.layer.id)
            geometry = dict(stride=p["stride"], pad=p["pad"], truncate=p.get("truncate", False))
            fp = ops.conv2d(x, w, **geometry).data
            binary = ops.conv2d(x, Tensor(sign(w.data)), **geometry).data
        return FeatureDump(self.layer.id, fp, binary)

    def analyze(self, out_dir: Union[str, Path]) -> Path:
        path = Path(out_dir) / f"{self._safe_name(self.layer.id)}.bdfm"
        return save_dump(self.compute(), path)


def save_dump(dump: FeatureDump, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    write_atomic(path, dump.to_bytes())
    return path


def load_dump(path: Union[str, Path]) -> FeatureDump:
    path = Path(path)
    if not path.is_file():
        raise ArtifactNotFoundError(str(path), what="feature dump")
    return FeatureDump.from_bytes(path.read_bytes(), source=str(path))


def dump_features(checkpoint: CheckpointLike, images: np.ndarray, layer_id: str, path: Union[str, Path]) -> FeatureDump:
    dump = FeatureDumper(checkpoint, layer_id, images).compute()
    save_dump(dump, path)
    return dump
