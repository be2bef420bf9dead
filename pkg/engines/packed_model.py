"""
Deployment export of a trained network and its inference runner.

Binarized convolutions are stored as packed sign bits plus one scale per
filter; batchnorm layers are folded into a per-channel affine at export time.
Everything else keeps full-precision tensors. The byte layout is documented in
docs/FORMATS.md.
"""
import json
import logging
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Union

import numpy as np

from autodiff import ops
from autodiff.tensor import Tensor, no_grad
from binarization import scale_factors, sign
from engines.binary_conv import LAYOUTS, PackedConv, binary_conv2d, pack_conv
from engines.bitpack import WORD_DTYPES, BitTensor
from models.base import ActivationKind, LayerKind, PoolKind
from models.graph import INPUT, LayerSpec
from networks.graph import ModelGraph
from training.checkpoint import Checkpoint, write_atomic
from utils.errors import ArtifactNotFoundError, FormatError, ShapeError

logger = logging.getLogger(__name__)

MAGIC = b"BDBN"
VERSION = 1
_PREFIX = struct.Struct("<4sHI")
_U8 = struct.Struct("<B")
_U16 = struct.Struct("<H")
_U32 = struct.Struct("<I")

# Record kinds
BINARY_CONV, FLOAT_CONV, DENSE, AFFINE, SLOPE = range(5)
_FLOAT_CODES = {0: "<f4", 1: "<f8"}
_FLOAT_NAMES = {"float32": 0, "float64": 1}


@dataclass
class FloatConv:
    id: str
    weight: np.ndarray


@dataclass
class Dense:
    id: str
    weight: np.ndarray
    bias: np.ndarray


@dataclass
class Affine:
    """Folded batchnorm: y = x * scale + shift per channel."""
    id: str
    scale: np.ndarray
    shift: np.ndarray


@dataclass
class Slope:
    id: str
    values: np.ndarray


@dataclass
class LayerMemory:
    layer_id: str
    kind: str
    bytes_packed: int
    bytes_float32: int

    @property
    def ratio(self) -> float:
        return self.bytes_float32 / self.bytes_packed if self.bytes_packed else 0.0


@dataclass
class PackedModel:
    """Inference-only network: packed binarized convolutions plus float tensors for the rest."""
    descriptor: Dict[str, Any]
    records: Dict[str, Any]
    word_bits: int = 64
    layout: str = "hwc"
    float_dtype: str = "float64"
    layers: List[LayerSpec] = field(init=False)

    def __post_init__(self):
        self.layers = [LayerSpec.model_validate(item) for item in self.descriptor["layers"]]

    @property
    def input_shape(self):
        return tuple(self.descriptor["input_shape"])

    @property
    def num_classes(self) -> int:
        return int(self.descriptor["num_classes"])

    def predict(self, images: np.ndarray) -> np.ndarray:
        """Logits [N, num_classes]; equals forward(mode=full-binary) of the exported model."""
        x = np.asarray(images, dtype=np.float64)
        if x.ndim != len(self.input_shape) + 1 or tuple(x.shape[1:]) != self.input_shape:
            raise ShapeError(f"input {x.shape} does not match model input [N, {', '.join(map(str, self.input_shape))}]")
        outputs = {INPUT: x}
        with no_grad():
            for layer in self.layers:
                outputs[layer.id] = self._run(layer, [outputs[i] for i in layer.inputs])
        return outputs[self.layers[-1].id]

    def _run(self, layer: LayerSpec, inputs: List[np.ndarray]) -> np.ndarray:
        p = layer.params
        x = inputs[0]
        record = self.records.get(layer.id)

        if layer.kind is LayerKind.CONV:
            if isinstance(record, PackedConv):
                return binary_conv2d(sign(x), record)
            w = Tensor(record.weight.astype(np.float64))
            return ops.conv2d(Tensor(x), w, stride=p["stride"], pad=p["pad"], truncate=p.get("truncate", False)).data
        if layer.kind is LayerKind.FC:
            return x @ record.weight.astype(np.float64).T + record.bias
        if layer.kind is LayerKind.BATCHNORM:
            view = (1, -1, 1, 1)
            return x * record.scale.reshape(view) + record.shift.reshape(view)
        if layer.kind is LayerKind.ACTIVATION:
            fn = ActivationKind(p["fn"])
            if fn is ActivationKind.RELU:
                return np.maximum(x, 0.0)
            if fn is ActivationKind.HARDTANH:
                return np.clip(x, -1.0, 1.0)
            a = record.values.reshape((1, -1) + (1,) * (x.ndim - 2))
            return np.where(x > 0, x, a * x)
        if layer.kind is LayerKind.ADD:
            return np.sum(inputs, axis=0)
        if layer.kind is LayerKind.POOL:
            if PoolKind(p["fn"]) is PoolKind.GLOBAL_AVG:
                return x.mean(axis=(2, 3))
            return ops.max_pool2d(Tensor(x)).data
        return x.reshape(x.shape[0], -1)

    def memory_report(self) -> List[LayerMemory]:
        """Weight storage of every binarized layer: packed bits plus scales vs float32 filters."""
        rows = []
        for record in self.records.values():
            if isinstance(record, PackedConv):
                scale_bytes = np.dtype(self.float_dtype).itemsize * len(record.alpha)
                rows.append(LayerMemory(record.id, "binary-conv", record.packed_bytes + scale_bytes, record.float_bytes))
        return rows

    # ==================== CODEC ====================

    def to_bytes(self) -> bytes:
        header = {"model": self.descriptor, "word_bits": self.word_bits, "layout": self.layout, "float_dtype": self.float_dtype}
        encoded = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
        parts = [_PREFIX.pack(MAGIC, VERSION, len(encoded)), encoded, _U32.pack(len(self.records))]
        for record in self.records.values():
            parts.append(self._encode_record(record))
        return b"".join(parts)

    def _float_block(self, values: np.ndarray) -> bytes:
        code = _FLOAT_NAMES[self.float_dtype]
        raw = np.ascontiguousarray(values, dtype=_FLOAT_CODES[code]).tobytes()
        return _U8.pack(code) + _U32.pack(int(np.size(values))) + raw

    def _encode_record(self, record) -> bytes:
        if isinstance(record, PackedConv):
            kind, shape = BINARY_CONV, record.filter_shape
            words = record.weights.words.astype(np.dtype(WORD_DTYPES[record.word_bits]).newbyteorder("<"))
            payload = (
                _U8.pack(record.word_bits)
                + _U32.pack(record.weights.valid_length)
                + _U32.pack(words.size)
                + words.tobytes()
                + self._float_block(record.alpha)
            )
        elif isinstance(record, FloatConv):
            kind, shape = FLOAT_CONV, record.weight.shape
            payload = self._float_block(record.weight)
        elif isinstance(record, Dense):
            kind, shape = DENSE, record.weight.shape
            payload = self._float_block(record.weight) + self._float_block(record.bias)
        elif isinstance(record, Affine):
            kind, shape = AFFINE, record.scale.shape
            payload = self._float_block(record.scale) + self._float_block(record.shift)
        else:
            kind, shape = SLOPE, record.values.shape
            payload = self._float_block(record.values)
        name = record.id.encode("utf-8")
        head = _U16.pack(len(name)) + name + _U8.pack(kind) + _U8.pack(len(shape))
        head += b"".join(_U32.pack(int(s)) for s in shape)
        return head + payload

    @classmethod
    def from_bytes(cls, raw: bytes, source: str = "<bytes>") -> "PackedModel":
        reader = _Reader(raw, source)
        magic, version, length = reader.unpack(_PREFIX)
        if magic != MAGIC:
            raise FormatError(f"{source}: bad magic {magic!r}, expected {MAGIC!r}", offset=0)
        if version != VERSION:
            raise FormatError(f"{source}: unsupported export version {version}", offset=4)
        start = reader.pos
        try:
            header = json.loads(reader.take(length).decode("utf-8"))
            descriptor = header["model"]
            word_bits, layout, float_dtype = header["word_bits"], header["layout"], header["float_dtype"]
        except (UnicodeDecodeError, json.JSONDecodeError, KeyError, TypeError) as exc:
            raise FormatError(f"{source}: unreadable descriptor: {exc}", offset=start) from exc
        params = {layer["id"]: layer.get("params", {}) for layer in descriptor.get("layers", [])}

        (count,) = reader.unpack(_U32)
        records: Dict[str, Any] = {}
        for _ in range(count):
            offset = reader.pos
            (name_len,) = reader.unpack(_U16)
            layer_id = reader.take(name_len).decode("utf-8")
            kind, ndim = reader.unpack(_U8)[0], reader.unpack(_U8)[0]
            shape = tuple(reader.unpack(_U32)[0] for _ in range(ndim))
            if layer_id not in params:
                raise FormatError(f"{source}: record '{layer_id}' is not in the architecture", offset=offset)
            if kind == BINARY_CONV:
                (bits,) = reader.unpack(_U8)
                if bits not in WORD_DTYPES:
                    raise FormatError(f"{source}: word size {bits} in '{layer_id}'", offset=reader.pos - 1)
                (valid,) = reader.unpack(_U32)
                (n_words,) = reader.unpack(_U32)
                wire = np.dtype(WORD_DTYPES[bits]).newbyteorder("<")
                words = np.frombuffer(reader.take(n_words * wire.itemsize), dtype=wire).astype(WORD_DTYPES[bits])
                alpha = reader.float_block()
                rows = shape[0] if shape else 0
                if rows == 0 or n_words % rows or valid != int(np.prod(shape[1:])):
                    raise FormatError(f"{source}: packed words of '{layer_id}' do not match shape {shape}", offset=offset)
                p = params[layer_id]
                bit_tensor = BitTensor((rows, valid), words.reshape(rows, -1), bits)
                records[layer_id] = PackedConv(
                    layer_id, bit_tensor, alpha.astype(np.float64), shape,
                    p.get("stride", 1), p.get("pad", 0), p.get("truncate", False), layout,
                )
            elif kind == FLOAT_CONV:
                records[layer_id] = FloatConv(layer_id, reader.float_block(shape))
            elif kind == DENSE:
                records[layer_id] = Dense(layer_id, reader.float_block(shape), reader.float_block())
            elif kind == AFFINE:
                records[layer_id] = Affine(layer_id, reader.float_block(shape), reader.float_block(shape))
            elif kind == SLOPE:
                records[layer_id] = Slope(layer_id, reader.float_block(shape))
            else:
                raise FormatError(f"{source}: unknown record kind {kind}", offset=offset)
        if reader.pos != len(raw):
            raise FormatError(f"{source}: {len(raw) - reader.pos} trailing bytes", offset=reader.pos)
        try:
            return cls(descriptor, records, word_bits, layout, float_dtype)
        except (KeyError, ValueError) as exc:
            raise FormatError(f"{source}: invalid architecture: {exc}", offset=start) from exc

    def save(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        write_atomic(path, self.to_bytes())
        return path


class _Reader:
    def __init__(self, raw: bytes, source: str):
        self.raw = raw
        self.source = source
        self.pos = 0

    def take(self, count: int) -> bytes:
        end = self.pos + count
        if end > len(self.raw):
            raise FormatError(f"{self.source}: truncated export", offset=self.pos)
        chunk = self.raw[self.pos:end]
        self.pos = end
        return chunk

    def unpack(self, layout: struct.Struct) -> tuple:
        return layout.unpack(self.take(layout.size))

    def float_block(self, shape=None) -> np.ndarray:
        offset = self.pos
        code, count = self.unpack(_U8)[0], self.unpack(_U32)[0]
        if code not in _FLOAT_CODES:
            raise FormatError(f"{self.source}: unknown float code {code}", offset=offset)
        wire = np.dtype(_FLOAT_CODES[code])
        values = np.frombuffer(self.take(count * wire.itemsize), dtype=wire).astype(np.float64)
        if shape is not None:
            if int(np.prod(shape)) != count:
                raise FormatError(f"{self.source}: {count} values for shape {shape}", offset=offset)
            values = values.reshape(shape)
        return values


def export_packed(
    model: Union[ModelGraph, Checkpoint],
    word_bits: int = 64,
    layout: str = "hwc",
    float_dtype: str = "float64",
) -> PackedModel:
    """Freeze a network for binary inference (every binarize-flagged conv is packed)."""
    if isinstance(model, Checkpoint):
        model = model.to_model()
    if word_bits not in WORD_DTYPES:
        raise ValueError(f"word size must be one of {sorted(WORD_DTYPES)}, got {word_bits}")
    if layout not in LAYOUTS:
        raise ValueError(f"unknown packing layout '{layout}'")
    if float_dtype not in _FLOAT_NAMES:
        raise ValueError(f"float_dtype must be one of {sorted(_FLOAT_NAMES)}")

    def stored(values: np.ndarray) -> np.ndarray:
        return np.asarray(values).astype(float_dtype).astype(np.float64)

    records: Dict[str, Any] = {}
    for layer in model.layers:
        p = layer.params
        if layer.kind is LayerKind.CONV:
            w = model.weight(layer.id).data.astype(np.float64)
            if layer.binarize:
                records[layer.id] = pack_conv(
                    layer.id, sign(w), stored(scale_factors(w)), p["stride"], p["pad"],
                    p.get("truncate", False), word_bits, layout,
                )
            else:
                records[layer.id] = FloatConv(layer.id, stored(w))
        elif layer.kind is LayerKind.FC:
            records[layer.id] = Dense(
                layer.id, stored(model.weight(layer.id).data), stored(model.params[f"{layer.id}.bias"].data),
            )
        elif layer.kind is LayerKind.BATCHNORM:
            gamma = model.params[f"{layer.id}.gamma"].data.astype(np.float64)
            beta = model.params[f"{layer.id}.beta"].data.astype(np.float64)
            mean = model.buffers[f"{layer.id}.running_mean"].astype(np.float64)
            var = model.buffers[f"{layer.id}.running_var"].astype(np.float64)
            scale = gamma / np.sqrt(var + p.get("eps", 1e-5))
            records[layer.id] = Affine(layer.id, stored(scale), stored(beta - mean * scale))
        elif layer.kind is LayerKind.ACTIVATION and ActivationKind(p["fn"]) is ActivationKind.PRELU:
            records[layer.id] = Slope(layer.id, stored(model.params[f"{layer.id}.slope"].data))

    packed = PackedModel(model.descriptor(), records, word_bits, layout, float_dtype)
    logger.info(
        "Exported %d layers (%d binarized, %d-bit words)",
        len(records), sum(isinstance(r, PackedConv) for r in records.values()), word_bits,
    )
    return packed


def load_packed_model(path: Union[str, Path]) -> PackedModel:
    path = Path(path)
    if not path.is_file():
        raise ArtifactNotFoundError(str(path), what="packed model")
    return PackedModel.from_bytes(path.read_bytes(), source=str(path))
