"""
Checkpoint container and its deterministic binary codec.

Layout (little-endian):
    "BDCK" | u16 version | u32 header length | header JSON (sorted keys) | tensor data

The header holds the metadata, the architecture descriptor and a tensor table
(name, dtype, shape, offset, nbytes); tensors are stored in name order, so
save -> load -> save reproduces the same bytes.
"""
import json
import os
import struct
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Optional, Union

import numpy as np

from models.base import ForwardMode
from networks.graph import ModelGraph
from utils.errors import ArtifactNotFoundError, FormatError

MAGIC = b"BDCK"
VERSION = 1
_PREFIX = struct.Struct("<4sHI")
_DTYPES = {"float32": "<f4", "float64": "<f8"}


@dataclass
class Checkpoint:
    name: str
    model: Dict[str, Any]
    state: Dict[str, np.ndarray]
    metadata: Dict[str, Any] = field(default_factory=dict)

    @classmethod
    def from_model(cls, model: ModelGraph, name: str, **metadata: Any) -> "Checkpoint":
        return cls(name=name, model=model.descriptor(), state=model.state(), metadata=dict(metadata))

    def to_model(self, dtype: Optional[str] = None) -> ModelGraph:
        if dtype is None:
            dtype = str(next(iter(self.state.values())).dtype) if self.state else "float64"
        model = ModelGraph.from_descriptor(self.model, dtype=dtype)
        model.init_parameters(seed=0)
        return model.load_state(self.state)

    @property
    def mode(self) -> ForwardMode:
        return ForwardMode(self.metadata.get("mode", ForwardMode.FP.value))

    # ==================== CODEC ====================

    def to_bytes(self) -> bytes:
        table, blobs, offset = [], [], 0
        for key in sorted(self.state):
            array = np.asarray(self.state[key])
            dtype = array.dtype.name
            if dtype not in _DTYPES:
                raise FormatError(f"tensor '{key}' has unsupported dtype {dtype}")
            raw = np.ascontiguousarray(array, dtype=_DTYPES[dtype]).tobytes()
            table.append({"name": key, "dtype": dtype, "shape": list(array.shape), "offset": offset, "nbytes": len(raw)})
            blobs.append(raw)
            offset += len(raw)
        header = {"name": self.name, "metadata": self.metadata, "model": self.model, "tensors": table}
        encoded = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
        return _PREFIX.pack(MAGIC, VERSION, len(encoded)) + encoded + b"".join(blobs)

    @classmethod
    def from_bytes(cls, raw: bytes, source: str = "<bytes>") -> "Checkpoint":
        if len(raw) < _PREFIX.size:
            raise FormatError(f"{source}: too short for a checkpoint header", offset=0)
        magic, version, length = _PREFIX.unpack_from(raw, 0)
        if magic != MAGIC:
            raise FormatError(f"{source}: bad magic {magic!r}, expected {MAGIC!r}", offset=0)
        if version != VERSION:
            raise FormatError(f"{source}: unsupported checkpoint version {version}", offset=4)
        start = _PREFIX.size
        if len(raw) < start + length:
            raise FormatError(f"{source}: truncated header", offset=len(raw))
        try:
            header = json.loads(raw[start:start + length].decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise FormatError(f"{source}: unreadable header: {exc}", offset=start) from exc

        if not all(key in header for key in ("name", "metadata", "model", "tensors")):
            raise FormatError(f"{source}: header is missing checkpoint fields", offset=start)
        data_start = start + length
        state = {}
        for entry in header["tensors"]:
            begin = data_start + entry["offset"]
            end = begin + entry["nbytes"]
            if end > len(raw):
                raise FormatError(f"{source}: tensor '{entry['name']}' runs past end of file", offset=begin)
            wire = np.dtype(_DTYPES[entry["dtype"]])
            array = np.frombuffer(raw, dtype=wire, count=entry["nbytes"] // wire.itemsize, offset=begin)
            state[entry["name"]] = array.astype(entry["dtype"]).reshape(entry["shape"])
        return cls(name=header["name"], model=header["model"], state=state, metadata=header["metadata"])

    def save(self, path: Union[str, Path]) -> Path:
        """Write atomically: a temp file in the target directory renamed into place."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        write_atomic(path, self.to_bytes())
        return path

    @classmethod
    def load(cls, path: Union[str, Path]) -> "Checkpoint":
        path = Path(path)
        if not path.is_file():
            raise ArtifactNotFoundError(str(path), what="checkpoint")
        return cls.from_bytes(path.read_bytes(), source=str(path))


def write_atomic(path: Path, payload: bytes) -> None:
    fd, tmp = tempfile.mkstemp(dir=str(path.parent), prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as handle:
            handle.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
