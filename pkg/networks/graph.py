"""
ModelGraph: an ordered list of LayerSpec nodes plus the parameter tensors and
batchnorm buffers they own.
"""
import copy
import logging
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from autodiff.ops import conv_output_size
from autodiff.tensor import Tensor
from models.base import LayerKind, PoolKind
from models.graph import INPUT, LayerSpec
from utils.errors import ShapeError, TopologyError

logger = logging.getLogger(__name__)


class ModelGraph:
    """
    Declarative network with its state.

    params maps "<layer>.<name>" to trainable tensors (weight, bias, gamma, beta,
    slope); buffers holds batchnorm running statistics. Binarization never
    writes to params: sign weights and scales are derived per forward pass.
    """

    def __init__(
        self,
        layers: Sequence[LayerSpec],
        input_shape: Sequence[int],
        num_classes: int,
        arch: Optional[str] = None,
        variant: Optional[str] = None,
        dtype: str = "float64",
    ):
        self.layers: List[LayerSpec] = list(layers)
        self.input_shape: Tuple[int, ...] = tuple(int(d) for d in input_shape)
        self.num_classes = num_classes
        self.arch = arch
        self.variant = variant
        self.dtype = np.dtype(dtype)
        self.params: Dict[str, Tensor] = {}
        self.buffers: Dict[str, np.ndarray] = {}
        self._index = {layer.id: i for i, layer in enumerate(self.layers)}
        self.shapes = self.validate()

    # ==================== STRUCTURE ====================

    def validate(self) -> Dict[str, Tuple[int, ...]]:
        """Check ids, ordering and first/last layer flags; return per-sample output shapes."""
        if len(self._index) != len(self.layers):
            ids = [layer.id for layer in self.layers]
            dupes = sorted({i for i in ids if ids.count(i) > 1})
            raise TopologyError(f"duplicate layer ids: {dupes}")
        if INPUT in self._index:
            raise TopologyError(f"'{INPUT}' is reserved for the graph input")

        seen = {INPUT}
        for layer in self.layers:
            unknown = [i for i in layer.inputs if i not in seen]
            if unknown:
                raise TopologyError(f"layer '{layer.id}' reads {unknown} before they are produced")
            seen.add(layer.id)

        weighted = self.weight_layers()
        if weighted:
            first_conv = next((l for l in weighted if l.kind is LayerKind.CONV), None)
            if first_conv is not None and first_conv.binarize:
                raise TopologyError(f"first convolution '{first_conv.id}' must stay full precision")
            if weighted[-1].binarize:
                raise TopologyError(f"last layer '{weighted[-1].id}' must stay full precision")
        return self.infer_shapes()

    def infer_shapes(self) -> Dict[str, Tuple[int, ...]]:
        """Per-sample output shape of every layer (without the batch axis)."""
        shapes: Dict[str, Tuple[int, ...]] = {INPUT: self.input_shape}
        for layer in self.layers:
            src = shapes[layer.inputs[0]]
            p = layer.params
            try:
                if layer.kind is LayerKind.CONV:
                    if len(src) != 3 or src[0] != p["in_channels"]:
                        raise TopologyError(f"conv '{layer.id}' expects {p['in_channels']} channels, gets {src}")
                    h = conv_output_size(src[1], p["kernel"], p["stride"], p["pad"], p.get("truncate", False))
                    w = conv_output_size(src[2], p["kernel"], p["stride"], p["pad"], p.get("truncate", False))
                    out = (p["out_channels"], h, w)
                elif layer.kind is LayerKind.FC:
                    if src != (p["in_features"],):
                        raise TopologyError(f"fc '{layer.id}' expects ({p['in_features']},), gets {src}")
                    out = (p["out_features"],)
                elif layer.kind is LayerKind.BATCHNORM:
                    if src[0] != p["channels"]:
                        raise TopologyError(f"batchnorm '{layer.id}' expects {p['channels']} channels, gets {src}")
                    out = src
                elif layer.kind is LayerKind.ADD:
                    others = [shapes[i] for i in layer.inputs]
                    if any(s != src for s in others):
                        raise TopologyError(f"skip connection '{layer.id}' joins incompatible shapes {others}")
                    out = src
                elif layer.kind is LayerKind.POOL:
                    if PoolKind(p["fn"]) is PoolKind.GLOBAL_AVG:
                        out = (src[0],)
                    else:
                        out = (src[0], src[1] // 2, src[2] // 2)
                elif layer.kind is LayerKind.FLATTEN:
                    out = (int(np.prod(src)),)
                else:
                    out = src
            except ShapeError as exc:
                raise TopologyError(f"layer '{layer.id}': {exc}") from exc
            shapes[layer.id] = out
        return shapes

    def layer(self, layer_id: str) -> LayerSpec:
        if layer_id not in self._index:
            raise TopologyError(f"unknown layer id '{layer_id}'")
        return self.layers[self._index[layer_id]]

    def weight_layers(self) -> List[LayerSpec]:
        return [layer for layer in self.layers if layer.has_weights]

    def binarized_layers(self) -> List[LayerSpec]:
        return [layer for layer in self.layers if layer.binarize]

    def regularized_layers(self, applies_to: str = "binarized") -> List[LayerSpec]:
        """Layers a kurtosis or density term reads: flagged convs, or every weighted layer."""
        return self.binarized_layers() if applies_to == "binarized" else self.weight_layers()

    def count_adds(self) -> int:
        return sum(1 for layer in self.layers if layer.kind is LayerKind.ADD)

    # ==================== PARAMETERS ====================

    def init_parameters(self, seed: int = 0) -> "ModelGraph":
        """He-normal weights, unit batchnorm scale, zero shifts and biases."""
        rng = np.random.default_rng(seed)
        self.params.clear()
        self.buffers.clear()
        for layer in self.layers:
            p = layer.params
            if layer.has_weights:
                shape = layer.weight_shape()
                fan_in = int(np.prod(shape[1:]))
                data = rng.standard_normal(shape) * np.sqrt(2.0 / fan_in)
                self.params[layer.weight_key] = Tensor(data.astype(self.dtype), requires_grad=True, name=layer.weight_key)
                if layer.kind is LayerKind.FC:
                    self._add_param(f"{layer.id}.bias", np.zeros(p["out_features"]))
            elif layer.kind is LayerKind.BATCHNORM:
                c = p["channels"]
                self._add_param(f"{layer.id}.gamma", np.ones(c))
                self._add_param(f"{layer.id}.beta", np.zeros(c))
                self.buffers[f"{layer.id}.running_mean"] = np.zeros(c, dtype=self.dtype)
                self.buffers[f"{layer.id}.running_var"] = np.ones(c, dtype=self.dtype)
            elif layer.kind is LayerKind.ACTIVATION and p["fn"] == "prelu":
                self._add_param(f"{layer.id}.slope", np.full(self.shapes[layer.inputs[0]][0], 0.25))
        return self

    def _add_param(self, key: str, data: np.ndarray) -> None:
        self.params[key] = Tensor(np.asarray(data, dtype=self.dtype), requires_grad=True, name=key)

    def weight(self, layer_id: str) -> Tensor:
        key = f"{layer_id}.weight"
        if key not in self.params:
            raise TopologyError(f"layer '{layer_id}' has no weights")
        return self.params[key]

    def parameters(self) -> List[Tensor]:
        return [tensor for _, tensor in self.named_parameters()]

    def named_parameters(self) -> List[Tuple[str, Tensor]]:
        """Trainable tensors in insertion (layer) order."""
        return list(self.params.items())

    def count_parameters(self) -> int:
        """Trainable scalars; batchnorm running statistics are buffers and not counted."""
        return int(sum(t.size for t in self.params.values()))

    def freeze(self) -> "ModelGraph":
        for tensor in self.params.values():
            tensor.requires_grad = False
        return self

    def astype(self, dtype: Any) -> "ModelGraph":
        self.dtype = np.dtype(dtype)
        for key, tensor in self.params.items():
            tensor.data = tensor.data.astype(self.dtype)
        for key in self.buffers:
            self.buffers[key] = self.buffers[key].astype(self.dtype)
        return self

    # ==================== STATE ====================

    def state(self) -> Dict[str, np.ndarray]:
        """Copies of every parameter and buffer keyed by name."""
        out = {key: tensor.data.copy() for key, tensor in self.params.items()}
        out.update({key: value.copy() for key, value in self.buffers.items()})
        return out

    def load_state(self, state: Dict[str, np.ndarray]) -> "ModelGraph":
        expected = set(self.params) | set(self.buffers)
        if set(state) != expected:
            missing = sorted(expected - set(state))
            extra = sorted(set(state) - expected)
            raise TopologyError(f"state does not match model: missing {missing}, unexpected {extra}")
        for key, value in state.items():
            target = self.params[key].data if key in self.params else self.buffers[key]
            if target.shape != value.shape:
                raise TopologyError(f"'{key}' has shape {value.shape}, model expects {target.shape}")
            if key in self.params:
                self.params[key].data = np.array(value, dtype=self.dtype, copy=True)
            else:
                self.buffers[key] = np.array(value, dtype=self.dtype, copy=True)
        return self

    def clone(self) -> "ModelGraph":
        other = ModelGraph(copy.deepcopy(self.layers), self.input_shape, self.num_classes, self.arch, self.variant, self.dtype)
        for key, tensor in self.params.items():
            other.params[key] = Tensor(tensor.data.copy(), requires_grad=tensor.requires_grad, name=key)
        other.buffers = {key: value.copy() for key, value in self.buffers.items()}
        return other

    # ==================== K_T TARGETS ====================

    @property
    def kt_targets(self) -> Dict[str, float]:
        return {layer.id: layer.kt for layer in self.layers if layer.kt is not None}

    def set_kt(self, targets: Dict[str, float]) -> None:
        for layer_id, value in targets.items():
            self.layer(layer_id).kt = float(value)

    # ==================== DESCRIPTORS ====================

    def descriptor(self) -> Dict[str, Any]:
        """JSON-ready architecture description (layers plus input/output geometry)."""
        return {
            "arch": self.arch,
            "variant": self.variant,
            "num_classes": self.num_classes,
            "input_shape": list(self.input_shape),
            "layers": [layer.model_dump(mode="json") for layer in self.layers],
        }

    @classmethod
    def from_descriptor(cls, descriptor: Dict[str, Any], dtype: str = "float64") -> "ModelGraph":
        try:
            layers = [LayerSpec.model_validate(item) for item in descriptor["layers"]]
            return cls(
                layers,
                descriptor["input_shape"],
                descriptor["num_classes"],
                descriptor.get("arch"),
                descriptor.get("variant"),
                dtype,
            )
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, TopologyError):
                raise
            raise TopologyError(f"invalid architecture descriptor: {exc}") from exc

    def weight_signature(self, layers: Optional[Iterable[LayerSpec]] = None) -> List[Tuple[str, Tuple[int, ...]]]:
        layers = self.weight_layers() if layers is None else layers
        return [(layer.id, self.weight(layer.id).shape) for layer in layers]

    def check_same_topology(self, other: "ModelGraph", what: str = "models") -> None:
        mine, theirs = self.weight_signature(), other.weight_signature()
        if mine != theirs:
            raise TopologyError(f"{what} differ in layer topology: {mine} vs {theirs}")

    def __repr__(self) -> str:
        return (
            f"<ModelGraph {self.arch}/{self.variant} layers={len(self.layers)} "
            f"params={self.count_parameters()} classes={self.num_classes}>"
        )
