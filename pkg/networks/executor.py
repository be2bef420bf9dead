"""
Graph executor: runs a ModelGraph under a network-wide binarization mode.
"""
from typing import Dict, Tuple, Union

import numpy as np

from autodiff import ops
from autodiff.tensor import Tensor
from binarization import BinarizedLayerState, binary_forward
from models.base import ActivationKind, BinarizeMode, ForwardMode, LayerKind, PoolKind, SteKind
from models.graph import INPUT, LayerSpec
from networks.graph import ModelGraph
from utils.errors import ShapeError


def layer_state(
    model: ModelGraph,
    layer: LayerSpec,
    mode: ForwardMode,
    weight_ste: SteKind = SteKind.CLIPPED,
    activation_ste: SteKind = SteKind.CLIPPED,
) -> BinarizedLayerState:
    """Binarization view of one convolution; OFF for unflagged layers."""
    layer_mode = ForwardMode(mode).layer_mode if layer.binarize else BinarizeMode.OFF
    return BinarizedLayerState(model.weight(layer.id), layer_mode, weight_ste, activation_ste)


def _run_layer(model: ModelGraph, layer: LayerSpec, inputs, mode, training, weight_ste, activation_ste) -> Tensor:
    p = layer.params
    x = inputs[0]
    kind = layer.kind

    if kind is LayerKind.CONV:
        state = layer_state(model, layer, mode, weight_ste, activation_ste)
        return binary_forward(state, x, stride=p["stride"], pad=p["pad"], truncate=p.get("truncate", False))

    if kind is LayerKind.FC:
        w = model.weight(layer.id)
        return ops.matmul(x, ops.transpose(w)) + model.params[f"{layer.id}.bias"]

    if kind is LayerKind.BATCHNORM:
        return ops.batchnorm2d(
            x,
            model.params[f"{layer.id}.gamma"],
            model.params[f"{layer.id}.beta"],
            model.buffers[f"{layer.id}.running_mean"],
            model.buffers[f"{layer.id}.running_var"],
            training=training,
            momentum=p.get("momentum", 0.1),
            eps=p.get("eps", 1e-5),
        )

    if kind is LayerKind.ACTIVATION:
        fn = ActivationKind(p["fn"])
        if fn is ActivationKind.RELU:
            return ops.relu(x)
        if fn is ActivationKind.HARDTANH:
            return ops.hardtanh(x)
        return ops.prelu(x, model.params[f"{layer.id}.slope"])

    if kind is LayerKind.ADD:
        shapes = {t.shape for t in inputs}
        if len(shapes) != 1:
            raise ShapeError(f"skip connection '{layer.id}' got shapes {sorted(shapes)}")
        out = inputs[0]
        for other in inputs[1:]:
            out = out + other
        return out

    if kind is LayerKind.POOL:
        if PoolKind(p["fn"]) is PoolKind.GLOBAL_AVG:
            return ops.global_avg_pool(x)
        return ops.max_pool2d(x)

    return ops.flatten(x)


def forward(
    model: ModelGraph,
    x: Union[Tensor, np.ndarray],
    mode: Union[ForwardMode, str] = ForwardMode.FP,
    training: bool = False,
    capture: bool = False,
    weight_ste: SteKind = SteKind.CLIPPED,
    activation_ste: SteKind = SteKind.CLIPPED,
) -> Union[Tensor, Tuple[Tensor, Dict[str, Tensor]]]:
    """
    Logits [N, num_classes] for a batch.

    mode only changes layers whose LayerSpec.binarize is set. With capture=True
    the output of every layer is returned as well, keyed by layer id.
    """
    mode = ForwardMode(mode)
    x = x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=model.dtype))
    if x.ndim != len(model.input_shape) + 1 or tuple(x.shape[1:]) != model.input_shape:
        raise ShapeError(f"input {x.shape} does not match model input [N, {', '.join(map(str, model.input_shape))}]")

    outputs: Dict[str, Tensor] = {INPUT: x}
    for layer in model.layers:
        inputs = [outputs[i] for i in layer.inputs]
        outputs[layer.id] = _run_layer(model, layer, inputs, mode, training, weight_ste, activation_ste)

    logits = outputs[model.layers[-1].id]
    if capture:
        return logits, outputs
    return logits
