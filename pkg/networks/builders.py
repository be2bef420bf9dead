"""
Network builders: tiny-cnn, resnet20 (CIFAR) and resnet18 (ImageNet-style),
each in a plain and a Bi-Real variant.
"""
import logging
from typing import List, Optional, Union

from models.base import ActivationKind, Arch, LayerKind, PoolKind, Variant
from models.graph import INPUT, LayerSpec
from networks.graph import ModelGraph

logger = logging.getLogger(__name__)

# Default (channels, spatial size) of the input each recipe is built for
DEFAULT_INPUT = {
    Arch.TINY_CNN: (1, 28),
    Arch.RESNET20: (3, 32),
    Arch.RESNET18: (3, 224),
}

TINY_CNN_WIDTHS = (32, 64, 64, 128)
RESNET20_WIDTHS = (16, 32, 64)
RESNET18_WIDTHS = (64, 128, 256, 512)


class _GraphBuilder:
    """Appends layers and tracks the current tensor id and channel count."""

    def __init__(self, activation: ActivationKind):
        self.layers: List[LayerSpec] = []
        self.activation = activation
        self.current = INPUT

    def add(self, layer_id: str, kind: LayerKind, inputs=None, binarize: bool = False, **params) -> str:
        inputs = inputs if inputs is not None else [self.current]
        self.layers.append(LayerSpec(id=layer_id, kind=kind, inputs=inputs, params=params, binarize=binarize))
        self.current = layer_id
        return layer_id

    def conv(self, name, cin, cout, kernel=3, stride=1, binarize=False, source=None, pad=None) -> str:
        pad = kernel // 2 if pad is None else pad
        inputs = [source] if source is not None else None
        return self.add(
            name, LayerKind.CONV, inputs, binarize,
            in_channels=cin, out_channels=cout, kernel=kernel, stride=stride, pad=pad,
            truncate=stride > 1,
        )

    def bn(self, name, channels) -> str:
        return self.add(name, LayerKind.BATCHNORM, channels=channels)

    def act(self, name) -> str:
        return self.add(name, LayerKind.ACTIVATION, fn=self.activation.value)

    def join(self, name, a, b) -> str:
        return self.add(name, LayerKind.ADD, [a, b])

    def head(self, features, num_classes) -> None:
        self.add("pool", LayerKind.POOL, fn=PoolKind.GLOBAL_AVG.value)
        self.add("fc", LayerKind.FC, in_features=features, out_features=num_classes)


def _tiny_cnn(b: _GraphBuilder, cin: int, num_classes: int, bireal: bool) -> None:
    c1, c2, c3, c4 = TINY_CNN_WIDTHS
    b.conv("conv1", cin, c1)
    b.bn("bn1", c1)
    b.act("act1")
    b.conv("conv2", c1, c2, stride=2, binarize=True)
    b.bn("bn2", c2)
    block_in = b.act("act2")
    b.conv("conv3", c2, c3, binarize=True)
    b.bn("bn3", c3)
    if bireal:
        b.join("skip3", "bn3", block_in)
    b.act("act3")
    b.conv("conv4", c3, c4, stride=2, binarize=True)
    b.bn("bn4", c4)
    b.act("act4")
    b.head(c4, num_classes)


def _basic_block(b: _GraphBuilder, name: str, cin: int, cout: int, stride: int, bireal: bool, binarize_downsample: bool) -> None:
    """
    conv-bn-act-conv-bn + shortcut, then act. The Bi-Real variant adds an
    identity shortcut around the first convolution as well.
    """
    x = b.current
    if stride != 1 or cin != cout:
        b.conv(f"{name}.down", cin, cout, kernel=1, stride=stride, binarize=binarize_downsample, source=x, pad=0)
        shortcut = b.bn(f"{name}.down_bn", cout)
    else:
        shortcut = x

    b.conv(f"{name}.conv1", cin, cout, stride=stride, binarize=True, source=x)
    b.bn(f"{name}.bn1", cout)
    if bireal:
        b.join(f"{name}.skip1", f"{name}.bn1", shortcut)
    mid = b.act(f"{name}.act1")
    b.conv(f"{name}.conv2", cout, cout, binarize=True)
    b.bn(f"{name}.bn2", cout)
    b.join(f"{name}.add", f"{name}.bn2", mid if bireal else shortcut)
    b.act(f"{name}.out")


def _resnet(b: _GraphBuilder, widths, blocks: int, cin: int, num_classes: int, bireal: bool,
            binarize_downsample: bool, imagenet_stem: bool) -> None:
    if imagenet_stem:
        b.conv("stem", cin, widths[0], kernel=7, stride=2, pad=3)
    else:
        b.conv("stem", cin, widths[0])
    b.bn("stem_bn", widths[0])
    b.act("stem_act")
    if imagenet_stem:
        b.add("stem_pool", LayerKind.POOL, fn=PoolKind.MAX2.value)

    channels = widths[0]
    for s, width in enumerate(widths):
        for k in range(blocks):
            stride = 2 if s > 0 and k == 0 else 1
            _basic_block(b, f"layer{s + 1}.{k}", channels, width, stride, bireal, binarize_downsample)
            channels = width
    b.head(channels, num_classes)


def build(
    arch: Union[Arch, str],
    variant: Union[Variant, str] = Variant.PLAIN,
    num_classes: int = 10,
    in_channels: Optional[int] = None,
    input_size: Optional[int] = None,
    binarize_downsample: Optional[bool] = None,
    activation: Union[ActivationKind, str] = ActivationKind.HARDTANH,
    seed: int = 0,
    dtype: str = "float64",
) -> ModelGraph:
    """
    Build and initialize a network.

    Every convolution except the first is flagged for binarization; the final
    fc stays full precision. 1x1 downsampling convs follow the recipe
    (binarized for resnet20, full precision for resnet18) unless
    binarize_downsample overrides it.
    """
    try:
        arch, variant = Arch(arch), Variant(variant)
    except ValueError as exc:
        raise ValueError(f"unknown architecture or variant: {exc}") from exc
    if num_classes < 2:
        raise ValueError(f"num_classes must be at least 2, got {num_classes}")

    default_c, default_size = DEFAULT_INPUT[arch]
    cin = in_channels or default_c
    size = input_size or default_size
    bireal = variant is Variant.BIREAL
    b = _GraphBuilder(ActivationKind(activation))

    if arch is Arch.TINY_CNN:
        _tiny_cnn(b, cin, num_classes, bireal)
    elif arch is Arch.RESNET20:
        down = True if binarize_downsample is None else binarize_downsample
        _resnet(b, RESNET20_WIDTHS, 3, cin, num_classes, bireal, down, imagenet_stem=False)
    else:
        down = False if binarize_downsample is None else binarize_downsample
        _resnet(b, RESNET18_WIDTHS, 2, cin, num_classes, bireal, down, imagenet_stem=True)

    model = ModelGraph(b.layers, (cin, size, size), num_classes, arch.value, variant.value, dtype)
    model.init_parameters(seed)
    logger.debug("Built %r", model)
    return model


def reference_parameter_count(
    arch: Union[Arch, str],
    variant: Union[Variant, str] = Variant.PLAIN,
    num_classes: int = 10,
    in_channels: Optional[int] = None,
) -> int:
    """
    Closed-form trainable parameter count (conv weights, batchnorm scale and
    shift, fc weight and bias). Identical for both variants since skip
    connections carry no parameters.
    """
    arch = Arch(arch)
    Variant(variant)
    cin = in_channels or DEFAULT_INPUT[arch][0]

    def conv(i, o, k):
        return i * o * k * k

    def bn(c):
        return 2 * c

    def fc(i, o):
        return i * o + o

    if arch is Arch.TINY_CNN:
        widths = (cin,) + TINY_CNN_WIDTHS
        total = sum(conv(widths[i], widths[i + 1], 3) + bn(widths[i + 1]) for i in range(4))
        return total + fc(widths[-1], num_classes)

    widths, blocks, stem_kernel = (
        (RESNET20_WIDTHS, 3, 3) if arch is Arch.RESNET20 else (RESNET18_WIDTHS, 2, 7)
    )
    total = conv(cin, widths[0], stem_kernel) + bn(widths[0])
    channels = widths[0]
    for width in widths:
        for k in range(blocks):
            total += conv(channels, width, 3) + bn(width) + conv(width, width, 3) + bn(width)
            if channels != width:
                total += conv(channels, width, 1) + bn(width)
            channels = width
    return total + fc(channels, num_classes)
