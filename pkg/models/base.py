"""
Base enums shared by every module of the toolkit.
"""
from enum import Enum


class BinarizeMode(str, Enum):
    """How a flagged layer computes (BinarizedLayerState.mode)."""
    OFF = "off"
    ACTIVATIONS_ONLY = "activations-only"
    WEIGHTS_ONLY = "weights-only"
    WEIGHTS_AND_ACTIVATIONS = "weights+activations"

    @property
    def binarizes_weights(self) -> bool:
        return self in (BinarizeMode.WEIGHTS_ONLY, BinarizeMode.WEIGHTS_AND_ACTIVATIONS)

    @property
    def binarizes_activations(self) -> bool:
        return self in (BinarizeMode.ACTIVATIONS_ONLY, BinarizeMode.WEIGHTS_AND_ACTIVATIONS)


class ForwardMode(str, Enum):
    """Network-wide execution mode; only affects layers flagged for binarization."""
    FP = "fp"
    BINARY_ACT_ONLY = "binary-act-only"
    FULL_BINARY = "full-binary"

    @property
    def layer_mode(self) -> BinarizeMode:
        return {
            ForwardMode.FP: BinarizeMode.OFF,
            ForwardMode.BINARY_ACT_ONLY: BinarizeMode.ACTIVATIONS_ONLY,
            ForwardMode.FULL_BINARY: BinarizeMode.WEIGHTS_AND_ACTIVATIONS,
        }[self]


class SteKind(str, Enum):
    """Backward rule for the sign function."""
    CLIPPED = "clipped-ste"
    POLYNOMIAL = "polynomial"


class LayerKind(str, Enum):
    """Node kinds of a ModelGraph."""
    CONV = "conv2d"
    FC = "fc"
    BATCHNORM = "batchnorm"
    ACTIVATION = "activation"
    ADD = "add"
    POOL = "pool"
    FLATTEN = "flatten"


class ActivationKind(str, Enum):
    RELU = "relu"
    HARDTANH = "hardtanh"
    PRELU = "prelu"


class PoolKind(str, Enum):
    GLOBAL_AVG = "global-avg"
    MAX2 = "max2"


class Arch(str, Enum):
    TINY_CNN = "tiny-cnn"
    RESNET20 = "resnet20"
    RESNET18 = "resnet18"


class Variant(str, Enum):
    PLAIN = "plain"
    BIREAL = "bireal"


class KtStrategy(str, Enum):
    """Per-layer K_T assignment."""
    UNIFORM = "uniform"
    HETEROGENEOUS = "heterogeneous"


class LossTerm(str, Enum):
    """Loss terms a training stage can enable; the total loss sums the enabled ones."""
    CE = "ce"
    KURTOSIS = "kurtosis"
    WDM = "wdm"
    KD = "kd"


class OptimizerKind(str, Enum):
    SGD = "sgd"
    ADAM = "adam"


class ScheduleKind(str, Enum):
    LINEAR = "linear-decay-to-zero"
    COSINE = "cosine"
    STEP = "step"


class DatasetName(str, Enum):
    MNIST = "mnist"
    CIFAR10 = "cifar10"


class Split(str, Enum):
    TRAIN = "train"
    TEST = "test"


class Augment(str, Enum):
    NONE = "none"
    CROP_FLIP = "crop+flip"
