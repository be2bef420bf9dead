"""
Named training recipes.

desk                     tiny-cnn on MNIST, small enough for a laptop CPU
cifar-resnet20           Bi-Real ResNet-20 on CIFAR-10, SGD 0.1 decayed linearly to 0
imagenet-style-resnet18  ResNet-18 protocol: Adam 1e-3, FP down-sampling, act-then-weight stages
"""
from typing import Callable, Dict, List

from models.base import (
    Arch,
    Augment,
    DatasetName,
    ForwardMode,
    KtStrategy,
    LossTerm,
    OptimizerKind,
    ScheduleKind,
    Variant,
)
from models.config import (
    DataConfig,
    KurtosisConfig,
    ModelConfig,
    OptimizerConfig,
    ScheduleConfig,
    StageSpec,
    TrainConfig,
    WdmConfig,
)
from utils.errors import ConfigError

_BNN_LOSSES = [LossTerm.CE, LossTerm.KURTOSIS]
_DISTILL_LOSSES = [LossTerm.CE, LossTerm.KURTOSIS, LossTerm.WDM]


def _two_stage() -> List[StageSpec]:
    return [
        StageSpec(name="bnn-act", mode=ForwardMode.BINARY_ACT_ONLY, losses=_BNN_LOSSES),
        StageSpec(name="distill", mode=ForwardMode.FULL_BINARY, losses=_DISTILL_LOSSES, teacher="teacher"),
    ]


def desk() -> TrainConfig:
    return TrainConfig(
        seed=0,
        epochs=3,
        teacher_epochs=3,
        model=ModelConfig(arch=Arch.TINY_CNN, variant=Variant.PLAIN),
        data=DataConfig(dataset=DatasetName.MNIST, subset=5000, test_subset=1000, batch_size=64),
        optimizer=OptimizerConfig(kind=OptimizerKind.ADAM, lr=1e-3),
        schedule=ScheduleConfig(kind=ScheduleKind.COSINE),
        kurtosis=KurtosisConfig(lam=1e-3, kt=1.0),
        wdm=WdmConfig(alpha_wdm=1.0, beta=1.0, bins=32),
        stages=_two_stage(),
    )


def cifar_resnet20() -> TrainConfig:
    return TrainConfig(
        epochs=200,
        teacher_epochs=200,
        model=ModelConfig(arch=Arch.RESNET20, variant=Variant.BIREAL, binarize_downsample=True),
        data=DataConfig(dataset=DatasetName.CIFAR10, augment=Augment.CROP_FLIP, batch_size=128),
        optimizer=OptimizerConfig(kind=OptimizerKind.SGD, lr=0.1, momentum=0.9, weight_decay=1e-3),
        schedule=ScheduleConfig(kind=ScheduleKind.LINEAR),
        kurtosis=KurtosisConfig(lam=1e-4, kt=1.0),
        teacher_kurtosis=KurtosisConfig(lam=1e-4, kt=1.2, strategy=KtStrategy.HETEROGENEOUS, applies_to="all"),
        stages=[
            StageSpec(name="bnn-full", mode=ForwardMode.FULL_BINARY, losses=_BNN_LOSSES),
            StageSpec(name="distill", mode=ForwardMode.FULL_BINARY, losses=_DISTILL_LOSSES, teacher="teacher"),
        ],
    )


def imagenet_style_resnet18() -> TrainConfig:
    return TrainConfig(
        epochs=100,
        teacher_epochs=100,
        model=ModelConfig(arch=Arch.RESNET18, variant=Variant.BIREAL, num_classes=10, binarize_downsample=False),
        data=DataConfig(dataset=DatasetName.CIFAR10, augment=Augment.CROP_FLIP, batch_size=256),
        optimizer=OptimizerConfig(kind=OptimizerKind.ADAM, lr=1e-3, beta1=0.9),
        schedule=ScheduleConfig(kind=ScheduleKind.LINEAR),
        kurtosis=KurtosisConfig(lam=1e-4, kt=1.0),
        stages=_two_stage(),
    )


RECIPES: Dict[str, Callable[[], TrainConfig]] = {
    "desk": desk,
    "cifar-resnet20": cifar_resnet20,
    "imagenet-style-resnet18": imagenet_style_resnet18,
}


def recipe(name: str) -> TrainConfig:
    if name not in RECIPES:
        raise ConfigError(f"unknown recipe '{name}', expected one of {sorted(RECIPES)}", key="recipe")
    return RECIPES[name]()
