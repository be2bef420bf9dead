"""
Run configuration models - every invariant of a training run is validated here.
"""
from typing import Dict, List, Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from models.base import (
    Arch,
    Augment,
    DatasetName,
    ForwardMode,
    KtStrategy,
    LossTerm,
    OptimizerKind,
    ScheduleKind,
    SteKind,
    Variant,
)


class KurtosisConfig(BaseModel):
    """
    Kurtosis regularization settings (lambda and K_T of the loss).

    kt_per_layer overrides the strategy for the named layers; every named layer
    must exist in the model and carry weights (checked when the loss is built).
    """
    model_config = ConfigDict(populate_by_name=True, extra="forbid")

    lam: float = Field(1e-4, ge=0, alias="lambda")
    kt: float = Field(1.0, description="Global K_T, or the mean target of the heterogeneous ramp")
    strategy: KtStrategy = KtStrategy.UNIFORM
    spread: float = Field(0.4, ge=0, description="Half-width of the heterogeneous depth ramp")
    kt_per_layer: Dict[str, float] = Field(default_factory=dict)
    applies_to: str = Field("binarized", pattern="^(binarized|all)$")


class WdmConfig(BaseModel):
    """Weight Distribution Mimicking settings."""
    model_config = ConfigDict(populate_by_name=True, extra="forbid")

    beta: float = Field(1.0, ge=0, description="KD coefficient inside the WDM loss")
    alpha_wdm: float = Field(1.0, ge=0, description="Coefficient of the WDM loss in the total loss")
    temperature: float = Field(4.0, gt=0)
    bins: int = Field(64, ge=8)
    support: float = Field(1.5, gt=0, alias="range")
    bandwidth: Optional[float] = Field(None, gt=0, description="Kernel half-width; defaults to one bin width")
    eps: float = Field(1e-6, gt=0)
    kl_target: str = Field("latent", pattern="^latent$", description="Weight population the KL is taken against")

    @property
    def bin_width(self) -> float:
        return 2.0 * self.support / self.bins

    @property
    def kernel_width(self) -> float:
        return self.bandwidth if self.bandwidth is not None else self.bin_width


class OptimizerConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    kind: OptimizerKind = OptimizerKind.ADAM
    lr: float = Field(1e-3, gt=0)
    momentum: float = Field(0.9, ge=0, lt=1)
    weight_decay: float = Field(0.0, ge=0)
    beta1: float = Field(0.9, ge=0, lt=1)
    beta2: float = Field(0.999, ge=0, lt=1)
    eps: float = Field(1e-8, gt=0)


class ScheduleConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    kind: ScheduleKind = ScheduleKind.LINEAR
    step_size: int = Field(10, ge=1, description="Epochs between decays (step schedule)")
    gamma: float = Field(0.1, gt=0, le=1)


class StageSpec(BaseModel):
    """One training stage: execution mode, enabled loss terms and teacher reference."""
    model_config = ConfigDict(extra="forbid")

    name: str = Field(..., min_length=1)
    mode: ForwardMode
    losses: List[LossTerm] = Field(default_factory=lambda: [LossTerm.CE])
    teacher: Optional[str] = Field(None, description="'teacher' or a checkpoint path")
    epochs: Optional[int] = Field(None, ge=1)

    @field_validator("losses")
    @classmethod
    def _losses_not_empty(cls, value: List[LossTerm]) -> List[LossTerm]:
        if not value:
            raise ValueError("a stage needs at least one loss term")
        return list(dict.fromkeys(value))

    @model_validator(mode="after")
    def _teacher_for_distillation(self) -> "StageSpec":
        needs_teacher = LossTerm.WDM in self.losses or LossTerm.KD in self.losses
        if needs_teacher and not self.teacher:
            raise ValueError(f"stage '{self.name}' enables wdm/kd but names no teacher")
        return self

    @property
    def is_distillation(self) -> bool:
        return self.teacher is not None


class ModelConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    arch: Arch = Arch.TINY_CNN
    variant: Variant = Variant.PLAIN
    num_classes: int = Field(10, ge=2)
    binarize_downsample: Optional[bool] = Field(
        None, description="None follows the arch recipe (binarized for resnet20, FP for resnet18)"
    )


class DataConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    dataset: DatasetName = DatasetName.MNIST
    data_dir: Optional[str] = None
    subset: Optional[int] = Field(None, ge=1, description="Keep only the first N training images")
    test_subset: Optional[int] = Field(None, ge=1)
    augment: Augment = Augment.NONE
    batch_size: int = Field(128, ge=1)
    prefetch: int = Field(2, ge=0, description="Bounded queue depth; 0 loads batches inline")


def _default_stages() -> List[StageSpec]:
    return [
        StageSpec(name="bnn-act", mode=ForwardMode.BINARY_ACT_ONLY, losses=[LossTerm.CE, LossTerm.KURTOSIS]),
        StageSpec(name="bnn-full", mode=ForwardMode.FULL_BINARY, losses=[LossTerm.CE, LossTerm.KURTOSIS]),
        StageSpec(
            name="distill",
            mode=ForwardMode.FULL_BINARY,
            losses=[LossTerm.CE, LossTerm.KURTOSIS, LossTerm.WDM],
            teacher="teacher",
        ),
    ]


class TrainConfig(BaseModel):
    """
    Complete description of a BD-BNN run. A snapshot of this model is enough
    to reproduce the run.
    """
    model_config = ConfigDict(extra="forbid")

    seed: int = 0
    precision: str = Field("float32", pattern="^(float32|float64)$")
    epochs: int = Field(20, ge=1, description="Default epochs per stage")
    teacher_epochs: Optional[int] = Field(None, ge=1)

    model: ModelConfig = Field(default_factory=ModelConfig)
    data: DataConfig = Field(default_factory=DataConfig)
    optimizer: OptimizerConfig = Field(default_factory=OptimizerConfig)
    schedule: ScheduleConfig = Field(default_factory=ScheduleConfig)

    kurtosis: KurtosisConfig = Field(default_factory=KurtosisConfig)
    teacher_kurtosis: KurtosisConfig = Field(
        default_factory=lambda: KurtosisConfig(strategy=KtStrategy.HETEROGENEOUS, applies_to="all")
    )
    wdm: WdmConfig = Field(default_factory=WdmConfig)

    activation_ste: SteKind = SteKind.CLIPPED
    weight_ste: SteKind = SteKind.CLIPPED
    latent_clip: Optional[float] = Field(1.5, gt=0)

    stages: List[StageSpec] = Field(default_factory=_default_stages)

    @field_validator("stages")
    @classmethod
    def _stages_valid(cls, value: List[StageSpec]) -> List[StageSpec]:
        if not value:
            raise ValueError("stage plan must not be empty")
        names = [s.name for s in value]
        if len(set(names)) != len(names):
            raise ValueError(f"stage names must be unique: {names}")
        if "teacher" in names:
            raise ValueError("'teacher' is reserved for the full-precision teacher run")
        return value

    @property
    def dtype(self) -> str:
        return self.precision

    def stage_epochs(self, stage: StageSpec) -> int:
        return stage.epochs or self.epochs

    @property
    def teacher_stage_epochs(self) -> int:
        return self.teacher_epochs or self.epochs
