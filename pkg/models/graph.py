"""
Declarative layer records of a ModelGraph.
"""
from typing import Any, Dict, List, Optional

from pydantic import BaseModel, ConfigDict, Field, model_validator

from models.base import LayerKind

# Output id of the graph input
INPUT = "input"

# Expected entries of LayerSpec.params per kind
REQUIRED_PARAMS = {
    LayerKind.CONV: ("in_channels", "out_channels", "kernel", "stride", "pad"),
    LayerKind.FC: ("in_features", "out_features"),
    LayerKind.BATCHNORM: ("channels",),
    LayerKind.ACTIVATION: ("fn",),
    LayerKind.POOL: ("fn",),
    LayerKind.ADD: (),
    LayerKind.FLATTEN: (),
}


class LayerSpec(BaseModel):
    """
    One node of the network.

    inputs name earlier layer ids (or "input"). binarize marks convolutions the
    forward mode may binarize; kt is the K_T target assigned by kt_schedule.
    """
    model_config = ConfigDict(extra="forbid")

    id: str = Field(..., min_length=1)
    kind: LayerKind
    inputs: List[str] = Field(default_factory=lambda: [INPUT])
    params: Dict[str, Any] = Field(default_factory=dict)
    binarize: bool = False
    kt: Optional[float] = None

    @model_validator(mode="after")
    def _check_params(self) -> "LayerSpec":
        missing = [name for name in REQUIRED_PARAMS[self.kind] if name not in self.params]
        if missing:
            raise ValueError(f"layer '{self.id}' ({self.kind.value}) is missing params {missing}")
        if self.kind is LayerKind.ADD and len(self.inputs) < 2:
            raise ValueError(f"add layer '{self.id}' needs at least two inputs")
        if self.kind is not LayerKind.ADD and len(self.inputs) != 1:
            raise ValueError(f"layer '{self.id}' takes exactly one input")
        if self.binarize and self.kind is not LayerKind.CONV:
            raise ValueError(f"only conv2d layers can be binarized, not '{self.id}'")
        return self

    @property
    def has_weights(self) -> bool:
        return self.kind in (LayerKind.CONV, LayerKind.FC)

    @property
    def weight_key(self) -> str:
        return f"{self.id}.weight"

    def weight_shape(self) -> tuple:
        p = self.params
        if self.kind is LayerKind.CONV:
            return (p["out_channels"], p["in_channels"], p["kernel"], p["kernel"])
        if self.kind is LayerKind.FC:
            return (p["out_features"], p["in_features"])
        return ()
