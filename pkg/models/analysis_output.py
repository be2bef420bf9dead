"""
Output records: per-epoch metrics, evaluation and analysis reports, bench rows
and the run manifest. Every CSV the toolkit writes is built from these.
"""
from typing import Any, Dict, List, Optional

from pydantic import BaseModel, Field

# Column order of the per-epoch metrics CSV
METRICS_COLUMNS = [
    "epoch", "stage", "loss_total", "loss_ce", "loss_kurtosis", "loss_wdm", "loss_kd",
    "top1", "mean_kurtosis", "mean_cosine",
]

BENCH_COLUMNS = ["suite", "ns_per_op_binary", "ns_per_op_float", "speedup", "bytes_binary", "bytes_float"]

HISTOGRAM_COLUMNS = ["bin_center", "count"]


class EpochMetrics(BaseModel):
    """
    One row of the metrics CSV. Loss terms a stage does not enable are 0.
    """
    epoch: int = Field(..., ge=0)
    stage: str
    loss_total: float
    loss_ce: float = 0.0
    loss_kurtosis: float = 0.0
    loss_wdm: float = 0.0
    loss_kd: float = 0.0
    top1: float = Field(..., ge=0, le=100)
    mean_kurtosis: float
    mean_cosine: float

    class Config:
        json_schema_extra = {
            "example": {
                "epoch": 3,
                "stage": "bnn-full",
                "loss_total": 0.4213,
                "loss_ce": 0.4102,
                "loss_kurtosis": 0.0111,
                "loss_wdm": 0.0,
                "loss_kd": 0.0,
                "top1": 91.4,
                "mean_kurtosis": 1.62,
                "mean_cosine": 0.87
            }
        }


class LayerReport(BaseModel):
    """Per-layer diagnostics of one checkpoint."""
    layer_id: str
    numel: int
    binarized: bool
    kurtosis: float
    kt: Optional[float] = None
    cosine: float
    sign_flip_pct: Optional[float] = None
    grad_sign_agreement: Optional[float] = None


class EvaluationReport(BaseModel):
    checkpoint: str
    split: str
    mode: str
    samples: int
    top1: float
    top5: float
    layers: List[LayerReport] = Field(default_factory=list)

    @property
    def binarized_layers(self) -> List[LayerReport]:
        return [layer for layer in self.layers if layer.binarized]

    @property
    def mean_kurtosis(self) -> float:
        layers = self.binarized_layers or self.layers
        return sum(l.kurtosis for l in layers) / len(layers) if layers else 0.0

    @property
    def mean_cosine(self) -> float:
        layers = self.binarized_layers or self.layers
        return sum(l.cosine for l in layers) / len(layers) if layers else 0.0


class AnalysisReport(BaseModel):
    """Result of analyze(): per-layer statistics plus the files written."""
    checkpoint: str
    baseline: Optional[str] = None
    bins: int
    layers: List[LayerReport] = Field(default_factory=list)
    overall_sign_flip_pct: Optional[float] = None
    files: Dict[str, str] = Field(default_factory=dict)


class BenchRow(BaseModel):
    suite: str
    ns_per_op_binary: float
    ns_per_op_float: float
    speedup: float
    bytes_binary: int
    bytes_float: int


class StageRecord(BaseModel):
    name: str
    mode: str
    epochs: int
    checkpoint: str
    wall_clock_s: float
    final: Optional[EpochMetrics] = None


class RunManifest(BaseModel):
    """
    Everything a run produced. config is a full TrainConfig snapshot; with the
    seed it reproduces the run.
    """
    command: str
    config: Dict[str, Any]
    seed: int
    stages: List[StageRecord] = Field(default_factory=list)
    artifacts: Dict[str, str] = Field(default_factory=dict)
    summary: Dict[str, Any] = Field(default_factory=dict)
