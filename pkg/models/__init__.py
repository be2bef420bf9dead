from models.base import (
    ActivationKind,
    Arch,
    Augment,
    BinarizeMode,
    DatasetName,
    ForwardMode,
    KtStrategy,
    LayerKind,
    LossTerm,
    OptimizerKind,
    PoolKind,
    ScheduleKind,
    Split,
    SteKind,
    Variant
)
from models.config import (
    DataConfig,
    KurtosisConfig,
    ModelConfig,
    OptimizerConfig,
    ScheduleConfig,
    StageSpec,
    TrainConfig,
    WdmConfig
)
from models.graph import INPUT, LayerSpec
from models.dataset import Dataset, Normalization
from models.analysis_output import (
    BENCH_COLUMNS,
    HISTOGRAM_COLUMNS,
    METRICS_COLUMNS,
    AnalysisReport,
    BenchRow,
    EpochMetrics,
    EvaluationReport,
    LayerReport,
    RunManifest,
    StageRecord
)

__all__ = [
    "ActivationKind",
    "Arch",
    "Augment",
    "BinarizeMode",
    "DatasetName",
    "ForwardMode",
    "KtStrategy",
    "LayerKind",
    "LossTerm",
    "OptimizerKind",
    "PoolKind",
    "ScheduleKind",
    "Split",
    "SteKind",
    "Variant",
    "DataConfig",
    "KurtosisConfig",
    "ModelConfig",
    "OptimizerConfig",
    "ScheduleConfig",
    "StageSpec",
    "TrainConfig",
    "WdmConfig",
    "INPUT",
    "LayerSpec",
    "Dataset",
    "Normalization",
    "BENCH_COLUMNS",
    "HISTOGRAM_COLUMNS",
    "METRICS_COLUMNS",
    "AnalysisReport",
    "BenchRow",
    "EpochMetrics",
    "EvaluationReport",
    "LayerReport",
    "RunManifest",
    "StageRecord"
]
