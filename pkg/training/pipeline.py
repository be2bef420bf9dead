"""
The two-step BD-BNN pipeline: a kurtosis-regularized full-precision teacher,
then the configured BNN stages (warm-up followed by distillation against the
frozen teacher).
"""
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Union

import pandas as pd

from models.analysis_output import METRICS_COLUMNS, EpochMetrics, StageRecord
from models.config import StageSpec, TrainConfig
from models.dataset import Dataset
from training.checkpoint import Checkpoint
from training.evaluation import overall_sign_flip, sign_flip_by_layer
from training.trainer import TEACHER_STAGE, train_bnn_stage, train_teacher

logger = logging.getLogger(__name__)


@dataclass
class PipelineResult:
    teacher: Checkpoint
    student: Checkpoint
    stages: List[StageRecord] = field(default_factory=list)
    metrics: List[EpochMetrics] = field(default_factory=list)
    checkpoints: Dict[str, str] = field(default_factory=dict)
    metrics_path: Optional[str] = None
    sign_flip_pct: float = 0.0
    sign_flip_by_layer: Dict[str, float] = field(default_factory=dict)

    @property
    def final_top1(self) -> float:
        return self.metrics[-1].top1 if self.metrics else 0.0


def checkpoint_metrics(ckpt: Checkpoint) -> List[EpochMetrics]:
    return [EpochMetrics.model_validate(row) for row in ckpt.metadata.get("metrics", [])]


def write_metrics(rows: List[EpochMetrics], path: Union[str, Path]) -> Path:
    """Metrics CSV with the fixed METRICS_COLUMNS header."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame = pd.DataFrame([row.model_dump() for row in rows], columns=METRICS_COLUMNS)
    frame.to_csv(path, index=False)
    return path


def resolve_teacher(stage: StageSpec, teacher: Checkpoint) -> Optional[Checkpoint]:
    if stage.teacher is None:
        return None
    if stage.teacher == TEACHER_STAGE:
        return teacher
    return Checkpoint.load(stage.teacher)


def run_bdbnn(
    cfg: TrainConfig,
    train: Dataset,
    test: Optional[Dataset] = None,
    out_dir: Optional[Union[str, Path]] = None,
    teacher: Optional[Checkpoint] = None,
    quiet: bool = True,
) -> PipelineResult:
    """
    Train (or reuse) the teacher, then every stage in cfg.stages in order, each
    initialized from the previous one. Checkpoints are written as each stage
    finishes, so a failing stage leaves the last good checkpoint on disk.
    """
    out = Path(out_dir) if out_dir is not None else None
    records: List[StageRecord] = []
    metrics: List[EpochMetrics] = []
    paths: Dict[str, str] = {}

    def keep(ckpt: Checkpoint, seconds: float) -> None:
        path = ""
        if out is not None:
            path = str(ckpt.save(out / f"{ckpt.name}.bdck"))
            paths[ckpt.name] = path
        rows = checkpoint_metrics(ckpt)
        metrics.extend(rows)
        records.append(StageRecord(
            name=ckpt.name,
            mode=ckpt.mode.value,
            epochs=len(rows),
            checkpoint=path,
            wall_clock_s=round(seconds, 3),
            final=rows[-1] if rows else None,
        ))

    started = time.perf_counter()
    if teacher is None:
        teacher = train_teacher(cfg, train, test, quiet=quiet, artifact_dir=out)
        keep(teacher, time.perf_counter() - started)
    else:
        logger.info("Reusing teacher checkpoint %s", teacher.name)

    current: Optional[Checkpoint] = None
    for stage in cfg.stages:
        started = time.perf_counter()
        logger.info("Stage %s: mode=%s losses=%s", stage.name, stage.mode.value,
                    ",".join(t.value for t in stage.losses))
        current = train_bnn_stage(
            cfg, stage, current, train, test,
            teacher=resolve_teacher(stage, teacher), quiet=quiet, artifact_dir=out,
        )
        keep(current, time.perf_counter() - started)

    flips = sign_flip_by_layer(teacher.to_model(cfg.precision), current.to_model(cfg.precision))
    result = PipelineResult(
        teacher=teacher,
        student=current,
        stages=records,
        metrics=metrics,
        checkpoints=paths,
        sign_flip_pct=overall_sign_flip(flips),
        sign_flip_by_layer={k: 100.0 * f / n for k, (f, n) in flips.items()},
    )
    if out is not None:
        result.metrics_path = str(write_metrics(metrics, out / "metrics.csv"))
    logger.info("BD-BNN finished: student top1=%.2f, %.1f%% of binarized weights changed sign vs the teacher",
                result.final_top1, result.sign_flip_pct)
    return result
