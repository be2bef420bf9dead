"""
Ablation suites over loss components and teacher/student regularization.

components:       BNN | BNN+WDR | BNN+WDR+KD | BNN+WDR+WDM
teacher-student:  teacher {FP, FP+WDR} x student {BNN, BNN+WDR}, both distilled with WDM

Every variant runs the same three stages (activation-only warm-up, full-binary
warm-up, final stage) so epoch budgets match; only the loss terms differ.
"""
import logging
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Tuple, Union

import pandas as pd

from models.base import ForwardMode, LossTerm
from models.config import StageSpec, TrainConfig
from models.dataset import Dataset
from training.checkpoint import Checkpoint
from training.pipeline import run_bdbnn
from training.trainer import TEACHER_STAGE, train_teacher

logger = logging.getLogger(__name__)

SUITES = ("components", "teacher-student")

CE, KURT, WDM, KD = LossTerm.CE, LossTerm.KURTOSIS, LossTerm.WDM, LossTerm.KD


def _stages(warmup: List[LossTerm], final: List[LossTerm]) -> List[StageSpec]:
    teacher = TEACHER_STAGE if (WDM in final or KD in final) else None
    return [
        StageSpec(name="bnn-act", mode=ForwardMode.BINARY_ACT_ONLY, losses=warmup),
        StageSpec(name="bnn-full", mode=ForwardMode.FULL_BINARY, losses=warmup),
        StageSpec(name="final", mode=ForwardMode.FULL_BINARY, losses=final, teacher=teacher),
    ]


def suite_variants(suite: str) -> List[Tuple[str, str, List[StageSpec]]]:
    """(variant name, teacher kind, stage plan); teacher kind is 'fp' or 'fp+wdr'."""
    if suite == "components":
        return [
            ("BNN", "fp+wdr", _stages([CE], [CE])),
            ("BNN+WDR", "fp+wdr", _stages([CE, KURT], [CE, KURT])),
            ("BNN+WDR+KD", "fp+wdr", _stages([CE, KURT], [CE, KURT, KD])),
            ("BNN+WDR+WDM", "fp+wdr", _stages([CE, KURT], [CE, KURT, WDM])),
        ]
    if suite == "teacher-student":
        out = []
        for teacher_kind, teacher_label in (("fp", "FP"), ("fp+wdr", "FP+WDR")):
            out.append((f"{teacher_label}/BNN", teacher_kind, _stages([CE], [CE, WDM])))
            out.append((f"{teacher_label}/BNN+WDR", teacher_kind, _stages([CE, KURT], [CE, KURT, WDM])))
        return out
    raise ValueError(f"unknown ablation suite '{suite}', expected one of {SUITES}")


def variant_config(base: TrainConfig, teacher_kind: str, stages: List[StageSpec], seed: int) -> TrainConfig:
    data = base.model_dump(by_alias=True)
    data["seed"] = seed
    data["stages"] = [stage.model_dump() for stage in stages]
    if teacher_kind == "fp":
        data["teacher_kurtosis"]["lambda"] = 0.0
    return TrainConfig.model_validate(data)


def run_ablation(
    base: TrainConfig,
    suite: str,
    seeds: Iterable[int],
    train: Dataset,
    test: Optional[Dataset] = None,
    out_dir: Optional[Union[str, Path]] = None,
    quiet: bool = True,
) -> pd.DataFrame:
    """
    Final test top-1 of every (variant, seed). Teachers are trained once per
    (teacher kind, seed) and shared by the variants that use them. Writes
    ablation_<suite>.csv and ablation_<suite>_summary.csv when out_dir is set.
    """
    variants = suite_variants(suite)
    teachers: Dict[Tuple[str, int], Checkpoint] = {}
    rows = []
    for seed in seeds:
        for name, teacher_kind, stages in variants:
            cfg = variant_config(base, teacher_kind, stages, seed)
            key = (teacher_kind, seed)
            if key not in teachers:
                teachers[key] = train_teacher(cfg, train, test, quiet=quiet)
            result = run_bdbnn(cfg, train, test, teacher=teachers[key], quiet=quiet)
            rows.append({
                "suite": suite,
                "variant": name,
                "seed": seed,
                "top1": result.final_top1,
                "mean_cosine": result.metrics[-1].mean_cosine if result.metrics else 0.0,
                "sign_flip_pct": result.sign_flip_pct,
            })
            logger.info("ablation %s seed=%d %s: top1=%.2f", suite, seed, name, result.final_top1)

    frame = pd.DataFrame(rows)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        frame.to_csv(out / f"ablation_{suite}.csv", index=False)
        summarize(frame).to_csv(out / f"ablation_{suite}_summary.csv", index=False)
    return frame


def summarize(frame: pd.DataFrame) -> pd.DataFrame:
    """Mean and std of top-1 per variant, in first-seen variant order."""
    order = list(dict.fromkeys(frame["variant"]))
    grouped = frame.groupby("variant", sort=False)["top1"].agg(["mean", "std", "count"]).reset_index()
    grouped["variant"] = pd.Categorical(grouped["variant"], categories=order, ordered=True)
    return grouped.sort_values("variant").rename(columns={"mean": "top1_mean", "std": "top1_std", "count": "seeds"})
