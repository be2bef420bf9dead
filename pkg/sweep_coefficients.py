"""
Grid sweep of the kurtosis coefficient (lambda) and the WDM weight (alpha_wdm).

    python sweep_coefficients.py --config configs/desk.toml --lambdas 1e-4 1e-3 1e-2 --alphas 0.5 1 2

The teacher is trained once per lambda value and reused for every alpha.
Results go to <out>/sweep.csv, one row per grid point.
"""
import argparse
import itertools
import logging
from pathlib import Path
from typing import Iterable, Optional

import pandas as pd

from config import load_config, settings
from data_loader import load_dataset
from models.config import TrainConfig
from models.dataset import Dataset
from training import run_bdbnn, train_teacher
from utils.log import configure_logging

logger = logging.getLogger(__name__)

SWEEP_COLUMNS = ["lambda", "alpha_wdm", "seed", "top1", "mean_kurtosis", "mean_cosine", "sign_flip_pct"]


def with_coefficients(cfg: TrainConfig, lam: float, alpha: float) -> TrainConfig:
    data = cfg.model_dump(mode="json", by_alias=True)
    data["kurtosis"]["lambda"] = lam
    data["wdm"]["alpha_wdm"] = alpha
    return TrainConfig.model_validate(data)


def sweep(
    cfg: TrainConfig,
    lambdas: Iterable[float],
    alphas: Iterable[float],
    train: Dataset,
    test: Optional[Dataset] = None,
    out_dir: Optional[Path] = None,
) -> pd.DataFrame:
    rows = []
    alphas = list(alphas)
    for lam in lambdas:
        teacher = None
        for alpha in alphas:
            point = with_coefficients(cfg, lam, alpha)
            if teacher is None:
                teacher = train_teacher(point, train, test)
            result = run_bdbnn(point, train, test, teacher=teacher)
            last = result.metrics[-1]
            rows.append({
                "lambda": lam,
                "alpha_wdm": alpha,
                "seed": cfg.seed,
                "top1": last.top1,
                "mean_kurtosis": last.mean_kurtosis,
                "mean_cosine": last.mean_cosine,
                "sign_flip_pct": result.sign_flip_pct,
            })
            logger.info("lambda=%g alpha_wdm=%g: top1=%.2f", lam, alpha, last.top1)

    frame = pd.DataFrame(rows, columns=SWEEP_COLUMNS)
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        frame.to_csv(out_dir / "sweep.csv", index=False)
    return frame


def main() -> None:
    parser = argparse.ArgumentParser(description="Sweep lambda and alpha_wdm")
    parser.add_argument("--config")
    parser.add_argument("--recipe", default=None)
    parser.add_argument("--lambdas", type=float, nargs="+", default=[1e-4, 1e-3, 1e-2])
    parser.add_argument("--alphas", type=float, nargs="+", default=[0.5, 1.0, 2.0])
    parser.add_argument("--out", default=None)
    args = parser.parse_args()

    configure_logging(settings.log_level)
    cfg = load_config(args.config, recipe_name=args.recipe or (None if args.config else "desk"))
    data_dir = cfg.data.data_dir
    train = load_dataset(cfg.data.dataset, "train", data_dir, cfg.data.subset, cfg.precision)
    test = load_dataset(cfg.data.dataset, "test", data_dir, cfg.data.test_subset, cfg.precision)
    out = Path(args.out) if args.out else Path(settings.artifact_dir) / "sweep"
    frame = sweep(cfg, args.lambdas, args.alphas, train, test, out)
    print(frame.to_string(index=False))


if __name__ == "__main__":
    main()
