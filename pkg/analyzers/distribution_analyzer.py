"""
Weight distribution analyzer - per-layer histograms, kurtosis, binarization
cosine and (against a baseline) sign-flip percentages.
"""
import logging
from pathlib import Path
from typing import Any, Dict, Optional, Tuple, Union

import pandas as pd

from analyzers.base_analyzer import BaseAnalyzer, CheckpointLike, as_checkpoint
from models.analysis_output import AnalysisReport
from training.evaluation import layer_reports, overall_sign_flip, sign_flip_by_layer

logger = logging.getLogger(__name__)


class WeightDistributionAnalyzer(BaseAnalyzer):
    """
    Files written under out_dir:
        histograms/<layer>.csv   bin_center, count (one row per bin)
        layers.csv               one LayerReport row per weighted layer
        sign_flip.csv            layer_id, flipped, total, sign_flip_pct (baseline only)
    """

    def __init__(
        self,
        checkpoint: CheckpointLike,
        baseline: Optional[CheckpointLike] = None,
        bins: int = 64,
        support: Optional[Tuple[float, float]] = None,
        config: Optional[Dict[str, Any]] = None,
    ):
        super().__init__(checkpoint, config)
        if bins < 1:
            raise ValueError(f"bins must be positive, got {bins}")
        self.baseline = as_checkpoint(baseline) if baseline is not None else None
        self.bins = bins
        self.support = support

    def analyze(self, out_dir: Union[str, Path]) -> AnalysisReport:
        out_dir = Path(out_dir)
        model = self.model
        files: Dict[str, str] = {}

        for layer in model.weight_layers():
            frame = self.histogram(model.weight(layer.id).data, self.bins, self.support)
            files[f"histogram:{layer.id}"] = self._write_csv(frame, out_dir / "histograms" / f"{self._safe_name(layer.id)}.csv")

        layers = layer_reports(model, with_gradients=False)
        overall = None
        if self.baseline is not None:
            # Raises TopologyError before any flip is counted
            per_layer = sign_flip_by_layer(self.baseline.to_model(), model, binarized_only=False)
            for row in layers:
                flipped, total = per_layer[row.layer_id]
                row.sign_flip_pct = 100.0 * flipped / total if total else 0.0
            binarized = {row.layer_id for row in layers if row.binarized}
            scope = {k: v for k, v in per_layer.items() if k in binarized} or per_layer
            overall = overall_sign_flip(scope)
            flips = pd.DataFrame(
                [{"layer_id": k, "flipped": f, "total": n, "sign_flip_pct": 100.0 * f / n if n else 0.0}
                 for k, (f, n) in per_layer.items()]
            )
            files["sign_flip"] = self._write_csv(flips, out_dir / "sign_flip.csv")
            logger.info("Sign flips vs %s: %.2f%% overall", self.baseline.name, overall)

        files["layers"] = self._write_csv(pd.DataFrame([row.model_dump() for row in layers]), out_dir / "layers.csv")
        return AnalysisReport(
            checkpoint=self.checkpoint.name,
            baseline=self.baseline.name if self.baseline is not None else None,
            bins=self.bins,
            layers=layers,
            overall_sign_flip_pct=overall,
            files=files,
        )


def analyze(
    checkpoint: CheckpointLike,
    baseline: Optional[CheckpointLike] = None,
    out_dir: Union[str, Path] = "analysis",
    bins: int = 64,
) -> AnalysisReport:
    return WeightDistributionAnalyzer(checkpoint, baseline, bins).analyze(out_dir)
