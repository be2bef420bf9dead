"""
Abstract base analyzer - shared loading and histogram helpers for checkpoint reports.
"""
from abc import ABC, abstractmethod
from pathlib import Path
from typing import Any, Dict, Optional, Tuple, Union

import numpy as np
import pandas as pd

from models.analysis_output import HISTOGRAM_COLUMNS
from networks.graph import ModelGraph
from training.checkpoint import Checkpoint

CheckpointLike = Union[Checkpoint, str, Path]


def as_checkpoint(source: CheckpointLike) -> Checkpoint:
    return source if isinstance(source, Checkpoint) else Checkpoint.load(source)


class BaseAnalyzer(ABC):
    """
    Base class for analyzers that read one checkpoint and write report files.

    Every report is plain CSV or flat binary so any plotting tool can consume it.
    """

    def __init__(self, checkpoint: CheckpointLike, config: Optional[Dict[str, Any]] = None):
        self.checkpoint = as_checkpoint(checkpoint)
        self.config = config or {}
        self._model: Optional[ModelGraph] = None

    @property
    def model(self) -> ModelGraph:
        if self._model is None:
            self._model = self.checkpoint.to_model()
        return self._model

    @abstractmethod
    def analyze(self, out_dir: Union[str, Path]) -> Any:
        """Run the analysis and write its files under out_dir."""
        pass

    # Shared analysis methods

    def histogram(self, w: np.ndarray, bins: int, support: Optional[Tuple[float, float]] = None) -> pd.DataFrame:
        """
        Equal-width histogram with exactly `bins` rows.

        Without an explicit support the range is symmetric, [-max|w|, max|w|].
        """
        w = np.asarray(w, dtype=np.float64).ravel()
        if support is None:
            extent = float(np.max(np.abs(w))) if w.size else 1.0
            support = (-extent, extent) if extent > 0 else (-1.0, 1.0)
        counts, edges = np.histogram(w, bins=bins, range=support)
        centers = 0.5 * (edges[:-1] + edges[1:])
        return pd.DataFrame({HISTOGRAM_COLUMNS[0]: centers, HISTOGRAM_COLUMNS[1]: counts})

    def _write_csv(self, frame: pd.DataFrame, path: Path) -> str:
        path.parent.mkdir(parents=True, exist_ok=True)
        frame.to_csv(path, index=False)
        return str(path)

    @staticmethod
    def _safe_name(layer_id: str) -> str:
        return layer_id.replace("/", "_")
