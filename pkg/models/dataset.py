"""
In-memory image classification dataset.
"""
from typing import Dict, List

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from models.base import Split


class Normalization(BaseModel):
    """Per-channel constants applied once at load time: x = (pixel / 255 - mean) / std."""
    mean: List[float]
    std: List[float]


class Dataset(BaseModel):
    """
    images: float array [N, C, H, W], already normalized.
    labels: int64 vector of length N with values in [0, num_classes).
    """
    model_config = ConfigDict(arbitrary_types_allowed=True)

    name: str
    split: Split
    images: np.ndarray
    labels: np.ndarray
    num_classes: int = Field(..., ge=2)
    normalization: Normalization

    @model_validator(mode="after")
    def _check_arrays(self) -> "Dataset":
        if self.images.ndim != 4:
            raise ValueError(f"images must be [N, C, H, W], got shape {self.images.shape}")
        if self.labels.shape != (self.images.shape[0],):
            raise ValueError(f"{self.labels.shape[0]} labels for {self.images.shape[0]} images")
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= self.num_classes):
            raise ValueError(f"labels must lie in [0, {self.num_classes})")
        if len(self.normalization.mean) != self.images.shape[1]:
            raise ValueError("normalization constants do not match the channel count")
        return self

    def __len__(self) -> int:
        return int(self.images.shape[0])

    @property
    def sample_shape(self) -> tuple:
        return tuple(self.images.shape[1:])

    def subset(self, n: int) -> "Dataset":
        """The first n samples (all of them when n >= len)."""
        n = min(int(n), len(self))
        return self.model_copy(update={"images": self.images[:n], "labels": self.labels[:n]})

    def metadata(self) -> Dict[str, object]:
        return {
            "name": self.name,
            "split": self.split.value,
            "num_classes": self.num_classes,
            "sample_shape": list(self.sample_shape),
            "normalization": self.normalization.model_dump(),
        }
