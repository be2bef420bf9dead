"""
Exception hierarchy - every failure carries the CLI exit category it maps to.
"""
from typing import Optional


class BdbnnError(Exception):
    """Base class for all toolkit errors."""
    exit_code: int = 1


class ShapeError(BdbnnError, ValueError):
    """Shape, extent or convolution geometry mismatch."""
    exit_code = 1


class NonFiniteError(BdbnnError, ArithmeticError):
    """An op produced NaN or Inf."""
    exit_code = 4


class DivergenceError(BdbnnError, ArithmeticError):
    """Training loss became non-finite. The model state is dumped before raising."""
    exit_code = 4

    def __init__(self, message: str, dump_path: Optional[str] = None):
        super().__init__(message)
        self.dump_path = dump_path


class DegenerateDistributionError(BdbnnError, ValueError):
    """Zero-variance weights: kurtosis is undefined."""
    exit_code = 4


class TopologyError(BdbnnError, ValueError):
    """Two models (teacher/student, checkpoint/baseline) do not share layer topology."""
    exit_code = 1


class FormatError(BdbnnError, ValueError):
    """Malformed dataset, checkpoint or export bytes."""
    exit_code = 3

    def __init__(self, message: str, offset: Optional[int] = None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class ConfigError(BdbnnError, ValueError):
    """Invalid configuration. The message names the offending key."""
    exit_code = 2

    def __init__(self, message: str, key: Optional[str] = None):
        if key is not None:
            message = f"invalid config key '{key}': {message}"
        super().__init__(message)
        self.key = key


class ArtifactNotFoundError(BdbnnError, FileNotFoundError):
    """A checkpoint, export or dataset file is missing."""
    exit_code = 3

    def __init__(self, path: str, what: str = "file"):
        super().__init__(f"{what} not found: {path}")
        self.path = str(path)
