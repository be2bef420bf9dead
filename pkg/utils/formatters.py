"""Formatting utilities."""
from typing import Optional, Union

Number = Union[float, int]


def format_pct(value: Optional[Number], precision: int = 2) -> str:
    """Format number as percentage."""
    if value is None:
        return "N/A"
    return f"{float(value):.{precision}f}%"


def format_bytes(value: Optional[Number]) -> str:
    """Format a byte count (1.5 KiB, 2.0 MiB, ...)."""
    if value is None:
        return "N/A"
    value = float(value)
    for unit in ("B", "KiB", "MiB", "GiB"):
        if abs(value) < 1024 or unit == "GiB":
            return f"{value:.0f} {unit}" if unit == "B" else f"{value:.1f} {unit}"
        value /= 1024
    return f"{value:.1f} GiB"


def format_duration_ns(value: Optional[Number]) -> str:
    if value is None:
        return "N/A"
    value = float(value)
    if value >= 1e9:
        return f"{value / 1e9:.2f} s"
    elif value >= 1e6:
        return f"{value / 1e6:.2f} ms"
    elif value >= 1e3:
        return f"{value / 1e3:.2f} us"
    else:
        return f"{value:.0f} ns"


def format_loss_terms(terms: dict, precision: int = 4) -> str:
    """'ce=0.6931 kurtosis=0.0123' from a name -> value mapping (None values skipped)."""
    return " ".join(f"{name}={value:.{precision}f}" for name, value in terms.items() if value is not None)
