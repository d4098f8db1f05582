"""
Input validation utilities.
"""

import math
import os
from pathlib import Path
from typing import Any, Optional, Sequence

import numpy as np

SUPPORTED_DATA_FORMATS = (".csv",)
SUPPORTED_REPORT_FORMATS = (".json", ".csv")


class ValidationError(Exception):
    """Raised when validation fails."""
    pass


class NumericalError(Exception):
    """Raised when a numerical routine fails (factorization, degenerate estimates).

    Attributes:
        context: Parameters in effect when the failure happened, e.g. the
            bandwidth and the last jitter tried.
    """

    def __init__(self, message: str, context: Optional[dict] = None):
        super().__init__(message)
        self.context = dict(context or {})

    def __str__(self) -> str:
        base = super().__str__()
        if not self.context:
            return base
        details = ", ".join(f"{k}={v:.6g}" if isinstance(v, float) else f"{k}={v}"
                            for k, v in self.context.items())
        return f"{base} ({details})"


def validate_data_path(path: str) -> Path:
    """
    Validate that a data file exists and has a supported format.

    Args:
        path: Path to the CSV file

    Returns:
        Validated Path object

    Raises:
        ValidationError: If validation fails
    """
    if not path:
        raise ValidationError("No data file specified")

    data_path = Path(path)

    if not data_path.exists():
        raise ValidationError(f"Data file not found: {path}")

    if not data_path.is_file():
        raise ValidationError(f"Path is not a file: {path}")

    if data_path.suffix.lower() not in SUPPORTED_DATA_FORMATS:
        raise ValidationError(
            f"Unsupported data format: {data_path.suffix}\n"
            f"Supported formats: {', '.join(SUPPORTED_DATA_FORMATS)}"
        )

    return data_path


def validate_output_path(path: str, formats: Sequence[str] = SUPPORTED_REPORT_FORMATS) -> Path:
    """
    Validate output path for saving.

    Args:
        path: Output path
        formats: Accepted file suffixes

    Returns:
        Validated Path object

    Raises:
        ValidationError: If validation fails
    """
    if not path:
        raise ValidationError("No output path specified")

    output_path = Path(path)

    # Check directory exists or can be created
    parent = output_path.parent
    if not parent.exists():
        try:
            parent.mkdir(parents=True, exist_ok=True)
        except OSError as e:
            raise ValidationError(f"Cannot create output directory: {e}")

    if not os.access(parent, os.W_OK):
        raise ValidationError(f"No write permission for: {parent}")

    if output_path.suffix.lower() not in formats:
        raise ValidationError(
            f"Output must be one of {', '.join(formats)}.\n"
            f"Got: {output_path.suffix or '(no suffix)'}"
        )

    return output_path


def validate_matrix(values: Any, name: str = "matrix", min_rows: int = 1) -> np.ndarray:
    """
    Coerce to a finite 2-D float array.

    Raises:
        ValidationError: On wrong rank, too few rows or non-finite entries
    """
    try:
        arr = np.asarray(values, dtype=float)
    except (TypeError, ValueError) as e:
        raise ValidationError(f"{name} is not numeric: {e}")
    if arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    if arr.ndim != 2:
        raise ValidationError(f"{name} must be 2-dimensional, got shape {arr.shape}")
    if arr.shape[0] < min_rows or arr.shape[1] < 1:
        raise ValidationError(f"{name} needs at least {min_rows} row(s) and 1 column, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        bad = np.argwhere(~np.isfinite(arr))[0]
        raise ValidationError(f"{name} has a non-finite entry at row {bad[0]}, column {bad[1]}")
    return arr


def validate_vector(values: Any, name: str = "vector", min_length: int = 1) -> np.ndarray:
    """Coerce to a finite 1-D float array of at least `min_length` entries."""
    try:
        arr = np.asarray(values, dtype=float).ravel()
    except (TypeError, ValueError) as e:
        raise ValidationError(f"{name} is not numeric: {e}")
    if arr.size < min_length:
        raise ValidationError(f"{name} needs at least {min_length} entries, got {arr.size}")
    if not np.all(np.isfinite(arr)):
        bad = int(np.argwhere(~np.isfinite(arr))[0][0])
        raise ValidationError(f"{name} has a non-finite entry at index {bad}")
    return arr


def validate_same_length(a: Sequence, b: Sequence, what: str = "vectors") -> None:
    if len(a) != len(b):
        raise ValidationError(f"Length mismatch between {what}: {len(a)} vs {len(b)}")


def validate_positive(value: float, name: str, allow_zero: bool = False) -> float:
    """Validate a finite positive (or nonnegative) real."""
    try:
        value = float(value)
    except (TypeError, ValueError):
        raise ValidationError(f"{name} must be a number, got: {value!r}")
    if not math.isfinite(value):
        raise ValidationError(f"{name} must be finite, got: {value}")
    if allow_zero:
        if value < 0:
            raise ValidationError(f"{name} must be >= 0, got: {value}")
    elif value <= 0:
        raise ValidationError(f"{name} must be > 0, got: {value}")
    return value


def validate_fraction(value: float, name: str = "fraction") -> float:
    """Validate a real strictly inside (0, 1)."""
    value = validate_positive(value, name)
    if value >= 1:
        raise ValidationError(f"{name} must be in (0, 1), got: {value}")
    return value


def validate_int_range(value: int, name: str, low: int, high: Optional[int] = None) -> int:
    """Validate an integer in [low, high] (high unbounded if None)."""
    if isinstance(value, bool) or int(value) != value:
        raise ValidationError(f"{name} must be an integer, got: {value!r}")
    value = int(value)
    if value < low or (high is not None and value > high):
        bound = f"[{low}, {high}]" if high is not None else f">= {low}"
        raise ValidationError(f"{name} must be {bound}, got: {value}")
    return value
