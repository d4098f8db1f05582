"""
Data containers, CSV ingestion/emission, train/test splitting and empirical norms.
"""

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from utils.validators import (
    ValidationError,
    validate_data_path,
    validate_fraction,
    validate_matrix,
    validate_output_path,
    validate_same_length,
    validate_vector,
)

# 17 significant digits round-trip every double exactly
CSV_FLOAT_FORMAT = ".17g"

PathLike = Union[str, Path]


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.array(arr, dtype=float, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Dataset:
    """Predictors (n x D) and responses (n) of a regression problem."""
    predictors: np.ndarray
    responses: np.ndarray
    source_seed: Optional[int] = None

    def __post_init__(self):
        X = validate_matrix(self.predictors, "predictors")
        y = validate_vector(self.responses, "responses")
        if X.shape[0] != y.shape[0]:
            raise ValidationError(
                f"predictors have {X.shape[0]} rows but responses have {y.shape[0]} entries"
            )
        object.__setattr__(self, "predictors", _frozen(X))
        object.__setattr__(self, "responses", _frozen(y))

    @property
    def n(self) -> int:
        return self.predictors.shape[0]

    @property
    def dim(self) -> int:
        """Ambient dimension D."""
        return self.predictors.shape[1]

    def subset(self, indices: Sequence[int]) -> "Dataset":
        idx = np.asarray(indices, dtype=int)
        return Dataset(self.predictors[idx], self.responses[idx], self.source_seed)

    def with_predictors(self, predictors: np.ndarray) -> "Dataset":
        """Same responses on new predictor coordinates (e.g. an embedding)."""
        return Dataset(predictors, self.responses, self.source_seed)

    def standardized(self) -> "Dataset":
        """Columns centered and scaled to unit variance (constant columns only centered).

        Changes the ambient geometry, so it is only reachable through an
        explicit CLI flag.
        """
        X = self.predictors
        sd = X.std(axis=0)
        sd[sd == 0] = 1.0
        return self.with_predictors((X - X.mean(axis=0)) / sd)


@dataclass(frozen=True)
class SplitIndices:
    """Disjoint train/test row indices of one random split."""
    train_idx: tuple
    test_idx: tuple
    seed: int

    @property
    def n_train(self) -> int:
        return len(self.train_idx)

    @property
    def n_test(self) -> int:
        return len(self.test_idx)


@dataclass(frozen=True)
class EmpiricalNorm:
    """Root-mean-square difference of two functions over evaluation points."""
    value: float

    def __float__(self) -> float:
        return self.value


@dataclass(frozen=True)
class ResponseScaling:
    """Affine map between observed responses and the unit-scale GP model.

    The GP prior is zero-mean with unit variance; responses are modelled as
    offset + scale * g. Noise variances convert by scale**2.
    """
    offset: float = 0.0
    scale: float = 1.0
    mode: str = "none"

    MODES = ("none", "center", "standardize")

    @classmethod
    def fit(cls, y: np.ndarray, mode: str = "standardize") -> "ResponseScaling":
        if mode not in cls.MODES:
            raise ValidationError(f"response scaling must be one of {cls.MODES}, got: {mode!r}")
        y = np.asarray(y, dtype=float)
        if mode == "none":
            return cls(0.0, 1.0, mode)
        offset = float(y.mean())
        scale = 1.0
        if mode == "standardize":
            sd = float(y.std())
            scale = sd if sd > 0 else 1.0
        return cls(offset, scale, mode)

    def forward(self, y: np.ndarray) -> np.ndarray:
        return (np.asarray(y, dtype=float) - self.offset) / self.scale

    def inverse(self, g: np.ndarray) -> np.ndarray:
        return self.offset + self.scale * np.asarray(g, dtype=float)

    def noise_to_model(self, noise_var: float) -> float:
        return noise_var / self.scale ** 2

    def noise_from_model(self, noise_var: float) -> float:
        return noise_var * self.scale ** 2


def load_csv(path: PathLike) -> Dataset:
    """
    Read a dataset from CSV with header `x1,...,xD,y`.

    Args:
        path: CSV file path

    Returns:
        Dataset with columns in file order

    Raises:
        ValidationError: Missing file, bad header, ragged row, non-numeric
            cell or no data rows
    """
    data_path = validate_data_path(str(path))

    with open(data_path, 'r', encoding='utf-8', newline='') as f:
        reader = csv.reader(f)
        try:
            header = next(reader)
        except StopIteration:
            raise ValidationError(f"{data_path}: empty file (no header row)")

        header = [h.strip() for h in header]
        if len(header) < 2:
            raise ValidationError(f"{data_path}: header needs at least one predictor column and 'y'")
        width = len(header)
        expected = [f"x{j + 1}" for j in range(width - 1)] + ["y"]
        if header != expected:
            raise ValidationError(
                f"{data_path}: bad header {','.join(header)!r}, expected {','.join(expected)!r}"
            )

        rows = []
        for line_no, row in enumerate(reader, start=2):
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) != width:
                raise ValidationError(
                    f"{data_path}: ragged row at line {line_no}: expected {width} cells, got {len(row)}"
                )
            values = []
            for col, cell in enumerate(row):
                try:
                    value = float(cell)
                except ValueError:
                    raise ValidationError(
                        f"{data_path}: non-numeric cell {cell!r} at line {line_no}, column {header[col]}"
                    )
                if not math.isfinite(value):
                    raise ValidationError(
                        f"{data_path}: non-finite cell {cell!r} at line {line_no}, column {header[col]}"
                    )
                values.append(value)
            rows.append(values)

    if not rows:
        raise ValidationError(f"{data_path}: empty dataset")

    table = np.array(rows, dtype=float)
    return Dataset(table[:, :-1], table[:, -1])


def save_csv(ds: Dataset, path: PathLike) -> Path:
    """Write a dataset as CSV with header `x1,...,xD,y`."""
    out = validate_output_path(str(path), (".csv",))
    header = [f"x{j + 1}" for j in range(ds.dim)] + ["y"]
    write_table(out, header, np.column_stack([ds.predictors, ds.responses]))
    return out


def write_table(path: PathLike, header: Sequence[str], table: np.ndarray) -> None:
    """Write a numeric table as CSV with full double precision, LF line endings."""
    with open(path, 'w', encoding='utf-8', newline='') as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(header)
        for row in np.atleast_2d(table):
            writer.writerow([format(float(v), CSV_FLOAT_FORMAT) for v in row])


def split(ds: Dataset, test_fraction: float, seed: int) -> SplitIndices:
    """
    Random train/test split.

    Args:
        ds: Dataset to split
        test_fraction: Fraction of rows assigned to the test side, in (0, 1)
        seed: PRNG seed

    Returns:
        Sorted, disjoint index sets covering 0..n-1

    Raises:
        ValidationError: n < 2 or a side would be empty
    """
    test_fraction = validate_fraction(test_fraction, "test_fraction")
    n = ds.n if isinstance(ds, Dataset) else int(ds)
    if n < 2:
        raise ValidationError(f"Cannot split fewer than 2 rows (n={n})")

    n_test = int(math.floor(test_fraction * n + 0.5))
    if n_test < 1 or n_test > n - 1:
        raise ValidationError(
            f"test_fraction={test_fraction} leaves an empty side for n={n} (test size {n_test})"
        )

    # Fisher-Yates shuffle on a PCG64 stream
    perm = np.random.default_rng(seed).permutation(n)
    test_idx = tuple(int(i) for i in np.sort(perm[:n_test]))
    train_idx = tuple(int(i) for i in np.sort(perm[n_test:]))
    return SplitIndices(train_idx=train_idx, test_idx=test_idx, seed=int(seed))


def empirical_norm(f_vals: Sequence[float], g_vals: Sequence[float]) -> EmpiricalNorm:
    """sqrt(mean((f - g)^2)) over the evaluation points."""
    f = validate_vector(f_vals, "f_vals")
    g = validate_vector(g_vals, "g_vals")
    validate_same_length(f, g, "function values")
    diff = f - g
    return EmpiricalNorm(float(np.sqrt(np.mean(diff * diff))))


def round_floats(value, precision: int = 12):
    """Round every float in a nested JSON-ready structure to `precision` significant digits."""
    if isinstance(value, float):
        if not math.isfinite(value):
            return None if math.isnan(value) else ("inf" if value > 0 else "-inf")
        return float(format(value, f".{precision}g"))
    if isinstance(value, dict):
        return {k: round_floats(v, precision) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [round_floats(v, precision) for v in value]
    if isinstance(value, np.generic):
        return round_floats(value.item(), precision)
    if isinstance(value, np.ndarray):
        return round_floats(value.tolist(), precision)
    return value
