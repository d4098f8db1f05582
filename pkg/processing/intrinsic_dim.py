"""
Nearest-neighbor intrinsic dimension estimation and the empirical-Bayes plug-in.

Per query point x the estimate is
    log 2 / (log r_k(x) - log r_ceil(k/2)(x))
with r_j(x) the distance to the j-th nearest other sample.
"""

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.spatial.distance import cdist

from processing.bandwidth import BandwidthPrior
from processing.dataset import Dataset
from utils.logger import logger
from utils.validators import NumericalError, ValidationError, validate_int_range, validate_matrix

MIN_SAMPLES = 8
DEFAULT_MAX_QUERIES = 100


@dataclass(frozen=True)
class DimensionEstimate:
    """Raw and rounded intrinsic dimension with per-query diagnostics."""
    d_hat_raw: float
    d_hat_rounded: int
    k_used: int
    n_query_points: int
    per_query_values: tuple

    def to_dict(self) -> dict:
        return {
            "d_hat_raw": self.d_hat_raw,
            "d_hat_rounded": self.d_hat_rounded,
            "k": self.k_used,
            "n_queries": self.n_query_points,
        }


def default_k(n: int) -> int:
    """ceil(sqrt(n)), at least 2 and at most n - 1."""
    return int(min(max(2, math.ceil(math.sqrt(n))), n - 1))


def _sorted_neighbor_distances(X: np.ndarray, query_idx: np.ndarray) -> np.ndarray:
    """Row i: distances from X[query_idx[i]] to every other row, ascending.

    A stable sort puts ties in row-index order.
    """
    D = cdist(X[query_idx], X)
    D[np.arange(len(query_idx)), query_idx] = np.inf  # exclude self
    order = np.argsort(D, axis=1, kind="stable")
    return np.take_along_axis(D, order, axis=1)[:, :-1]


def knn_radius(X, query_idx: int, k: int) -> float:
    """
    Distance from row query_idx to its k-th nearest other row.

    Raises:
        ValidationError: k outside 1..n-1, or a zero radius (duplicate points)
    """
    X = validate_matrix(X, "X", min_rows=2)
    n = X.shape[0]
    validate_int_range(query_idx, "query_idx", 0, n - 1)
    validate_int_range(k, "k", 1, n - 1)
    r = float(_sorted_neighbor_distances(X, np.array([query_idx]))[0, k - 1])
    if r == 0.0:
        raise ValidationError(
            f"Row {query_idx} has {k} or more duplicates; its {k}-NN radius is 0"
        )
    return r


class DimensionEstimator:
    """
    Median-over-queries nearest-neighbor dimension estimator.

    With single_query=True only row 0 is used, which is the estimator in its
    original one-point form.
    """

    def __init__(self, k: Optional[int] = None, n_queries: Optional[int] = None,
                 seed: int = 0, single_query: bool = False):
        self.k = k
        self.n_queries = n_queries
        self.seed = int(seed)
        self.single_query = single_query

    def estimate(self, X) -> DimensionEstimate:
        X = validate_matrix(X, "X")
        n = X.shape[0]
        if n < MIN_SAMPLES:
            raise ValidationError(f"Dimension estimation needs n >= {MIN_SAMPLES}, got n={n}")

        k = default_k(n) if self.k is None else validate_int_range(self.k, "k", 2, n - 1)
        k_half = math.ceil(k / 2)

        if self.single_query:
            queries = np.array([0])
        else:
            m = min(n, DEFAULT_MAX_QUERIES) if self.n_queries is None else \
                validate_int_range(self.n_queries, "n_queries", 1, n)
            rng = np.random.default_rng(self.seed)
            queries = np.sort(rng.choice(n, size=m, replace=False))

        radii = _sorted_neighbor_distances(X, queries)
        r_k = radii[:, k - 1]
        r_half = radii[:, k_half - 1]

        # Queries with log(0) or a zero log-ratio are dropped
        valid = (r_half > 0) & (r_k > r_half)
        if not np.all(valid):
            logger.warning(
                f"Dropped {int((~valid).sum())} of {len(queries)} dimension queries with degenerate radii"
            )
        if not np.any(valid):
            raise NumericalError("All dimension queries are degenerate (duplicate points)", {"k": k})

        values = math.log(2.0) / (np.log(r_k[valid]) - np.log(r_half[valid]))
        d_raw = float(np.median(values))
        d_rounded = max(1, int(math.floor(d_raw + 0.5)))
        return DimensionEstimate(
            d_hat_raw=d_raw,
            d_hat_rounded=d_rounded,
            k_used=k,
            n_query_points=int(valid.sum()),
            per_query_values=tuple(float(v) for v in values),
        )


def estimate_dimension(X, k: Optional[int] = None, n_queries: Optional[int] = None,
                       seed: int = 0, single_query: bool = False) -> DimensionEstimate:
    """Estimate the intrinsic dimension of the rows of X; see DimensionEstimator."""
    return DimensionEstimator(k, n_queries, seed, single_query).estimate(X)


def empirical_bayes_prior(ds: Dataset, a0: float = 1.0, b0: float = 1.0,
                          n_queries: Optional[int] = None, seed: int = 0,
                          k: Optional[int] = None) -> BandwidthPrior:
    """Bandwidth prior with d set to the rounded dimension estimate of the predictors."""
    est = estimate_dimension(ds.predictors, k=k, n_queries=n_queries, seed=seed)
    logger.info(f"Estimated intrinsic dimension {est.d_hat_raw:.3f} -> d={est.d_hat_rounded}")
    return BandwidthPrior(a0=a0, b0=b0, d=est.d_hat_rounded)
