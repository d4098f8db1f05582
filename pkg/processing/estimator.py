"""
Truncated Bayes estimator: average of posterior function draws clamped to [-tau, tau].
"""

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Iterator, List, Optional, Tuple

import numpy as np

from processing.bandwidth import BandwidthChain, ChainSummary
from processing.dataset import Dataset, EmpiricalNorm, ResponseScaling, empirical_norm, round_floats
from processing.kernel_gp import fit_gp, sample_posterior
from utils.validators import (
    NumericalError,
    ValidationError,
    validate_int_range,
    validate_positive,
)


@dataclass(frozen=True)
class TruncationLevel:
    """Upper bound tau assumed for sup|f0|."""
    tau: float

    def __post_init__(self):
        object.__setattr__(self, "tau", validate_positive(self.tau, "tau"))

    @classmethod
    def from_responses(cls, y: np.ndarray, factor: float = 2.0) -> "TruncationLevel":
        """Data-driven default tau = factor * max|y|."""
        bound = factor * float(np.max(np.abs(y)))
        return cls(bound if bound > 0 else 1.0)


@dataclass
class FitResult:
    """Truncated estimate at the training and query points."""
    estimate_at_train: np.ndarray
    estimate_at_query: np.ndarray
    n_function_draws: int
    chain_summary: ChainSummary
    truncation: TruncationLevel

    def to_dict(self) -> dict:
        return {
            "estimate_train": [float(v) for v in self.estimate_at_train],
            "estimate_query": [float(v) for v in self.estimate_at_query],
            "chain": self.chain_summary.to_dict(),
            "n_function_draws": int(self.n_function_draws),
            "tau": float(self.truncation.tau),
        }

    def to_json(self, precision: int = 12) -> str:
        return json.dumps(round_floats(self.to_dict(), precision), indent=2)


def truncate(v, tau: float):
    """Clamp to [-tau, tau]; works on scalars and arrays."""
    tau = validate_positive(tau, "tau")
    if np.ndim(v) == 0:
        return float(min(max(float(v), -tau), tau))
    return np.clip(v, -tau, tau)


def _retained_indices(chain: BandwidthChain, thin: int) -> np.ndarray:
    if len(chain) == 0:
        raise ValidationError("Bandwidth chain is empty")
    return np.arange(0, len(chain), thin)


def iter_function_draws(ds: Dataset, chain: BandwidthChain, query_x: Optional[np.ndarray],
                        draws_per_a: int = 1, thin: int = 10,
                        seed: int = 0) -> Iterator[Tuple[float, np.ndarray]]:
    """
    Yield (a, draws) for each retained bandwidth draw.

    draws has shape (draws_per_a, n + q): untruncated posterior function values
    at the training points followed by the query points, on the response scale.
    """
    for a, samples in _draw_batches(ds, chain, query_x, draws_per_a, thin, seed, workers=1):
        yield a, samples


def _draw_batches(ds: Dataset, chain: BandwidthChain, query_x: Optional[np.ndarray],
                  draws_per_a: int, thin: int, seed: int,
                  workers: int) -> List[Tuple[float, np.ndarray]]:
    if query_x is None:
        query_x = np.zeros((0, ds.dim))
    Q = np.asarray(query_x, dtype=float).reshape(-1, ds.dim)
    points = np.vstack([ds.predictors, Q])
    retained = _retained_indices(chain, thin)
    scaling = ResponseScaling.fit(ds.responses, chain.response_scaling)
    model_ds = Dataset(ds.predictors, scaling.forward(ds.responses))
    # One child stream per retained draw, independent of the pool size
    streams = np.random.SeedSequence(seed).spawn(len(retained))

    def draw_one(k: int) -> Tuple[float, np.ndarray]:
        i = retained[k]
        a = float(chain.draws_a[i])
        noise_var = scaling.noise_to_model(float(chain.draws_noise_var[i]))
        try:
            gp = fit_gp(model_ds, a, noise_var)
            g = sample_posterior(gp, points, np.random.default_rng(streams[k]), size=draws_per_a)
        except NumericalError as e:
            e.context.setdefault("a", a)
            raise
        return a, scaling.inverse(g)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(draw_one, range(len(retained))))
    return [draw_one(k) for k in range(len(retained))]


class TruncatedEstimator:
    """
    Builds the truncated Bayes estimate from a bandwidth chain.

    For every retained (thinned) bandwidth draw the GP is refitted and
    `draws_per_a` function draws are taken jointly at train and query points.
    Each draw is truncated pointwise before averaging.
    """

    def __init__(self, draws_per_a: int = 1, thin: int = 10, seed: int = 0, workers: int = 1):
        self.draws_per_a = validate_int_range(draws_per_a, "draws_per_a", 1)
        self.thin = validate_int_range(thin, "thin", 1)
        self.seed = int(seed)
        self.workers = validate_int_range(workers, "workers", 1)

    def estimate(self, ds: Dataset, chain: BandwidthChain, query_x: Optional[np.ndarray],
                 tau: TruncationLevel) -> FitResult:
        if query_x is None:
            query_x = np.zeros((0, ds.dim))
        Q = np.asarray(query_x, dtype=float)
        if Q.ndim == 1:
            Q = Q.reshape(-1, 1) if ds.dim == 1 else Q.reshape(1, -1)
        if Q.shape[1] != ds.dim:
            raise ValidationError(f"Query dimension {Q.shape[1]} does not match training dimension {ds.dim}")

        batches = _draw_batches(ds, chain, Q, self.draws_per_a, self.thin, self.seed, self.workers)

        # Fixed summation order keeps the result independent of the pool size
        total = np.zeros(ds.n + Q.shape[0])
        count = 0
        for _, samples in batches:
            total += truncate(samples, tau.tau).sum(axis=0)
            count += samples.shape[0]
        mean = total / count

        return FitResult(
            estimate_at_train=mean[:ds.n],
            estimate_at_query=mean[ds.n:],
            n_function_draws=count,
            chain_summary=chain.summary(),
            truncation=tau,
        )


def estimate(ds: Dataset, chain: BandwidthChain, query_x: Optional[np.ndarray],
             tau: TruncationLevel, draws_per_a: int = 1, thin: int = 10,
             seed: int = 0, workers: int = 1) -> FitResult:
    """Truncated Bayes estimate; see TruncatedEstimator."""
    return TruncatedEstimator(draws_per_a, thin, seed, workers).estimate(ds, chain, query_x, tau)


def evaluate(fit: FitResult, truth_at_points, points: str = "train") -> EmpiricalNorm:
    """
    Empirical norm between the estimate and the truth.

    Args:
        fit: Estimate
        truth_at_points: f0 at the same points
        points: "train", "query" or "all" (train followed by query)
    """
    if points == "train":
        est = fit.estimate_at_train
    elif points == "query":
        est = fit.estimate_at_query
    elif points == "all":
        est = np.concatenate([fit.estimate_at_train, fit.estimate_at_query])
    else:
        raise ValidationError(f"points must be 'train', 'query' or 'all', got: {points!r}")
    return empirical_norm(est, truth_at_points)
