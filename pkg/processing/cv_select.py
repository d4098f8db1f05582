"""
Holdout cross-validation over the dimension exponent d of the bandwidth prior.

For k = 1..d_max the truncated estimator under A^k ~ Ga(a0, b0) is fitted on
the training half and scored by its mean squared prediction error on the test
half; the smallest-MSPE candidate is selected, ties going to the smaller k.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, List, Optional, Sequence

import numpy as np

from processing.bandwidth import BandwidthPrior, McmcConfig, run_chain
from processing.dataset import Dataset, SplitIndices, split
from processing.estimator import FitResult, TruncationLevel, estimate
from utils.logger import logger
from utils.validators import (
    NumericalError,
    ValidationError,
    validate_fraction,
    validate_int_range,
    validate_same_length,
    validate_vector,
)

# (train, test predictors, candidate dimension, seed) -> fit with test-point estimates as query
CandidateFitter = Callable[[Dataset, np.ndarray, int, int], FitResult]


@dataclass(frozen=True)
class CvConfig:
    """Settings for dimension selection."""
    d_max: int = 20
    test_fraction: float = 0.5
    mcmc: McmcConfig = field(default_factory=McmcConfig)
    tau: Optional[TruncationLevel] = None  # None: 2 max|y| of the training half
    a0: float = 1.0
    b0: float = 1.0
    seed: int = 0
    n_splits: int = 1
    refit_all: bool = False
    thin: int = 10
    draws_per_a: int = 1
    workers: int = 1

    def __post_init__(self):
        validate_int_range(self.d_max, "d_max", 1)
        validate_fraction(self.test_fraction, "test_fraction")
        validate_int_range(self.n_splits, "n_splits", 1)
        validate_int_range(self.workers, "workers", 1)


@dataclass
class CvResult:
    """MSPE per candidate dimension and the selected estimator."""
    mspe_per_dim: np.ndarray
    selected_dim: int
    final_fit: FitResult
    split: SplitIndices

    def to_dict(self) -> dict:
        return {
            "mspe": [float(v) for v in self.mspe_per_dim],
            "selected_dim": int(self.selected_dim),
        }


def mspe(estimates: Sequence[float], test_y: Sequence[float]) -> float:
    """Mean squared prediction error."""
    est = validate_vector(estimates, "estimates")
    y = validate_vector(test_y, "test_y")
    validate_same_length(est, y, "estimates and test responses")
    diff = est - y
    return float(np.mean(diff * diff))


def select_dimension(mspe_per_dim: Sequence[float]) -> int:
    """1-based argmin; ties go to the smallest dimension."""
    scores = np.asarray(mspe_per_dim, dtype=float)
    if scores.size == 0 or not np.any(np.isfinite(scores)):
        raise NumericalError("Every candidate dimension failed")
    return int(np.argmin(scores)) + 1  # np.argmin returns the first minimum


def gp_candidate_fitter(cfg: CvConfig) -> CandidateFitter:
    """Default candidate: bandwidth chain under A^k ~ Ga(a0, b0), then the truncated estimate."""

    def fit(train: Dataset, test_x: np.ndarray, dim: int, seed: int) -> FitResult:
        prior = BandwidthPrior(cfg.a0, cfg.b0, dim)
        mcmc = replace(cfg.mcmc, seed=seed)
        chain = run_chain(train, prior, mcmc)
        tau = cfg.tau or TruncationLevel.from_responses(train.responses)
        return estimate(train, chain, test_x, tau, cfg.draws_per_a, cfg.thin, seed)

    return fit


class CrossValidator:
    """
    Runs the split / fit / score / select procedure.

    A custom `fitter` replaces the GP candidates (used by tests and by
    callers comparing other estimators).
    """

    def __init__(self, config: Optional[CvConfig] = None, fitter: Optional[CandidateFitter] = None):
        self.config = config or CvConfig()
        self.fitter = fitter or gp_candidate_fitter(self.config)

    def _split_seeds(self) -> List[int]:
        seq = np.random.SeedSequence(self.config.seed)
        return [int(s.generate_state(1)[0]) for s in seq.spawn(self.config.n_splits)]

    def _score_split(self, ds: Dataset, split_seed: int):
        cfg = self.config
        if ds.n < 2:
            raise ValidationError(f"Cross-validation needs n >= 2, got n={ds.n}")
        idx = split(ds, cfg.test_fraction, split_seed)
        train, test = ds.subset(idx.train_idx), ds.subset(idx.test_idx)

        def score(dim: int):
            try:
                fit = self.fitter(train, test.predictors, dim, split_seed)
                return mspe(fit.estimate_at_query, test.responses), fit
            except (NumericalError, ValidationError) as e:
                logger.warning(f"CV candidate d={dim} failed: {e}")
                return float("inf"), None

        dims = list(range(1, cfg.d_max + 1))
        if cfg.workers > 1:
            with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
                results = list(pool.map(score, dims))
        else:
            results = [score(dim) for dim in dims]
        scores = np.array([r[0] for r in results])
        fits = [r[1] for r in results]
        return idx, scores, fits

    def run(self, ds: Dataset) -> CvResult:
        """
        Select the dimension.

        Returns:
            CvResult; final_fit is the selected candidate fitted on the first
            split's training half (or on all rows when refit_all is set)

        Raises:
            NumericalError: Every candidate failed
        """
        cfg = self.config
        seeds = self._split_seeds()
        first_idx, total, first_fits = None, None, None
        for split_seed in seeds:
            idx, scores, fits = self._score_split(ds, split_seed)
            if first_idx is None:
                first_idx, first_fits = idx, fits
                total = scores.copy()
            else:
                total = total + scores
        mspe_per_dim = total / len(seeds)

        selected = select_dimension(mspe_per_dim)
        logger.info(f"CV selected d={selected} (MSPE {mspe_per_dim[selected - 1]:.4g})")

        if cfg.refit_all:
            # Extension: selected dimension refitted on all rows
            final_fit = self.fitter(ds, np.zeros((0, ds.dim)), selected, seeds[0])
        else:
            final_fit = first_fits[selected - 1]

        return CvResult(mspe_per_dim=mspe_per_dim, selected_dim=selected,
                        final_fit=final_fit, split=first_idx)


def cross_validate(ds: Dataset, cfg: CvConfig,
                   fitter: Optional[CandidateFitter] = None) -> CvResult:
    """Holdout selection of the prior's dimension exponent; see CrossValidator."""
    return CrossValidator(cfg, fitter).run(ds)
