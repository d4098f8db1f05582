"""
Hierarchical bandwidth prior A^d ~ Ga(a0, b0) and a Metropolis-Hastings sampler
for the inverse bandwidth A (and optionally the noise variance).

f given (A, sigma^2, data) is Gaussian, so the sampler targets the log marginal
likelihood plus the log prior and never samples f itself.
"""

import math
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Tuple

import numpy as np
from scipy.special import gammaln

from processing.dataset import Dataset, ResponseScaling, write_table
from processing.kernel_gp import log_marglik_from_sqdist, squared_distances
from utils.logger import logger
from utils.validators import (
    NumericalError,
    ValidationError,
    validate_int_range,
    validate_output_path,
    validate_positive,
)

# Burn-in adaptation of the random-walk scale
ADAPT_WINDOW = 100
TARGET_ACCEPT = (0.25, 0.40)


@dataclass(frozen=True)
class BandwidthPrior:
    """A^d ~ Gamma(shape=a0, rate=b0)."""
    a0: float = 1.0
    b0: float = 1.0
    d: int = 1

    def __post_init__(self):
        object.__setattr__(self, "a0", validate_positive(self.a0, "a0"))
        object.__setattr__(self, "b0", validate_positive(self.b0, "b0"))
        object.__setattr__(self, "d", validate_int_range(self.d, "d", 1))


@dataclass(frozen=True)
class McmcConfig:
    """Settings for the bandwidth sampler."""
    n_iter: int = 2000
    burn_in: int = 1000
    proposal_sd: float = 0.3  # random-walk sd on log A
    infer_noise: bool = False
    noise_var: float = 0.01  # fixed value, or ignored start when inferred
    noise_prior: Tuple[float, float] = (1.0, 1.0)  # inverse-Gamma (shape, rate) on sigma^2
    noise_proposal_sd: float = 0.3
    seed: int = 0
    adapt: bool = True
    response_scaling: str = "standardize"

    def __post_init__(self):
        validate_int_range(self.n_iter, "n_iter", 1)
        validate_int_range(self.burn_in, "burn_in", 0)
        if self.burn_in >= self.n_iter:
            raise ValidationError(f"burn_in ({self.burn_in}) must be < n_iter ({self.n_iter})")
        validate_positive(self.proposal_sd, "proposal_sd")
        validate_positive(self.noise_proposal_sd, "noise_proposal_sd")
        validate_positive(self.noise_var, "noise_var")
        shape, rate = self.noise_prior
        validate_positive(shape, "noise prior shape")
        validate_positive(rate, "noise prior rate")
        if self.response_scaling not in ResponseScaling.MODES:
            raise ValidationError(
                f"response_scaling must be one of {ResponseScaling.MODES}, got: {self.response_scaling!r}"
            )


@dataclass
class ChainSummary:
    mean_a: float
    sd_a: float
    accept_rate: float

    def to_dict(self) -> dict:
        return {"mean_a": self.mean_a, "sd_a": self.sd_a, "accept_rate": self.accept_rate}


@dataclass
class BandwidthChain:
    """Post burn-in draws of (A, sigma^2)."""
    draws_a: np.ndarray
    draws_noise_var: np.ndarray
    accept_rate: float
    log_marglik_trace: np.ndarray
    accepted: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=bool))
    noise_accept_rate: Optional[float] = None
    proposal_sd: float = 0.3
    response_scaling: str = "standardize"
    burn_in: int = 0

    def __len__(self) -> int:
        return len(self.draws_a)

    def summary(self) -> ChainSummary:
        if len(self.draws_a) == 0:
            return ChainSummary(float("nan"), float("nan"), self.accept_rate)
        return ChainSummary(
            mean_a=float(np.mean(self.draws_a)),
            sd_a=float(np.std(self.draws_a, ddof=1)) if len(self.draws_a) > 1 else 0.0,
            accept_rate=float(self.accept_rate),
        )

    def save_csv(self, path: str) -> Path:
        """Dump the chain as `iter,a,noise_var,log_marglik,accepted`."""
        out = validate_output_path(path, (".csv",))
        iters = np.arange(self.burn_in, self.burn_in + len(self.draws_a))
        table = np.column_stack([iters, self.draws_a, self.draws_noise_var,
                                 self.log_marglik_trace, self.accepted.astype(float)])
        write_table(out, ["iter", "a", "noise_var", "log_marglik", "accepted"], table)
        return out


def log_prior_density_a(prior: BandwidthPrior, a: float) -> float:
    """
    Log density of A when A^d ~ Gamma(a0, b0).

    (d a0 - 1) log a - b0 a^d + log d + a0 log b0 - log Gamma(a0)
    """
    if not a > 0:
        raise ValidationError(f"inverse bandwidth must be > 0, got: {a}")
    d, a0, b0 = prior.d, prior.a0, prior.b0
    return ((d * a0 - 1.0) * math.log(a) - b0 * a ** d
            + math.log(d) + a0 * math.log(b0) - float(gammaln(a0)))


def log_inverse_gamma(x: float, shape: float, rate: float) -> float:
    return (shape * math.log(rate) - float(gammaln(shape))
            - (shape + 1.0) * math.log(x) - rate / x)


def median_heuristic(X: np.ndarray) -> float:
    """1 / median pairwise distance (distinct pairs)."""
    S = squared_distances(X)
    iu = np.triu_indices(X.shape[0], k=1)
    d = np.sqrt(S[iu])
    d = d[d > 0]
    if d.size == 0:
        raise ValidationError("Degenerate dataset: all predictor rows coincide")
    return 1.0 / float(np.median(d))


class BandwidthSampler:
    """
    Random-walk Metropolis-Hastings on log A (and log sigma^2).

    Usage:
        1. Create the sampler with a prior and config
        2. Call run() on a dataset
        3. Read draws from the returned BandwidthChain

    Setting use_likelihood=False samples the prior alone.
    """

    def __init__(self, prior: BandwidthPrior, config: Optional[McmcConfig] = None,
                 use_likelihood: bool = True):
        self.prior = prior
        self.config = config or McmcConfig()
        self.use_likelihood = use_likelihood
        self._cancel_event = threading.Event()

    def cancel(self):
        """Request the running chain to stop at the next iteration."""
        self._cancel_event.set()

    def _make_target(self, ds: Dataset, scaling: ResponseScaling) -> Callable[[float, float], float]:
        if not self.use_likelihood:
            return lambda a, noise_var: 0.0
        sqdist = squared_distances(ds.predictors)
        y = scaling.forward(ds.responses)

        def target(a: float, noise_var: float) -> float:
            return log_marglik_from_sqdist(sqdist, y, a, scaling.noise_to_model(noise_var))

        return target

    def run(self, ds: Dataset,
            progress_callback: Optional[Callable[[float, str], None]] = None) -> BandwidthChain:
        """
        Run the chain.

        Args:
            ds: Training data (n >= 2, two distinct predictor rows)
            progress_callback: Callback(progress: 0-1, status_message)

        Returns:
            BandwidthChain with post burn-in draws

        Raises:
            ValidationError: Degenerate dataset
            NumericalError: Every proposal failed to factorize
        """
        cfg = self.config
        if ds.n < 2:
            raise ValidationError(f"Bandwidth inference needs n >= 2, got n={ds.n}")
        a = median_heuristic(ds.predictors)  # also rejects all-duplicate data

        self._cancel_event.clear()
        rng = np.random.default_rng(cfg.seed)
        scaling = ResponseScaling.fit(ds.responses, cfg.response_scaling)
        target = self._make_target(ds, scaling)

        shape, rate = cfg.noise_prior
        if cfg.infer_noise:
            var_y = float(np.var(ds.responses))
            noise_var = 0.1 * var_y if var_y > 0 else cfg.noise_var
        else:
            noise_var = cfg.noise_var

        def log_post_a(a_val: float, loglik: float) -> float:
            # Jacobian of the log transform adds log a
            return loglik + log_prior_density_a(self.prior, a_val) + math.log(a_val)

        def log_post_noise(nv: float, loglik: float) -> float:
            return loglik + log_inverse_gamma(nv, shape, rate) + math.log(nv)

        try:
            loglik = target(a, noise_var)
        except NumericalError as e:
            raise NumericalError(f"Chain initialization failed: {e}", e.context)

        sd_a = cfg.proposal_sd
        sd_noise = cfg.noise_proposal_sd
        n_keep = cfg.n_iter - cfg.burn_in
        draws_a = np.empty(n_keep)
        draws_nv = np.empty(n_keep)
        trace = np.empty(n_keep)
        accepted_flags = np.zeros(n_keep, dtype=bool)

        n_accept = n_accept_noise = 0
        n_failed = 0
        window_accept = window_noise = 0

        for it in range(cfg.n_iter):
            if self._cancel_event.is_set():
                raise NumericalError("Chain cancelled", {"iteration": it})

            # A step
            accepted = False
            a_prop = a * math.exp(sd_a * rng.standard_normal())
            log_u = math.log(1.0 - rng.random())
            try:
                loglik_prop = target(a_prop, noise_var)
            except NumericalError:
                n_failed += 1
            else:
                log_ratio = log_post_a(a_prop, loglik_prop) - log_post_a(a, loglik)
                if log_u < log_ratio:
                    a, loglik, accepted = a_prop, loglik_prop, True

            # sigma^2 step
            noise_accepted = False
            if cfg.infer_noise:
                nv_prop = noise_var * math.exp(sd_noise * rng.standard_normal())
                log_u = math.log(1.0 - rng.random())
                try:
                    loglik_prop = target(a, nv_prop)
                except NumericalError:
                    n_failed += 1
                else:
                    log_ratio = log_post_noise(nv_prop, loglik_prop) - log_post_noise(noise_var, loglik)
                    if log_u < log_ratio:
                        noise_var, loglik, noise_accepted = nv_prop, loglik_prop, True

            if it < cfg.burn_in:
                window_accept += accepted
                window_noise += noise_accepted
                if cfg.adapt and (it + 1) % ADAPT_WINDOW == 0:
                    sd_a = _adapt_scale(sd_a, window_accept / ADAPT_WINDOW)
                    if cfg.infer_noise:
                        sd_noise = _adapt_scale(sd_noise, window_noise / ADAPT_WINDOW)
                    window_accept = window_noise = 0
            else:
                k = it - cfg.burn_in
                draws_a[k] = a
                draws_nv[k] = noise_var
                trace[k] = loglik
                accepted_flags[k] = accepted
                n_accept += accepted
                n_accept_noise += noise_accepted

            if progress_callback and (it + 1) % 500 == 0:
                progress_callback((it + 1) / cfg.n_iter, f"iteration {it + 1}/{cfg.n_iter}")

        n_proposals = cfg.n_iter * (2 if cfg.infer_noise else 1)
        if n_failed == n_proposals:
            raise NumericalError("All proposals failed to factorize", {"a": a, "noise_var": noise_var})

        chain = BandwidthChain(
            draws_a=draws_a,
            draws_noise_var=draws_nv,
            accept_rate=n_accept / n_keep,
            log_marglik_trace=trace,
            accepted=accepted_flags,
            noise_accept_rate=(n_accept_noise / n_keep) if cfg.infer_noise else None,
            proposal_sd=sd_a,
            response_scaling=cfg.response_scaling,
            burn_in=cfg.burn_in,
        )
        if n_failed:
            logger.warning(f"{n_failed} proposals rejected after factorization failure")
        logger.debug(
            f"Chain d={self.prior.d}: mean a={chain.summary().mean_a:.4g}, "
            f"accept={chain.accept_rate:.2f}, proposal sd={sd_a:.3g}"
        )
        return chain


def _adapt_scale(sd: float, rate: float) -> float:
    if rate < TARGET_ACCEPT[0]:
        return sd * 0.8
    if rate > TARGET_ACCEPT[1]:
        return sd * 1.2
    return sd


def run_chain(ds: Dataset, prior: BandwidthPrior, cfg: McmcConfig,
              use_likelihood: bool = True) -> BandwidthChain:
    """Sample the posterior of the inverse bandwidth; see BandwidthSampler."""
    return BandwidthSampler(prior, cfg, use_likelihood).run(ds)
