"""
Squared-exponential kernel, Gram matrices and conjugate Gaussian conditioning.

The kernel is K^a(x, y) = exp(-a^2 ||x - y||^2). All factorizations go through
a jitter ladder: the caller's jitter first, then 1e-10 up to 1e-6.
"""

import math
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from scipy.linalg import cho_solve, cholesky, eigh, solve_triangular
from scipy.spatial.distance import cdist

from processing.dataset import Dataset
from utils.logger import logger
from utils.validators import NumericalError, ValidationError, validate_matrix, validate_positive

JITTER_LADDER = (1e-10, 1e-9, 1e-8, 1e-7, 1e-6)

LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class KernelParams:
    """Inverse bandwidth of the squared-exponential kernel."""
    a: float

    def __post_init__(self):
        object.__setattr__(self, "a", validate_positive(self.a, "inverse bandwidth a"))


@dataclass(frozen=True)
class GPState:
    """A GP conditioned on training data at fixed (a, noise_var).

    chol is the lower Cholesky factor of K + (noise_var + jitter) I and
    alpha solves (K + (noise_var + jitter) I) alpha = y.
    """
    params: KernelParams
    noise_var: float
    train_x: np.ndarray
    train_y: np.ndarray
    chol: np.ndarray
    alpha: np.ndarray
    jitter: float = 0.0

    @property
    def n(self) -> int:
        return self.train_x.shape[0]


def kernel(a: float, x, y) -> float:
    """exp(-a^2 ||x - y||^2) for two points of equal dimension."""
    a = validate_positive(a, "inverse bandwidth a")
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    if x.shape != y.shape:
        raise ValidationError(f"Dimension mismatch: {x.size} vs {y.size}")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise ValidationError("kernel inputs must be finite")
    diff = x - y
    return float(np.exp(-a * a * np.dot(diff, diff)))


def squared_distances(X: np.ndarray, Z: Optional[np.ndarray] = None) -> np.ndarray:
    """Pairwise squared Euclidean distances; exact zeros on the diagonal when Z is None."""
    if Z is None:
        S = cdist(X, X, metric="sqeuclidean")
        np.fill_diagonal(S, 0.0)
        return S
    return cdist(X, Z, metric="sqeuclidean")


def gram_from_sqdist(a: float, sqdist: np.ndarray) -> np.ndarray:
    return np.exp(-(a * a) * sqdist)


def gram(a: float, X) -> np.ndarray:
    """
    Gram matrix G[i, j] = K^a(X_i, X_j).

    Only pairwise distances enter, so the cost is O(n^2 D).
    """
    a = validate_positive(a, "inverse bandwidth a")
    X = validate_matrix(X, "X")
    G = gram_from_sqdist(a, squared_distances(X))
    np.fill_diagonal(G, 1.0)
    return G


def cross_gram(a: float, X: np.ndarray, Z: np.ndarray) -> np.ndarray:
    """K^a(X_i, Z_j) for all i, j."""
    return gram_from_sqdist(a, squared_distances(X, Z))


def cholesky_with_jitter(M: np.ndarray, jitter: float = 0.0,
                         what: str = "matrix") -> Tuple[np.ndarray, float]:
    """
    Lower Cholesky factor of M + jitter I, escalating jitter on failure.

    Returns:
        (L, jitter actually used)

    Raises:
        NumericalError: If the factorization fails at every rung of the ladder
    """
    ladder = [jitter] + [j for j in JITTER_LADDER if j > jitter]
    eye = np.eye(M.shape[0])
    tried = jitter
    for tried in ladder:
        try:
            L = cholesky(M + tried * eye if tried > 0 else M, lower=True, check_finite=False)
        except np.linalg.LinAlgError:
            logger.debug(f"Cholesky of {what} failed at jitter {tried:.1e}, escalating")
            continue
        if np.all(np.isfinite(L)) and np.all(np.diag(L) > 0):
            return L, tried
    raise NumericalError(f"Cholesky factorization of {what} failed", {"jitter": tried})


def _check_dims(train_x: np.ndarray, query_x) -> np.ndarray:
    Q = np.asarray(query_x, dtype=float)
    if Q.ndim == 1:
        Q = Q.reshape(-1, train_x.shape[1]) if train_x.shape[1] > 1 else Q.reshape(-1, 1)
    if Q.ndim != 2 or Q.shape[1] != train_x.shape[1]:
        raise ValidationError(
            f"Query dimension {Q.shape[-1] if Q.ndim else 0} does not match training dimension {train_x.shape[1]}"
        )
    if not np.all(np.isfinite(Q)):
        raise ValidationError("query points must be finite")
    return Q


def fit_gp(ds: Dataset, a: float, noise_var: float, jitter: float = 0.0) -> GPState:
    """
    Condition the GP prior on a dataset.

    Args:
        ds: Training data
        a: Inverse bandwidth
        noise_var: Gaussian noise variance sigma^2
        jitter: Extra diagonal added before factorizing

    Returns:
        GPState with Cholesky factor and alpha

    Raises:
        NumericalError: Cholesky failure after jitter escalation
    """
    params = KernelParams(a)
    noise_var = validate_positive(noise_var, "noise_var", allow_zero=True)
    jitter = validate_positive(jitter, "jitter", allow_zero=True)
    if noise_var + jitter <= 0:
        raise ValidationError("noise_var + jitter must be > 0")

    X = ds.predictors
    K = gram(params.a, X)
    K[np.diag_indices_from(K)] += noise_var
    try:
        L, used = cholesky_with_jitter(K, jitter, what="K + noise_var I")
    except NumericalError as e:
        e.context.update(a=params.a, noise_var=noise_var)
        raise
    alpha = cho_solve((L, True), ds.responses, check_finite=False)
    return GPState(params, noise_var, ds.predictors, ds.responses, L, alpha, used)


def posterior(gp: GPState, query_x) -> Tuple[np.ndarray, np.ndarray]:
    """
    Posterior mean and covariance of f at query points.

    mean = K_*^T alpha, cov = K_** - K_*^T (K + sigma^2 I)^-1 K_*.
    """
    Q = _check_dims(gp.train_x, query_x)
    K_star = cross_gram(gp.params.a, gp.train_x, Q)
    mean = K_star.T @ gp.alpha
    v = solve_triangular(gp.chol, K_star, lower=True, check_finite=False)
    K_qq = gram_from_sqdist(gp.params.a, squared_distances(Q))
    cov = K_qq - v.T @ v
    cov = 0.5 * (cov + cov.T)
    return mean, cov


def _covariance_factor(cov: np.ndarray) -> np.ndarray:
    """A matrix F with F F^T equal to the (jittered) covariance."""
    q = cov.shape[0]
    if q == 0:
        return np.zeros((0, 0))
    try:
        L, _ = cholesky_with_jitter(cov, 0.0, what="posterior covariance")
        return L
    except NumericalError:
        pass
    # Eigen-factor when the spectrum is only marginally negative
    w, V = eigh(cov, check_finite=False)
    tol = 1e-8 * max(1.0, float(np.trace(cov)) / q)
    if w.min() < -tol:
        raise NumericalError(
            "posterior covariance is not positive semi-definite",
            {"min_eigenvalue": float(w.min()), "jitter": JITTER_LADDER[-1]},
        )
    return V * np.sqrt(np.clip(w, 0.0, None))


def sample_posterior(gp: GPState, query_x, rng: np.random.Generator,
                     size: Optional[int] = None) -> np.ndarray:
    """
    Draw f at query points from the posterior: mean + L z, z ~ N(0, I).

    Args:
        gp: Fitted state
        query_x: q x D query points
        rng: Caller-owned generator
        size: Number of joint draws; None for a single vector

    Returns:
        Vector of length q, or a (size, q) array
    """
    mean, cov = posterior(gp, query_x)
    F = _covariance_factor(cov)
    q = mean.shape[0]
    if size is None:
        return mean + F @ rng.standard_normal(q)
    z = rng.standard_normal((size, q))
    return mean[None, :] + z @ F.T


def log_marglik_from_sqdist(sqdist: np.ndarray, y: np.ndarray, a: float,
                            noise_var: float, jitter: float = 0.0) -> float:
    """log N(y; 0, K + sigma^2 I) from precomputed squared distances."""
    K = gram_from_sqdist(a, sqdist)
    K[np.diag_indices_from(K)] += noise_var
    L, _ = cholesky_with_jitter(K, jitter, what="K + noise_var I")
    alpha = cho_solve((L, True), y, check_finite=False)
    n = y.shape[0]
    return float(-0.5 * y @ alpha - np.log(np.diag(L)).sum() - 0.5 * n * LOG_2PI)


def log_marginal_likelihood(ds: Dataset, a: float, noise_var: float,
                            jitter: float = 0.0) -> float:
    """
    Log marginal likelihood of the responses with f integrated out.

    Computed as -1/2 y^T alpha - sum(log diag L) - n/2 log(2 pi).

    Raises:
        NumericalError: Factorization failure
    """
    a = validate_positive(a, "inverse bandwidth a")
    noise_var = validate_positive(noise_var, "noise_var", allow_zero=True)
    try:
        return log_marglik_from_sqdist(squared_distances(ds.predictors), ds.responses,
                                       a, noise_var, jitter)
    except NumericalError as e:
        e.context.update(a=a, noise_var=noise_var)
        raise
