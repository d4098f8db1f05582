"""
Two-stage regression: Laplacian eigenmap from R^D to R^d_tilde, then GP
regression on the embedded coordinates.

The eigenmap is transductive. Train and test rows are embedded together and
only then split; there is no out-of-sample extension.
"""

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Union

import numpy as np
from scipy.linalg import eigh
from scipy.sparse import csr_matrix, diags, identity
from scipy.sparse.csgraph import connected_components
from scipy.sparse.linalg import eigsh
from scipy.spatial.distance import cdist

from processing.bandwidth import BandwidthPrior, McmcConfig, run_chain
from processing.dataset import Dataset, SplitIndices, write_table
from processing.estimator import FitResult, TruncationLevel, estimate
from utils.logger import logger
from utils.validators import ValidationError, validate_int_range, validate_matrix, validate_output_path

# Above this size the sparse Lanczos solver replaces the dense one
DENSE_EIGEN_LIMIT = 2000
SHIFT = 1e-3


@dataclass(frozen=True)
class EigenmapConfig:
    """Settings for the neighborhood graph and spectral embedding."""
    n_neighbors: Optional[int] = None  # None: max(5, ceil(log n))
    d_tilde: int = 2
    heat_bandwidth: Union[float, str, None] = None  # float t, "binary", or None for the median rule
    seed: int = 0

    def __post_init__(self):
        if self.n_neighbors is not None:
            validate_int_range(self.n_neighbors, "n_neighbors", 1)
        validate_int_range(self.d_tilde, "d_tilde", 1)
        if isinstance(self.heat_bandwidth, str) and self.heat_bandwidth != "binary":
            raise ValidationError(f"heat_bandwidth must be a positive number or 'binary', got: {self.heat_bandwidth!r}")
        if isinstance(self.heat_bandwidth, (int, float)) and not self.heat_bandwidth > 0:
            raise ValidationError(f"heat_bandwidth must be > 0, got: {self.heat_bandwidth}")


@dataclass
class Embedding:
    """Spectral coordinates of every input row."""
    coords: np.ndarray
    eigenvalues: np.ndarray
    graph_connected: bool
    n_components: int = 1
    eigengap: float = float("nan")  # lambda_{d_tilde + 1} - lambda_{d_tilde}

    def save_csv(self, path: str) -> Path:
        """Dump as `e1,...,ed_tilde` in input row order."""
        out = validate_output_path(path, (".csv",))
        header = [f"e{j + 1}" for j in range(self.coords.shape[1])]
        write_table(out, header, self.coords)
        return out

    def diagnostics(self) -> dict:
        return {
            "eigenvalues": [float(v) for v in self.eigenvalues],
            "graph_connected": bool(self.graph_connected),
            "n_components": int(self.n_components),
            "eigengap": float(self.eigengap),
            "transductive": True,
        }


def default_neighbors(n: int) -> int:
    return max(5, math.ceil(math.log(n)))


def knn_graph(X: np.ndarray, n_neighbors: int, heat_bandwidth: Union[float, str, None]) -> csr_matrix:
    """
    Symmetric kNN weight matrix.

    i ~ j if either lists the other among its n_neighbors nearest rows.
    Weights are exp(-||x - y||^2 / t) or 1 for "binary".
    """
    n = X.shape[0]
    k = min(n_neighbors, n - 1)
    D = cdist(X, X)
    np.fill_diagonal(D, np.inf)
    nbrs = np.argsort(D, axis=1, kind="stable")[:, :k]
    rows = np.repeat(np.arange(n), k)
    cols = nbrs.ravel()
    dist = D[rows, cols]

    if heat_bandwidth == "binary":
        w = np.ones_like(dist)
    else:
        t = float(np.median(dist)) ** 2 if heat_bandwidth is None else float(heat_bandwidth)
        if not t > 0:
            raise ValidationError("Heat bandwidth is zero: the kNN edges have zero length (duplicate points)")
        w = np.exp(-dist ** 2 / t)

    W = csr_matrix((w, (rows, cols)), shape=(n, n))
    return W.maximum(W.T).tocsr()


def _sign_fix(V: np.ndarray) -> np.ndarray:
    """Flip each column so its largest-magnitude entry is positive."""
    idx = np.argmax(np.abs(V), axis=0)
    signs = np.sign(V[idx, np.arange(V.shape[1])])
    signs[signs == 0] = 1.0
    return V * signs


def normalized_laplacian(W: csr_matrix) -> csr_matrix:
    """I - Deg^(-1/2) W Deg^(-1/2)."""
    deg = np.asarray(W.sum(axis=1)).ravel()
    inv_sqrt = diags(1.0 / np.sqrt(deg))
    return (identity(W.shape[0], format="csr") - inv_sqrt @ W @ inv_sqrt).tocsr()


def laplacian_eigenmap(X, cfg: EigenmapConfig) -> Embedding:
    """
    Embed rows of X with the lowest nontrivial eigenvectors of the normalized graph Laplacian.

    Raises:
        ValidationError: n <= d_tilde + 1, or a disconnected graph whose largest
            component is too small for d_tilde nontrivial eigenvectors
    """
    X = validate_matrix(X, "X")
    n = X.shape[0]
    if n <= cfg.d_tilde + 1:
        raise ValidationError(f"Eigenmap needs n > d_tilde + 1, got n={n}, d_tilde={cfg.d_tilde}")

    n_neighbors = cfg.n_neighbors or default_neighbors(n)
    W = knn_graph(X, n_neighbors, cfg.heat_bandwidth)
    n_comp, labels = connected_components(W, directed=False)
    if n_comp > 1:
        largest = int(np.bincount(labels).max())
        if cfg.d_tilde > largest - 1:
            raise ValidationError(
                f"Neighborhood graph has {n_comp} components; the largest ({largest} rows) cannot "
                f"support d_tilde={cfg.d_tilde}. Increase n_neighbors."
            )
        logger.warning(f"Neighborhood graph is disconnected ({n_comp} components); raise n_neighbors")

    L = normalized_laplacian(W)
    n_eig = cfg.d_tilde + 2 if n > cfg.d_tilde + 2 else cfg.d_tilde + 1
    if n <= DENSE_EIGEN_LIMIT:
        vals, vecs = eigh(L.toarray(), subset_by_index=[0, n_eig - 1])
    else:
        v0 = np.random.default_rng(cfg.seed).standard_normal(n)
        # shift-invert just below the zero eigenvalue
        vals, vecs = eigsh(L.tocsc(), k=n_eig, sigma=-SHIFT, which="LM", v0=v0)
        order = np.argsort(vals)
        vals, vecs = vals[order], vecs[:, order]

    coords = _sign_fix(vecs[:, 1:cfg.d_tilde + 1])
    eigenvalues = vals[1:cfg.d_tilde + 1]
    gap = float(vals[cfg.d_tilde + 1] - vals[cfg.d_tilde]) if n_eig > cfg.d_tilde + 1 else float("nan")
    return Embedding(coords=coords, eigenvalues=eigenvalues, graph_connected=(n_comp == 1),
                     n_components=int(n_comp), eigengap=gap)


def two_stage_fit(ds: Dataset, emap: EigenmapConfig, prior: BandwidthPrior, mcmc: McmcConfig,
                  tau: Optional[TruncationLevel] = None, holdout: Optional[SplitIndices] = None,
                  thin: int = 10, draws_per_a: int = 1, workers: int = 1):
    """
    Eigenmap then GP.

    All rows of ds are embedded. Without a holdout the GP is fitted on every
    row and the result has no query estimates. With a holdout it is fitted on
    the training rows and estimated at the embedded test rows; test responses
    are not used.

    Returns:
        (FitResult, Embedding)
    """
    embedding = laplacian_eigenmap(ds.predictors, emap)
    embedded = ds.with_predictors(embedding.coords)
    if holdout is None:
        train, query = embedded, None
    else:
        train = embedded.subset(holdout.train_idx)
        query = embedding.coords[list(holdout.test_idx)]
    tau = tau or TruncationLevel.from_responses(train.responses)
    chain = run_chain(train, prior, mcmc)
    fit = estimate(train, chain, query, tau, draws_per_a, thin, mcmc.seed, workers)
    return fit, embedding
