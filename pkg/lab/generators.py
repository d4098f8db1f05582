"""
Synthetic regression data on manifolds with known geometry and ground truth.

Swiss roll: (U, V) -> T = (U cos U, V, U sin U), lifted to R^D by a Gaussian
matrix Omega. Circle: theta -> a smooth injective trigonometric curve in R^D,
a stand-in for image data that varies along a single rotation angle.
"""

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.spatial.distance import pdist

from processing.dataset import Dataset
from utils.logger import logger
from utils.validators import NumericalError, ValidationError, validate_int_range, validate_positive

U_RANGE = (1.5 * math.pi, 4.5 * math.pi)
V_RANGE = (0.0, 20.0)

INJECTIVITY_GRID = 2048
INJECTIVITY_TOL = 1e-9
MAX_EMBEDDING_RETRIES = 10


@dataclass(frozen=True)
class SwissRollConfig:
    n: int
    ambient_dim: int = 100
    noise_sd: float = 0.1
    seed: int = 0

    def __post_init__(self):
        validate_int_range(self.n, "n", 1)
        validate_int_range(self.ambient_dim, "ambient_dim", 3)
        validate_positive(self.noise_sd, "noise_sd", allow_zero=True)


@dataclass(frozen=True)
class CircleManifoldConfig:
    n: int
    ambient_dim: int = 20
    embedding_harmonics: int = 3
    noise_sd: float = 0.1
    seed: int = 0
    spacing: str = "equal"  # "equal": theta_i = 2 pi i / n; "uniform": iid Unif[0, 2 pi)
    truth: str = "cos"

    def __post_init__(self):
        validate_int_range(self.n, "n", 1)
        validate_int_range(self.ambient_dim, "ambient_dim", 2)
        validate_int_range(self.embedding_harmonics, "embedding_harmonics", 1)
        validate_positive(self.noise_sd, "noise_sd", allow_zero=True)
        if self.spacing not in ("equal", "uniform"):
            raise ValidationError(f"spacing must be 'equal' or 'uniform', got: {self.spacing!r}")
        if self.truth not in CIRCLE_TRUTHS:
            raise ValidationError(f"truth must be one of {sorted(CIRCLE_TRUTHS)}, got: {self.truth!r}")


CIRCLE_TRUTHS = {"cos": np.cos, "sin": np.sin}


@dataclass
class LabeledManifoldData:
    """A dataset with its latent coordinates and noiseless truth."""
    dataset: Dataset
    latent: np.ndarray
    f0_at_points: np.ndarray
    latent_names: tuple = ()

    @property
    def noise(self) -> np.ndarray:
        return self.dataset.responses - self.f0_at_points


def swiss_roll_truth(u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Noiseless response 4 (u / (3 pi) - (1 + 3 pi) / 2)^2 + (pi / 20) v."""
    return 4.0 * (u / (3.0 * math.pi) - (1.0 + 3.0 * math.pi) / 2.0) ** 2 + (math.pi / 20.0) * v


def gen_swiss_roll(cfg: SwissRollConfig) -> LabeledManifoldData:
    """
    Sample the Swiss roll regression problem.

    Returns:
        LabeledManifoldData with latent (U, V), X = Omega T and
        y = f0 + N(0, noise_sd^2)
    """
    rng = np.random.default_rng(cfg.seed)
    u = rng.uniform(*U_RANGE, size=cfg.n)
    v = rng.uniform(*V_RANGE, size=cfg.n)
    T = np.column_stack([u * np.cos(u), v, u * np.sin(u)])

    # Omega is drawn once per dataset
    omega = rng.standard_normal((cfg.ambient_dim, 3))
    X = T @ omega.T

    f0 = swiss_roll_truth(u, v)
    y = f0 + cfg.noise_sd * rng.standard_normal(cfg.n) if cfg.noise_sd > 0 else f0.copy()
    return LabeledManifoldData(
        dataset=Dataset(X, y, source_seed=cfg.seed),
        latent=np.column_stack([u, v]),
        f0_at_points=f0,
        latent_names=("u", "v"),
    )


class CircleEmbedding:
    """
    theta -> sum_h (A_h cos(h theta) + B_h sin(h theta)), a 2 pi-periodic curve in R^D.

    Coefficients of harmonic h are N(0, 1/h^2), so the first harmonic dominates.
    """

    def __init__(self, ambient_dim: int, harmonics: int, rng: np.random.Generator):
        scale = 1.0 / np.arange(1, harmonics + 1)
        self.cos_coef = rng.standard_normal((harmonics, ambient_dim)) * scale[:, None]
        self.sin_coef = rng.standard_normal((harmonics, ambient_dim)) * scale[:, None]

    @property
    def harmonics(self) -> int:
        return self.cos_coef.shape[0]

    def __call__(self, theta) -> np.ndarray:
        theta = np.atleast_1d(np.asarray(theta, dtype=float))
        h = np.arange(1, self.harmonics + 1)
        phase = np.outer(theta, h)
        return np.cos(phase) @ self.cos_coef + np.sin(phase) @ self.sin_coef

    def min_grid_separation(self, grid_size: int = INJECTIVITY_GRID) -> float:
        """Smallest distance between images of distinct grid angles."""
        grid = 2.0 * math.pi * np.arange(grid_size) / grid_size
        return float(pdist(self(grid)).min())


def circle_embedding(ambient_dim: int, harmonics: int, seed: int) -> CircleEmbedding:
    """
    Draw an embedding that passes the injectivity check.

    Raises:
        NumericalError: No injective draw within the retry budget
    """
    rng = np.random.default_rng(seed)
    for attempt in range(MAX_EMBEDDING_RETRIES):
        emb = CircleEmbedding(ambient_dim, harmonics, rng)
        if emb.min_grid_separation() > INJECTIVITY_TOL:
            return emb
        logger.debug(f"Circle embedding draw {attempt + 1} is not injective, resampling")
    raise NumericalError("Could not draw an injective circle embedding",
                         {"retries": MAX_EMBEDDING_RETRIES})


def circle_angles(n: int, spacing: str, rng: np.random.Generator) -> np.ndarray:
    if spacing == "equal":
        return 2.0 * math.pi * np.arange(n) / n
    return rng.uniform(0.0, 2.0 * math.pi, size=n)


def gen_circle_manifold(cfg: CircleManifoldConfig,
                        embedding: Optional[CircleEmbedding] = None) -> LabeledManifoldData:
    """
    Sample responses f0(theta) + noise on a circle embedded in R^ambient_dim.

    The embedding is drawn from cfg.seed unless one is passed in.
    """
    rng = np.random.default_rng([cfg.seed, 1])
    emb = embedding or circle_embedding(cfg.ambient_dim, cfg.embedding_harmonics, cfg.seed)
    theta = circle_angles(cfg.n, cfg.spacing, rng)
    X = emb(theta)
    f0 = CIRCLE_TRUTHS[cfg.truth](theta)
    y = f0 + cfg.noise_sd * rng.standard_normal(cfg.n) if cfg.noise_sd > 0 else f0.copy()
    return LabeledManifoldData(
        dataset=Dataset(X, y, source_seed=cfg.seed),
        latent=theta.reshape(-1, 1),
        f0_at_points=f0,
        latent_names=("theta",),
    )
