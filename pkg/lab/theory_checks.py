"""
Numerical checks of manifold geometry on the unit circle.

- geodesic vs chordal distance equivalence, C1 ||x - y|| <= d_M(x, y) <= C2 ||x - y||
- the kernel convolution operator
      I_a(f)(x) = (a / sqrt(2 pi))^d  int_M exp(-a^2 ||x - y||^2 / 2) f(y) dV(y)
  and the decay of sup|I_a(f) - f| in a

The convolution uses the exp(-a^2 r^2 / 2) form; the regression kernel in
processing.kernel_gp uses exp(-a^2 r^2).
"""

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.stats import linregress

from utils.validators import NumericalError, ValidationError, validate_int_range, validate_positive

AngleFunction = Callable[[np.ndarray], np.ndarray]
# (row indices, column indices) -> len(rows) x len(cols) geodesic distances
GeodesicOracle = Callable[[np.ndarray, np.ndarray], np.ndarray]

MIN_QUADRATURE_POINTS = 256
POINTS_PER_UNIT_A = 64
ISOMETRY_TOL = 1e-9


@dataclass(frozen=True)
class DistanceEquivalence:
    c1_hat: float
    c2_hat: float
    n_pairs: int

    def to_dict(self) -> dict:
        return {"c1_hat": self.c1_hat, "c2_hat": self.c2_hat, "n_pairs": self.n_pairs}


@dataclass(frozen=True)
class PowerLawFit:
    slope: float
    intercept: float
    r_squared: float

    def to_dict(self) -> dict:
        return {"slope": self.slope, "intercept": self.intercept, "r2": self.r_squared}


@dataclass(frozen=True)
class ConvolutionDecay:
    scales: tuple
    sup_errors: tuple
    fit: PowerLawFit

    @property
    def constants(self) -> tuple:
        """a^2 * sup error per scale; flat when the error is O(a^-2)."""
        return tuple(a * a * e for a, e in zip(self.scales, self.sup_errors))

    def to_dict(self) -> dict:
        return {
            "scales": list(self.scales),
            "sup_errors": list(self.sup_errors),
            "constants": list(self.constants),
            "fit": self.fit.to_dict(),
        }


def fit_power_law(x: Sequence[float], y: Sequence[float]) -> PowerLawFit:
    """Least-squares line through (log x, log y)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size < 2 or x.size != y.size:
        raise ValidationError("Power-law fit needs at least two (x, y) pairs of equal length")
    if np.any(x <= 0) or np.any(y <= 0):
        raise ValidationError("Power-law fit needs positive x and y")
    res = linregress(np.log(x), np.log(y))
    return PowerLawFit(float(res.slope), float(res.intercept), float(res.rvalue ** 2))


def geodesic_distance_circle(theta1: float, theta2: float, radius: float = 1.0) -> float:
    """Arc length between two angles on a circle of the given radius."""
    delta = abs(theta1 - theta2) % (2.0 * math.pi)
    return radius * min(delta, 2.0 * math.pi - delta)


def circle_points(theta: np.ndarray, radius: float = 1.0) -> np.ndarray:
    theta = np.asarray(theta, dtype=float)
    return radius * np.column_stack([np.cos(theta), np.sin(theta)])


def circle_geodesic_oracle(theta: np.ndarray, radius: float = 1.0) -> GeodesicOracle:
    """Vectorized arc-length oracle for points at the given angles."""
    theta = np.asarray(theta, dtype=float)

    def oracle(rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
        delta = np.abs(theta[rows][:, None] - theta[cols][None, :]) % (2.0 * math.pi)
        return radius * np.minimum(delta, 2.0 * math.pi - delta)

    return oracle


def check_distance_equivalence(points: np.ndarray, geodesic_oracle: GeodesicOracle,
                               isometric: bool = False, block: int = 512) -> DistanceEquivalence:
    """
    Extreme ratios d_M / ||.|| over all distinct pairs.

    Coincident pairs are skipped. With isometric=True a C1 below 1 - 1e-9
    raises NumericalError, since geodesics can never be shorter than chords.
    """
    X = np.asarray(points, dtype=float)
    n = X.shape[0]
    if n < 2:
        raise ValidationError("Distance equivalence needs at least 2 points")

    c1, c2, n_pairs = math.inf, 0.0, 0
    cols = np.arange(n)
    for start in range(0, n, block):
        rows = np.arange(start, min(start + block, n))
        chord = np.sqrt(((X[rows][:, None, :] - X[None, :, :]) ** 2).sum(axis=2))
        geo = geodesic_oracle(rows, cols)
        upper = cols[None, :] > rows[:, None]
        mask = upper & (chord > 0)
        if not np.any(mask):
            continue
        ratio = geo[mask] / chord[mask]
        c1 = min(c1, float(ratio.min()))
        c2 = max(c2, float(ratio.max()))
        n_pairs += int(mask.sum())

    if n_pairs == 0:
        raise ValidationError("All point pairs coincide")
    if isometric and c1 < 1.0 - ISOMETRY_TOL:
        raise NumericalError("Geodesic distance shorter than chord on an isometric embedding",
                             {"c1_hat": c1})
    return DistanceEquivalence(c1, c2, n_pairs)


class CircleConvolution:
    """
    I_a(f) on the unit circle by the periodic trapezoidal rule.

    The chord between angles x and y is 2 sin(|x - y| / 2), so the integrand
    is exp(-2 a^2 sin^2((x - y) / 2)) f(y), integrated in arc length.
    """

    def __init__(self, f: AngleFunction, a: float, quadrature_points: int):
        self.a = validate_positive(a, "a")
        if self.a < 1:
            raise ValidationError(f"Convolution scale must be a >= 1, got: {a}")
        validate_int_range(quadrature_points, "quadrature_points", MIN_QUADRATURE_POINTS)
        if quadrature_points < POINTS_PER_UNIT_A * self.a:
            raise ValidationError(
                f"{quadrature_points} quadrature points cannot resolve a={self.a:g}; "
                f"need at least {math.ceil(POINTS_PER_UNIT_A * self.a)}"
            )
        self.nodes = 2.0 * math.pi * np.arange(quadrature_points) / quadrature_points
        self.weight = 2.0 * math.pi / quadrature_points
        self.f_nodes = np.asarray(f(self.nodes), dtype=float)

    def __call__(self, x) -> np.ndarray:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        half = 0.5 * (x[:, None] - self.nodes[None, :])
        kernel = np.exp(-2.0 * self.a ** 2 * np.sin(half) ** 2)
        norm = self.a / math.sqrt(2.0 * math.pi)
        return norm * self.weight * (kernel @ self.f_nodes)


def convolution_operator(f: AngleFunction, a: float, quadrature_points: int) -> CircleConvolution:
    """Evaluator of I_a(f) at arbitrary angles."""
    return CircleConvolution(f, a, quadrature_points)


def convolution_sup_error(f: AngleFunction, a: float, quadrature_points: int,
                          eval_points: int = 720) -> float:
    """sup over an angle grid of |I_a(f) - f|."""
    grid = 2.0 * math.pi * np.arange(eval_points) / eval_points
    op = convolution_operator(f, a, quadrature_points)
    return float(np.max(np.abs(op(grid) - f(grid))))


def convolution_decay(f: AngleFunction, scales: Sequence[float],
                      points_per_a: int = 4 * POINTS_PER_UNIT_A) -> ConvolutionDecay:
    """Sup errors at each scale and their log-log slope against a."""
    errors = []
    for a in scales:
        q = max(MIN_QUADRATURE_POINTS, int(math.ceil(points_per_a * a)))
        errors.append(convolution_sup_error(f, a, q))
    return ConvolutionDecay(tuple(float(a) for a in scales), tuple(errors),
                            fit_power_law(scales, errors))


def constant_one(theta: np.ndarray) -> np.ndarray:
    return np.ones_like(np.asarray(theta, dtype=float))
