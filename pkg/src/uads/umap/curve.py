"""Low-dimensional similarity curve Phi(d) = 1 / (1 + a * d^(2b)).

The (a, b) pair is fit so Phi approximates the target membership shape:
1 up to min_dist, then an exponential falloff with the given spread.
"""

import numpy as np
from scipy.optimize import curve_fit

from ..errors import ConfigError, DataError

GRID_POINTS = 300
MAX_RMS = 0.02


def embedding_curve(d: np.ndarray, a: float, b: float) -> np.ndarray:
    return 1.0 / (1.0 + a * np.asarray(d, dtype=np.float64) ** (2.0 * b))


def curve_target(d: np.ndarray, min_dist: float, spread: float) -> np.ndarray:
    d = np.asarray(d, dtype=np.float64)
    y = np.exp(-(d - min_dist) / spread)
    y[d < min_dist] = 1.0
    return y


def fit_embedding_curve(min_dist: float, spread: float) -> tuple[float, float]:
    """Least-squares (a, b) over a 300-point grid on [0, 3*spread]."""
    if not min_dist < spread:
        raise ConfigError(f"min_dist {min_dist} must be smaller than spread {spread}")
    xv = np.linspace(0.0, spread * 3.0, GRID_POINTS)
    yv = curve_target(xv, min_dist, spread)
    (a, b), _ = curve_fit(embedding_curve, xv, yv, p0=(1.0, 1.0), maxfev=20000)
    rms = float(np.sqrt(np.mean((embedding_curve(xv, a, b) - yv) ** 2)))
    if rms >= MAX_RMS:
        raise DataError(f"embedding curve fit did not converge: residual RMS {rms:.4f}")
    return float(a), float(b)
