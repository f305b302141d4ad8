"""Trustworthiness of a low-dimensional embedding.

Penalizes points that enter a low-dimensional k-neighborhood while being far
down the high-dimensional rank ordering; 1.0 means every low-dim neighbor is
a true high-dim neighbor.
"""

import numpy as np

from ..errors import DataError
from .knn import _pairwise_sq


def trustworthiness(x_high: np.ndarray, y_low: np.ndarray, k: int) -> float:
    x = np.asarray(x_high, dtype=np.float64)
    y = np.asarray(y_low, dtype=np.float64)
    if x.shape[0] != y.shape[0]:
        raise DataError("trustworthiness inputs must have aligned rows")
    n = x.shape[0]
    if k >= n / 2:
        raise DataError(f"trustworthiness requires k < n/2 (k={k}, n={n})")

    penalty = 0.0
    block = max(1, min(n, int(2e7 // max(n, 1))))
    for start in range(0, n, block):
        stop = min(n, start + block)
        rows = np.arange(start, stop)
        dx = _pairwise_sq(x[rows], x)
        dy = _pairwise_sq(y[rows], y)
        dx[np.arange(len(rows)), rows] = np.inf
        dy[np.arange(len(rows)), rows] = np.inf
        # rank_x[r, j] = 1-based rank of j among distances from row r in X
        order_x = np.argsort(dx, axis=1, kind="stable")
        rank_x = np.empty_like(order_x)
        cols = np.arange(n)[None, :].repeat(len(rows), axis=0)
        np.put_along_axis(rank_x, order_x, cols, axis=1)
        low_nn = np.argpartition(dy, k - 1, axis=1)[:, :k]
        r = np.take_along_axis(rank_x, low_nn, axis=1) + 1
        penalty += float(np.maximum(r - k, 0).sum())

    return 1.0 - penalty * 2.0 / (n * k * (2.0 * n - 3.0 * k - 1.0))
