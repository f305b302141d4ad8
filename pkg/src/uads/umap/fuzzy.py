"""Fuzzy neighborhood graph: per-point kernel-width calibration and
probabilistic-union symmetrization."""

import logging
from dataclasses import dataclass

import numpy as np
import scipy.sparse

from ..errors import DataError
from .knn import KnnGraph

log = logging.getLogger(__name__)

SMOOTH_TOL = 1e-5
SMOOTH_ITER = 64
MIN_SIGMA_SCALE = 1e-3


@dataclass
class WeightedGraph:
    """Symmetric sparse graph as a directed edge list (both orientations
    stored); weights in (0, 1]."""

    n: int
    heads: np.ndarray  # (m,) int32
    tails: np.ndarray  # (m,) int32
    weights: np.ndarray  # (m,) float64

    @property
    def m(self) -> int:
        return self.heads.shape[0]

    def validate(self) -> None:
        if np.any(self.heads == self.tails):
            raise DataError("weighted graph contains self loops")
        if np.any(self.weights <= 0) or np.any(self.weights > 1.0):
            raise DataError("weights must lie in (0, 1]")
        mat = scipy.sparse.coo_matrix(
            (self.weights, (self.heads, self.tails)), shape=(self.n, self.n)
        ).tocsr()
        if (abs(mat - mat.T) > 1e-12 * max(1.0, abs(mat).max())).nnz:
            raise DataError("weighted graph is not symmetric")


def smooth_knn_calibration(distances: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Solve per-point kernel widths.

    For each row of neighbor distances (sorted ascending, self excluded),
    rho is the nearest-neighbor distance and sigma the binary-search solution
    of  sum_j exp(-max(0, d_ij - rho_i) / sigma_i) = log2(k)  to 1e-5 within
    64 iterations.  Degenerate rows (e.g. all-equal distances) drive the
    search to its lower bound and get clamped to a small scale instead.
    """
    d = np.asarray(distances, dtype=np.float64)
    n, k = d.shape
    if k < 2:
        raise DataError("need at least 2 neighbors to calibrate kernel widths")
    target = np.log2(k)
    rho = d[:, 0].copy()
    shifted = np.maximum(d - rho[:, None], 0.0)

    lo = np.zeros(n)
    hi = np.full(n, np.inf)
    mid = np.ones(n)
    for _ in range(SMOOTH_ITER):
        psum = np.exp(-shifted / mid[:, None]).sum(axis=1)
        err = psum - target
        done = np.abs(err) < SMOOTH_TOL
        if done.all():
            break
        too_big = (err > 0) & ~done
        hi = np.where(too_big, mid, hi)
        lo = np.where(~too_big & ~done, mid, lo)
        grow = ~too_big & ~done & np.isinf(hi)
        mid = np.where(done, mid, np.where(grow, mid * 2.0, (lo + hi) / 2.0))

    # clamp widths that collapsed toward zero (duplicate-heavy rows)
    mean_row = d.mean(axis=1)
    mean_all = d.mean() if d.size else 1.0
    floor = MIN_SIGMA_SCALE * np.where(rho > 0, mean_row, mean_all)
    sigma = np.maximum(mid, np.maximum(floor, 1e-12))
    return sigma, rho


def fuzzy_graph(g: KnnGraph) -> WeightedGraph:
    """Directed membership weights exp(-max(0, d - rho)/sigma), symmetrized
    by the probabilistic union w_ij = a + b - a*b."""
    n, k = g.indices.shape
    sigma, rho = smooth_knn_calibration(g.distances)
    w = np.exp(-np.maximum(g.distances - rho[:, None], 0.0) / sigma[:, None])

    rows = np.repeat(np.arange(n, dtype=np.int64), k)
    cols = g.indices.astype(np.int64).ravel()
    p = scipy.sparse.coo_matrix((w.ravel(), (rows, cols)), shape=(n, n)).tocsr()
    p.sum_duplicates()
    sym = p + p.T - p.multiply(p.T)
    sym = sym.tocoo()
    keep = sym.data > 0
    heads = sym.row[keep].astype(np.int32)
    tails = sym.col[keep].astype(np.int32)
    weights = np.clip(sym.data[keep], 0.0, 1.0)
    return WeightedGraph(n=n, heads=heads, tails=tails, weights=weights)
