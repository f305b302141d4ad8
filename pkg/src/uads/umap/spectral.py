"""Spectral layout initialization.

Coordinates are the 2nd and 3rd smallest eigenvectors of the symmetric
normalized graph Laplacian, found by power iteration with deflation on
2*I - L.  Edge accumulation runs in row-content-hash order so the result is
equivariant to input row permutation; non-convergence falls back to seeded
uniform random coordinates (handled by the caller).
"""

import logging

import numba
import numpy as np

from .fuzzy import WeightedGraph

log = logging.getLogger(__name__)

_U = np.uint64
_GOLDEN = _U(0x9E3779B97F4A7C15)
_B1 = _U(0xBF58476D1CE4E5B9)
_B2 = _U(0x94D049BB133111EB)

MAX_ITER = 500
TOL = 1e-4


def _mix_np(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> _U(30))) * _B1
    z = (z ^ (z >> _U(27))) * _B2
    return z ^ (z >> _U(31))


def hash_uniform(hashes: np.ndarray, stream: int, lo: float = -1.0, hi: float = 1.0) -> np.ndarray:
    """Per-row uniforms derived from content hashes; follows rows under
    permutation."""
    salt = _U((stream * 0x9E3779B97F4A7C15) & 0xFFFFFFFFFFFFFFFF)
    z = _mix_np(hashes ^ salt)
    u = z.astype(np.float64) / 18446744073709551616.0
    return lo + (hi - lo) * u


@numba.njit(cache=True)
def _edge_accumulate(heads, tails, values, v, out):
    out[:] = 0.0
    for e in range(heads.shape[0]):
        out[heads[e]] += values[e] * v[tails[e]]


def canonical_edge_order(graph: WeightedGraph, hashes: np.ndarray) -> np.ndarray:
    """Edge visit order keyed by endpoint content hashes, not positions."""
    return np.lexsort((hashes[graph.tails], hashes[graph.heads]))


def spectral_init(
    graph: WeightedGraph,
    hashes: np.ndarray,
    max_iter: int = MAX_ITER,
    tol: float = TOL,
) -> np.ndarray | None:
    """Returns (n, 2) coordinates scaled to max-abs 10, or None on
    non-convergence."""
    n = graph.n
    order = canonical_edge_order(graph, hashes)
    heads = np.ascontiguousarray(graph.heads[order])
    tails = np.ascontiguousarray(graph.tails[order])
    weights = np.ascontiguousarray(graph.weights[order])

    deg = np.zeros(n)
    ones = np.ones(n)
    _edge_accumulate(heads, tails, weights, ones, deg)
    deg = np.maximum(deg, 1e-12)
    norm_w = weights / np.sqrt(deg[heads] * deg[tails])

    scratch = np.zeros(n)

    def apply_a(v: np.ndarray) -> np.ndarray:
        # A = 2I - L = I + D^-1/2 W D^-1/2
        _edge_accumulate(heads, tails, norm_w, v, scratch)
        return v + scratch

    vecs: list[np.ndarray] = []
    for comp in range(3):
        v = hash_uniform(hashes, stream=comp + 1)
        for u in vecs:
            v -= (u @ v) * u
        nv = np.linalg.norm(v)
        if nv < 1e-12:
            return None
        v /= nv
        converged = False
        for _ in range(max_iter):
            w = apply_a(v)
            for u in vecs:
                w -= (u @ w) * u
            nw = np.linalg.norm(w)
            if nw < 1e-12:
                return None
            w /= nw
            if w @ v < 0:
                w = -w
            delta = np.max(np.abs(w - v))
            v = w
            if delta < tol:
                converged = True
                break
        if not converged:
            log.info("spectral init failed to converge for eigenvector %d", comp)
            return None
        vecs.append(v)

    coords = np.stack([vecs[1], vecs[2]], axis=1)
    scale = np.max(np.abs(coords))
    if scale < 1e-12:
        return None
    coords = coords * (10.0 / scale)
    coords[:, 0] += 1e-4 * hash_uniform(hashes, stream=11)
    coords[:, 1] += 1e-4 * hash_uniform(hashes, stream=12)
    return coords
