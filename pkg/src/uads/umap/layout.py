"""Stochastic layout optimization.

Attractive updates fire on graph edges at a rate proportional to edge weight
(via per-edge epoch schedules); each visit also applies repulsive updates
against uniformly drawn negative samples.  The learning rate decays linearly
to zero and per-component gradient steps are clipped to +-4.

Determinism: edges are visited in row-content-hash order and every random
draw comes from a per-edge counter-based stream, so with a fixed seed the
single-threaded path is bit-reproducible and equivariant to input row
permutation.  The parallel path allows unsynchronized concurrent coordinate
updates and gives up bitwise reproducibility.
"""

import logging
import math

import numba
import numpy as np

from ..errors import DataError
from .curve import fit_embedding_curve
from .fuzzy import WeightedGraph
from .params import UmapParams
from .spectral import _mix_np, canonical_edge_order

log = logging.getLogger(__name__)

_U = np.uint64
_GOLDEN = _U(0x9E3779B97F4A7C15)
GRAD_CLIP = 4.0
STRONG_EDGE_WEIGHT = 0.99


def make_epochs_per_sample(weights: np.ndarray, n_epochs: int) -> np.ndarray:
    """Epoch interval between visits of each edge: heaviest edge every epoch,
    an edge of half that weight every other epoch, and so on."""
    result = -1.0 * np.ones(weights.shape[0])
    n_samples = n_epochs * (weights / weights.max())
    result[n_samples > 0] = float(n_epochs) / n_samples[n_samples > 0]
    return result


@numba.njit(inline="always")
def _mix(z):
    z = (z ^ (z >> _U(30))) * _U(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> _U(27))) * _U(0x94D049BB133111EB)
    return z ^ (z >> _U(31))


@numba.njit(inline="always")
def _clip(v):
    if v > GRAD_CLIP:
        return GRAD_CLIP
    if v < -GRAD_CLIP:
        return -GRAD_CLIP
    return v


@numba.njit(inline="always")
def _is_strong(strong_ids, lo, hi, v):
    while lo < hi:
        mid = (lo + hi) // 2
        if strong_ids[mid] < v:
            lo = mid + 1
        else:
            hi = mid
    return lo < strong_ids.shape[0] and strong_ids[lo] == v


@numba.njit(inline="always")
def _edge_step(
    coords, i, j, e, epoch, alpha, a, b, gamma, n,
    eps, eons, eps_neg, eonns, state, canon_pos, strong_ids, s_lo, s_hi,
):
    xi0 = np.float64(coords[i, 0])
    xi1 = np.float64(coords[i, 1])
    xj0 = np.float64(coords[j, 0])
    xj1 = np.float64(coords[j, 1])
    d0 = xi0 - xj0
    d1 = xi1 - xj1
    d2 = d0 * d0 + d1 * d1
    if d2 > 0.0:
        gc = (-2.0 * a * b * math.pow(d2, b - 1.0)) / (a * math.pow(d2, b) + 1.0)
        g0 = _clip(gc * d0) * alpha
        g1 = _clip(gc * d1) * alpha
        coords[i, 0] = np.float32(xi0 + g0)
        coords[i, 1] = np.float32(xi1 + g1)
        coords[j, 0] = np.float32(xj0 - g0)
        coords[j, 1] = np.float32(xj1 - g1)
    eons[e] += eps[e]

    n_neg = int((epoch - eonns[e]) / eps_neg[e])
    s = state[e]
    for _ in range(n_neg):
        s = s + _GOLDEN
        kpos = canon_pos[np.int64(_mix(s) % _U(n))]
        if kpos == i:
            continue
        if _is_strong(strong_ids, s_lo, s_hi, kpos):
            continue
        xi0 = np.float64(coords[i, 0])
        xi1 = np.float64(coords[i, 1])
        d0 = xi0 - np.float64(coords[kpos, 0])
        d1 = xi1 - np.float64(coords[kpos, 1])
        d2 = d0 * d0 + d1 * d1
        if d2 > 0.0:
            gc = (2.0 * gamma * b) / ((0.001 + d2) * (a * math.pow(d2, b) + 1.0))
            g0 = _clip(gc * d0) * alpha
            g1 = _clip(gc * d1) * alpha
        else:
            g0 = GRAD_CLIP * alpha
            g1 = GRAD_CLIP * alpha
        coords[i, 0] = np.float32(xi0 + g0)
        coords[i, 1] = np.float32(xi1 + g1)
    state[e] = s
    eonns[e] += n_neg * eps_neg[e]


@numba.njit(cache=True)
def _optimize_serial(
    coords, heads, tails, eps, seeds, canon_pos,
    strong_indptr, strong_ids, n_epochs, alpha0, a, b, gamma, neg_rate,
):
    n = coords.shape[0]
    m = heads.shape[0]
    eons = eps.copy()
    eps_neg = eps / neg_rate
    eonns = eps_neg.copy()
    state = seeds.copy()
    for epoch in range(n_epochs):
        alpha = alpha0 * (1.0 - epoch / n_epochs)
        for e in range(m):
            if eps[e] < 0 or eons[e] > epoch:
                continue
            i = heads[e]
            _edge_step(
                coords, i, tails[e], e, epoch, alpha, a, b, gamma, n,
                eps, eons, eps_neg, eonns, state, canon_pos,
                strong_ids, strong_indptr[i], strong_indptr[i + 1],
            )


@numba.njit(cache=True, parallel=True)
def _optimize_parallel(
    coords, heads, tails, eps, seeds, canon_pos,
    strong_indptr, strong_ids, n_epochs, alpha0, a, b, gamma, neg_rate,
):
    n = coords.shape[0]
    m = heads.shape[0]
    eons = eps.copy()
    eps_neg = eps / neg_rate
    eonns = eps_neg.copy()
    state = seeds.copy()
    for epoch in range(n_epochs):
        alpha = alpha0 * (1.0 - epoch / n_epochs)
        for e in numba.prange(m):
            if eps[e] < 0 or eons[e] > epoch:
                continue
            i = heads[e]
            _edge_step(
                coords, i, tails[e], e, epoch, alpha, a, b, gamma, n,
                eps, eons, eps_neg, eonns, state, canon_pos,
                strong_ids, strong_indptr[i], strong_indptr[i + 1],
            )


def optimize_layout(
    graph: WeightedGraph,
    init_coords: np.ndarray,
    params: UmapParams,
    hashes: np.ndarray,
    n_epochs: int | None = None,
    deterministic: bool = True,
    gamma: float = 1.0,
) -> np.ndarray:
    """Run the layout SGD from ``init_coords``; returns float32 (n, 2)."""
    n = graph.n
    if n < 3:
        raise DataError(f"layout optimization needs at least 3 points, got {n}")
    coords = np.ascontiguousarray(init_coords, dtype=np.float32).copy()
    if coords.shape != (n, 2):
        raise DataError(f"init coords shape {coords.shape} != ({n}, 2)")
    if not np.all(np.isfinite(coords)):
        raise DataError("non-finite init coordinates")
    epochs = params.epochs if n_epochs is None else n_epochs
    if epochs == 0:
        return coords

    a, b = fit_embedding_curve(params.min_dist, params.spread)
    order = canonical_edge_order(graph, hashes)
    heads = np.ascontiguousarray(graph.heads[order].astype(np.int64))
    tails = np.ascontiguousarray(graph.tails[order].astype(np.int64))
    weights = graph.weights[order]
    eps = make_epochs_per_sample(weights, epochs)

    salt = _U((params.seed * 0x9E3779B97F4A7C15) & 0xFFFFFFFFFFFFFFFF)
    seeds = _mix_np(_mix_np(hashes[heads] ^ salt) ^ (hashes[tails] * _U(0xBF58476D1CE4E5B9)))

    rank_order = np.argsort(hashes, kind="stable")
    canon_pos = np.ascontiguousarray(rank_order.astype(np.int64))

    strong = weights > STRONG_EDGE_WEIGHT
    sh, st = heads[strong], tails[strong]
    s_order = np.lexsort((st, sh))
    sh, st = sh[s_order], st[s_order]
    strong_indptr = np.searchsorted(sh, np.arange(n + 1), side="left").astype(np.int64)
    strong_ids = np.ascontiguousarray(st.astype(np.int64))

    kernel = _optimize_serial if deterministic else _optimize_parallel
    kernel(
        coords, heads, tails, eps, seeds, canon_pos,
        strong_indptr, strong_ids, epochs,
        float(params.initial_learning_rate), float(a), float(b), float(gamma),
        float(params.negative_sample_rate),
    )
    if not np.all(np.isfinite(coords)):
        raise DataError("layout optimization produced non-finite coordinates")
    return coords
