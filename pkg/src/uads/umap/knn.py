"""k-nearest-neighbor graphs: blocked brute force, and NN-descent for large
corpora (Dong et al. style local joins over sampled candidate lists)."""

import logging
from dataclasses import dataclass

import numba
import numpy as np

from ..errors import DataError
from ..seeding import rng_for, stable_seed

log = logging.getLogger(__name__)

EXACT_LIMIT = 50_000

_U = np.uint64
_GOLDEN = _U(0x9E3779B97F4A7C15)


@dataclass
class KnnGraph:
    indices: np.ndarray  # (n, k) int32, no self entries
    distances: np.ndarray  # (n, k) float64, nondecreasing per row
    exact: bool

    @property
    def n(self) -> int:
        return self.indices.shape[0]

    @property
    def k(self) -> int:
        return self.indices.shape[1]

    def validate(self) -> None:
        n = self.n
        if np.any(self.indices == np.arange(n)[:, None]):
            raise DataError("knn graph contains self loops")
        if np.any(np.diff(self.distances, axis=1) < 0):
            raise DataError("knn distances must be nondecreasing per row")


def _pairwise_sq(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Squared euclidean distances; per-pair summation order fixed by shape."""
    if a.shape[0] * b.shape[0] * a.shape[1] <= 5_000_000:
        diff = a[:, None, :] - b[None, :, :]
        return np.einsum("ijk,ijk->ij", diff, diff)
    g = a @ b.T
    d2 = (a * a).sum(axis=1)[:, None] + (b * b).sum(axis=1)[None, :] - 2.0 * g
    return np.maximum(d2, 0.0)


def exact_knn(x: np.ndarray, k: int, block: int = 2048) -> tuple[np.ndarray, np.ndarray]:
    """True euclidean kNN (self excluded, ties broken by index)."""
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[0]
    if n <= k:
        raise DataError(f"need at least k+1={k + 1} points for kNN, got {n}")
    indices = np.empty((n, k), dtype=np.int32)
    dists = np.empty((n, k), dtype=np.float64)
    for start in range(0, n, block):
        stop = min(n, start + block)
        d2 = _pairwise_sq(x[start:stop], x)
        d2[np.arange(stop - start), np.arange(start, stop)] = np.inf
        cand = np.argpartition(d2, k - 1, axis=1)[:, :k]
        cand_d = np.take_along_axis(d2, cand, axis=1)
        for r in range(stop - start):
            order = np.lexsort((cand[r], cand_d[r]))
            indices[start + r] = cand[r][order]
            dists[start + r] = cand_d[r][order]
    return indices, np.sqrt(np.maximum(dists, 0.0))


@numba.njit(inline="always")
def _mix64(z):
    z = (z ^ (z >> _U(30))) * _U(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> _U(27))) * _U(0x94D049BB133111EB)
    return z ^ (z >> _U(31))


@numba.njit(inline="always")
def _sqdist(data, p, q):
    acc = 0.0
    for t in range(data.shape[1]):
        diff = np.float64(data[p, t]) - np.float64(data[q, t])
        acc += diff * diff
    return acc


@numba.njit(inline="always")
def _heap_push(idx_row, dist_row, flag_row, j, d):
    """Insert neighbor j at squared distance d into a sorted row; returns 1
    if the row changed."""
    k = idx_row.shape[0]
    if d >= dist_row[k - 1]:
        return 0
    for s in range(k):
        if idx_row[s] == j:
            return 0
    pos = k - 1
    while pos > 0 and dist_row[pos - 1] > d:
        idx_row[pos] = idx_row[pos - 1]
        dist_row[pos] = dist_row[pos - 1]
        flag_row[pos] = flag_row[pos - 1]
        pos -= 1
    idx_row[pos] = j
    dist_row[pos] = d
    flag_row[pos] = 1
    return 1


@numba.njit(inline="always")
def _cand_push(cand_row, prio_row, j, r):
    m = cand_row.shape[0]
    worst = 0
    for s in range(m):
        if cand_row[s] == j:
            return
        if prio_row[s] > prio_row[worst]:
            worst = s
    if r < prio_row[worst]:
        cand_row[worst] = j
        prio_row[worst] = r


@numba.njit(cache=True)
def _nn_descent_impl(data, k, seed, max_candidates, n_iters, delta):
    n = data.shape[0]
    idx = np.full((n, k), -1, dtype=np.int32)
    dist = np.full((n, k), np.inf, dtype=np.float64)
    flag = np.zeros((n, k), dtype=np.uint8)

    # random initialization
    for i in range(n):
        state = _mix64(_U(seed) ^ (_U(i) * _GOLDEN))
        filled = 0
        attempts = 0
        while filled < k and attempts < 20 * k:
            state = state + _GOLDEN
            j = np.int64(_mix64(state) % _U(n))
            attempts += 1
            if j == i:
                continue
            filled += _heap_push(idx[i], dist[i], flag[i], np.int32(j), _sqdist(data, i, j))
        step = 1
        while filled < k:
            j = (i + step) % n
            if j != i:
                filled += _heap_push(idx[i], dist[i], flag[i], np.int32(j), _sqdist(data, i, j))
            step += 1

    new_cand = np.full((n, max_candidates), -1, dtype=np.int32)
    new_prio = np.full((n, max_candidates), np.inf, dtype=np.float64)
    old_cand = np.full((n, max_candidates), -1, dtype=np.int32)
    old_prio = np.full((n, max_candidates), np.inf, dtype=np.float64)

    for it in range(n_iters):
        new_cand[:] = -1
        new_prio[:] = np.inf
        old_cand[:] = -1
        old_prio[:] = np.inf
        iter_seed = _mix64(_U(seed) ^ (_U(it + 1) * _GOLDEN))

        for i in range(n):
            for s in range(k):
                j = idx[i, s]
                if j < 0:
                    continue
                r = np.float64(_mix64(iter_seed ^ (_U(i * k + s) * _GOLDEN)))
                if flag[i, s]:
                    _cand_push(new_cand[i], new_prio[i], j, r)
                    _cand_push(new_cand[j], new_prio[j], np.int32(i), r)
                else:
                    _cand_push(old_cand[i], old_prio[i], j, r)
                    _cand_push(old_cand[j], old_prio[j], np.int32(i), r)

        # sampled new entries stop being new
        for i in range(n):
            for s in range(k):
                if flag[i, s]:
                    j = idx[i, s]
                    for c in range(max_candidates):
                        if new_cand[i, c] == j:
                            flag[i, s] = 0
                            break

        changes = 0
        for i in range(n):
            for a in range(max_candidates):
                p = new_cand[i, a]
                if p < 0:
                    continue
                for bpos in range(a + 1, max_candidates):
                    q = new_cand[i, bpos]
                    if q < 0 or q == p:
                        continue
                    d = _sqdist(data, p, q)
                    if d < dist[p, k - 1] or d < dist[q, k - 1]:
                        changes += _heap_push(idx[p], dist[p], flag[p], q, d)
                        changes += _heap_push(idx[q], dist[q], flag[q], p, d)
                for bpos in range(max_candidates):
                    q = old_cand[i, bpos]
                    if q < 0 or q == p:
                        continue
                    d = _sqdist(data, p, q)
                    if d < dist[p, k - 1] or d < dist[q, k - 1]:
                        changes += _heap_push(idx[p], dist[p], flag[p], q, d)
                        changes += _heap_push(idx[q], dist[q], flag[q], p, d)

        if changes <= delta * n * k:
            break

    return idx, dist


def nn_descent(
    x: np.ndarray,
    k: int,
    seed: int = 0,
    max_candidates: int = 50,
    n_iters: int | None = None,
    delta: float = 0.001,
) -> tuple[np.ndarray, np.ndarray]:
    """Approximate kNN via neighbor-of-neighbor local joins."""
    data = np.ascontiguousarray(x, dtype=np.float32)
    n = data.shape[0]
    if n <= k:
        raise DataError(f"need at least k+1={k + 1} points for kNN, got {n}")
    if n_iters is None:
        n_iters = max(5, int(round(np.log2(max(n, 2)))))
    idx, dist = _nn_descent_impl(
        data, k, np.uint64(seed & 0xFFFFFFFFFFFFFFFF), max_candidates, n_iters, delta
    )
    return idx.astype(np.int32), np.sqrt(np.maximum(dist, 0.0))


def knn_graph(x: np.ndarray, k: int, mode: str = "auto", seed: int = 0) -> KnnGraph:
    """kNN graph over corpus rows; ``auto`` uses brute force up to 50k rows."""
    x = np.asarray(x)
    n = x.shape[0]
    if n <= k:
        raise DataError(f"need at least k+1={k + 1} points for kNN, got {n}")
    if mode not in ("exact", "approximate", "auto"):
        raise DataError(f"unknown knn mode {mode!r}")
    if mode == "auto":
        mode = "exact" if n <= EXACT_LIMIT else "approximate"
    if mode == "exact":
        indices, dists = exact_knn(x, k)
        return KnnGraph(indices=indices, distances=dists, exact=True)
    indices, dists = nn_descent(x, k, seed=stable_seed(seed, "nn-descent"))
    return KnnGraph(indices=indices, distances=dists.astype(np.float64), exact=False)


def knn_recall(graph: KnnGraph, x: np.ndarray, sample_size: int = 1000, seed: int = 0) -> float:
    """Average overlap with the true kNN sets on an audited subsample."""
    x = np.asarray(x, dtype=np.float64)
    n, k = graph.indices.shape
    rows = np.arange(n)
    if n > sample_size:
        rows = np.sort(rng_for(seed, "knn-audit").choice(n, size=sample_size, replace=False))
    hits = 0
    for start in range(0, len(rows), 512):
        chunk = rows[start : start + 512]
        d2 = _pairwise_sq(x[chunk], x)
        d2[np.arange(len(chunk)), chunk] = np.inf
        true_idx = np.argpartition(d2, k - 1, axis=1)[:, :k]
        for r, row in enumerate(chunk):
            hits += len(set(true_idx[r].tolist()) & set(graph.indices[row].tolist()))
    return hits / (len(rows) * k)
