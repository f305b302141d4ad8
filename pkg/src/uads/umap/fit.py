"""End-to-end projection: kNN graph -> fuzzy graph -> init -> layout."""

import logging

import numpy as np

from ..errors import DataError
from ..seeding import row_hashes
from .fuzzy import fuzzy_graph
from .knn import knn_graph
from .layout import optimize_layout
from .params import Projection, UmapParams
from .spectral import hash_uniform, spectral_init

log = logging.getLogger(__name__)


def umap(
    x: np.ndarray,
    params: UmapParams | None = None,
    deterministic: bool = True,
    corpus_ref: str | None = None,
) -> Projection:
    params = params or UmapParams()
    params.validate()
    x = np.ascontiguousarray(x, dtype=np.float32)
    n = x.shape[0]
    if n < 3:
        raise DataError(f"projection needs at least 3 rows, got {n}")

    k = params.k_neighbors
    if k >= n:
        k = n - 1
        log.warning("k_neighbors %d >= n %d; clamping to %d", params.k_neighbors, n, k)

    graph = fuzzy_graph(knn_graph(x, k, mode=params.knn_mode, seed=params.seed))
    hashes = row_hashes(x, params.seed)

    coords = None
    if params.init == "spectral":
        coords = spectral_init(graph, hashes)
        if coords is None:
            log.warning("spectral init did not converge; falling back to random init")
    if coords is None:
        coords = np.stack(
            [hash_uniform(hashes, stream=21, lo=-10, hi=10),
             hash_uniform(hashes, stream=22, lo=-10, hi=10)],
            axis=1,
        )

    final = optimize_layout(graph, coords, params, hashes, deterministic=deterministic)
    return Projection(coords=final, params=params, corpus_ref=corpus_ref)
