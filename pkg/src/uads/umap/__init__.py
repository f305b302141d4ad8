"""From-scratch 2D UMAP: kNN graph, fuzzy neighborhood calibration, spectral
initialization and stochastic layout optimization, plus a trustworthiness
score for validating projections.

Randomness is keyed on per-row content hashes, so permuting the input rows
and inverse-permuting the output reproduces the exact same coordinates in
single-threaded mode.
"""

from .params import UmapParams, Projection
from .knn import KnnGraph, knn_graph, exact_knn, nn_descent, knn_recall
from .fuzzy import WeightedGraph, fuzzy_graph, smooth_knn_calibration
from .curve import fit_embedding_curve
from .spectral import spectral_init
from .layout import optimize_layout
from .trust import trustworthiness
from .fit import umap

__all__ = [
    "UmapParams",
    "Projection",
    "KnnGraph",
    "WeightedGraph",
    "knn_graph",
    "exact_knn",
    "nn_descent",
    "knn_recall",
    "fuzzy_graph",
    "smooth_knn_calibration",
    "fit_embedding_curve",
    "spectral_init",
    "optimize_layout",
    "trustworthiness",
    "umap",
]
