"""Separability and discriminative-support quantification.

SEP comes from the soft-margin linear SVM (margin + training error rate,
swept over penalty weights); DSUP from kNN-distance support coverage and a
distance-score AUC.  All distance computations are exact.
"""

import logging
from dataclasses import dataclass

import numpy as np
import pandas as pd

from .corpus import Corpus
from .errors import DataError
from .svm import DEFAULT_C_SWEEP, SepReport, svm_sep

log = logging.getLogger(__name__)

LOF_FLOOR = 1e-12


@dataclass
class DsupReport:
    k: int
    tau: float  # train support radius (q-quantile of leave-one-out kNN distance)
    q: float
    coverage: float  # fraction of normal test points within tau
    distance_auc: float
    distance_pauc: float
    space: str
    n_train: int
    n_test_normal: int
    n_test_anom: int


@dataclass
class MetricParams:
    c_sweep: tuple = DEFAULT_C_SWEEP
    knn_k: int = 5
    lof_k: int = 20
    quantile: float = 0.95
    pauc_p: float = 0.1


def _pairwise(query: np.ndarray, reference: np.ndarray, block: int = 1024) -> np.ndarray:
    q = np.asarray(query, dtype=np.float64)
    r = np.asarray(reference, dtype=np.float64)
    out = np.empty((q.shape[0], r.shape[0]))
    rn = (r * r).sum(axis=1)
    for start in range(0, q.shape[0], block):
        stop = min(q.shape[0], start + block)
        qb = q[start:stop]
        d2 = (qb * qb).sum(axis=1)[:, None] + rn[None, :] - 2.0 * (qb @ r.T)
        out[start:stop] = np.sqrt(np.maximum(d2, 0.0))
    return out


def knn_distance(
    query: np.ndarray,
    reference: np.ndarray,
    k: int,
    exclude_self: bool = False,
) -> np.ndarray:
    """Mean euclidean distance from each query point to its k nearest
    reference points.  ``exclude_self`` masks the identity pairing when the
    query rows *are* the reference rows (leave-one-out)."""
    query = np.atleast_2d(np.asarray(query, dtype=np.float64))
    reference = np.atleast_2d(np.asarray(reference, dtype=np.float64))
    n_ref = reference.shape[0]
    effective = n_ref - 1 if exclude_self else n_ref
    if k > effective:
        raise DataError(f"k={k} exceeds usable reference size {effective}")
    d = _pairwise(query, reference)
    if exclude_self:
        if query.shape[0] != n_ref:
            raise DataError("exclude_self requires query rows to be the reference rows")
        d[np.arange(n_ref), np.arange(n_ref)] = np.inf
    smallest = np.partition(d, k - 1, axis=1)[:, :k]
    return smallest.mean(axis=1)


def lof(query: np.ndarray, reference: np.ndarray, k: int = 20) -> np.ndarray:
    """Local outlier factor of query points against a reference set.

    Values near 1 are inliers; duplicated reference points are handled by
    flooring reachability sums at 1e-12.
    """
    query = np.atleast_2d(np.asarray(query, dtype=np.float64))
    reference = np.atleast_2d(np.asarray(reference, dtype=np.float64))
    m = reference.shape[0]
    if k >= m:
        raise DataError(f"lof requires reference size > k (got {m} <= {k})")

    d_ref = _pairwise(reference, reference)
    d_ref[np.arange(m), np.arange(m)] = np.inf
    nn_ref = np.argpartition(d_ref, k - 1, axis=1)[:, :k]
    nn_ref_d = np.take_along_axis(d_ref, nn_ref, axis=1)
    k_dist = np.partition(d_ref, k - 1, axis=1)[:, k - 1]

    reach_ref = np.maximum(nn_ref_d, k_dist[nn_ref])
    lrd_ref = 1.0 / np.maximum(reach_ref.mean(axis=1), LOF_FLOOR)

    d_q = _pairwise(query, reference)
    nn_q = np.argpartition(d_q, k - 1, axis=1)[:, :k]
    nn_q_d = np.take_along_axis(d_q, nn_q, axis=1)
    reach_q = np.maximum(nn_q_d, k_dist[nn_q])
    lrd_q = 1.0 / np.maximum(reach_q.mean(axis=1), LOF_FLOOR)
    return lrd_ref[nn_q].mean(axis=1) / lrd_q


def auc(pos_scores, neg_scores) -> float:
    """Rank-based (Mann-Whitney) AUC with midrank tie correction."""
    pos = np.asarray(pos_scores, dtype=np.float64).ravel()
    neg = np.asarray(neg_scores, dtype=np.float64).ravel()
    if pos.size == 0 or neg.size == 0:
        raise DataError("auc requires non-empty score sets")
    scores = np.concatenate([pos, neg])
    order = np.argsort(scores, kind="mergesort")
    ranks = np.empty(scores.shape[0])
    sorted_scores = scores[order]
    # midranks over runs of equal values
    i = 0
    while i < len(sorted_scores):
        j = i
        while j + 1 < len(sorted_scores) and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    r_pos = ranks[: pos.size].sum()
    return float((r_pos - pos.size * (pos.size + 1) / 2.0) / (pos.size * neg.size))


def roc_curve(pos_scores, neg_scores) -> tuple[np.ndarray, np.ndarray]:
    """Exact ROC polyline, ties rendered as single diagonal-ish segments."""
    pos = np.asarray(pos_scores, dtype=np.float64).ravel()
    neg = np.asarray(neg_scores, dtype=np.float64).ravel()
    values = np.unique(np.concatenate([pos, neg]))[::-1]
    fpr = [0.0]
    tpr = [0.0]
    tp = fp = 0
    for v in values:
        tp += int(np.sum(pos == v))
        fp += int(np.sum(neg == v))
        fpr.append(fp / neg.size)
        tpr.append(tp / pos.size)
    return np.array(fpr), np.array(tpr)


def pauc(pos_scores, neg_scores, p: float = 0.1) -> float:
    """Partial AUC over false-positive rate in [0, p], normalized by p."""
    if not 0 < p <= 1:
        raise DataError("pauc requires p in (0, 1]")
    pos = np.asarray(pos_scores, dtype=np.float64).ravel()
    neg = np.asarray(neg_scores, dtype=np.float64).ravel()
    if pos.size == 0 or neg.size == 0:
        raise DataError("pauc requires non-empty score sets")
    fpr, tpr = roc_curve(pos, neg)
    area = 0.0
    for i in range(1, len(fpr)):
        x0, x1 = fpr[i - 1], fpr[i]
        y0, y1 = tpr[i - 1], tpr[i]
        if x0 >= p:
            break
        if x1 > p:  # clip the crossing segment
            y1 = y0 + (y1 - y0) * (p - x0) / (x1 - x0)
            x1 = p
        area += 0.5 * (y0 + y1) * (x1 - x0)
    return float(area / p)


def dsup_report(
    train: np.ndarray,
    test_normal: np.ndarray,
    test_anom: np.ndarray,
    k: int = 5,
    q: float = 0.95,
    space: str = "projected_2d",
    pauc_p: float = 0.1,
) -> DsupReport:
    """Support radius from train leave-one-out kNN distances; coverage of
    normal test data within it; AUC of the kNN-distance anomaly score."""
    train = np.atleast_2d(np.asarray(train, dtype=np.float64))
    test_normal = np.atleast_2d(np.asarray(test_normal, dtype=np.float64))
    test_anom = np.atleast_2d(np.asarray(test_anom, dtype=np.float64))
    if train.shape[0] <= k:
        raise DataError(f"dsup needs more than k={k} train points, got {train.shape[0]}")
    if test_normal.shape[0] == 0 or test_anom.shape[0] == 0:
        raise DataError("dsup needs non-empty normal and anomalous test sets")
    loo = knn_distance(train, train, k, exclude_self=True)
    tau = float(np.quantile(loo, q))
    scores_n = knn_distance(test_normal, train, k)
    scores_a = knn_distance(test_anom, train, k)
    return DsupReport(
        k=k,
        tau=tau,
        q=q,
        coverage=float(np.mean(scores_n <= tau)),
        distance_auc=auc(scores_a, scores_n),
        distance_pauc=pauc(scores_a, scores_n, p=pauc_p),
        space=space,
        n_train=train.shape[0],
        n_test_normal=test_normal.shape[0],
        n_test_anom=test_anom.shape[0],
    )


def energy_landmark(
    corpus: Corpus,
    coords: np.ndarray,
    skip: int = 500,
    take: int = 100,
) -> np.ndarray:
    """Mean projected position of the ``take`` lowest-energy rows after
    skipping the ``skip`` lowest; energy ties break by row index."""
    energy = corpus.meta["energy"].to_numpy()
    coords = np.asarray(coords)
    if coords.shape[0] != len(energy):
        raise DataError("projection and corpus rows are misaligned")
    if len(energy) < skip + take or take < 1:
        raise DataError(f"need at least skip+take={skip + take} rows, got {len(energy)}")
    if np.any(np.isnan(energy)):
        raise DataError("corpus has no per-frame energies")
    order = np.argsort(energy, kind="stable")
    sel = order[skip : skip + take]
    return coords[sel].mean(axis=0)


# --- per-group SEP/DSUP evaluation (shared by the sweep and the service) -----


def group_metrics(
    matrix: np.ndarray,
    meta: pd.DataFrame,
    space: str,
    params: MetricParams | None = None,
) -> dict:
    """SEP (per C in the sweep, fit on labeled test rows) and DSUP
    (train vs test) for one row subset."""
    params = params or MetricParams()
    split = meta["split"].to_numpy()
    label = meta["label"].to_numpy()
    is_train = (split == "train") & (label == "normal")
    is_tn = (split == "test") & (label == "normal")
    is_ta = (split == "test") & (label == "anomalous")

    out: dict = {
        "space": space,
        "n_train": int(is_train.sum()),
        "n_test_normal": int(is_tn.sum()),
        "n_test_anom": int(is_ta.sum()),
        "sep": [],
        "sep_status": "ok",
        "dsup": None,
        "dsup_status": "ok",
    }

    if out["n_test_normal"] + out["n_test_anom"] == 0:
        out["sep_status"] = "skipped: unlabeled"
    elif out["n_test_normal"] == 0 or out["n_test_anom"] == 0:
        out["sep_status"] = "skipped: SEP undefined (single class)"
    else:
        pts = np.vstack([matrix[is_tn], matrix[is_ta]]).astype(np.float64)
        ys = np.concatenate([-np.ones(out["n_test_normal"]), np.ones(out["n_test_anom"])])
        reports: list[SepReport] = []
        alpha = None
        prev_c = None
        for c in params.c_sweep:
            if alpha is not None and prev_c:
                alpha = alpha * (c / prev_c)  # saturated duals scale with C
            rep, model = svm_sep(pts, ys, c=c, space=space, alpha0=alpha)
            alpha, prev_c = model.alpha, c
            reports.append(rep)
        out["sep"] = reports

    if out["n_train"] <= params.knn_k:
        out["dsup_status"] = f"skipped: need > {params.knn_k} train rows"
    elif out["n_test_normal"] == 0 or out["n_test_anom"] == 0:
        out["dsup_status"] = "skipped: needs normal and anomalous test rows"
    else:
        out["dsup"] = dsup_report(
            matrix[is_train],
            matrix[is_tn],
            matrix[is_ta],
            k=params.knn_k,
            q=params.quantile,
            space=space,
            pauc_p=params.pauc_p,
        )
    return out


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def sweep_columns(params: MetricParams) -> list[str]:
    cols = ["device", "section", "domain_scope", "representation", "stack_size", "space", "sep_status"]
    for c in params.c_sweep:
        cols += [f"sep_margin_c{c:g}", f"sep_error_c{c:g}", f"sep_objective_c{c:g}"]
    cols += [
        "dsup_status",
        "n_train",
        "n_test_normal",
        "n_test_anom",
        "dsup_k",
        "dsup_tau",
        "dsup_coverage",
        "dsup_distance_auc",
        "dsup_distance_pauc",
    ]
    return cols


def metrics_sweep(
    items: list[tuple[Corpus, np.ndarray]],
    params: MetricParams | None = None,
) -> list[dict]:
    """SEP + DSUP per (device, section, representation, stack, space) over
    per-device corpora and their aligned projections.

    ``items`` pairs each corpus with its projected 2D coordinates; original
    space metrics run on the corpus matrix itself.
    """
    params = params or MetricParams()
    rows: list[dict] = []
    for corpus, coords in items:
        if coords is not None and coords.shape[0] != len(corpus):
            raise DataError("projection and corpus rows are misaligned")
        meta = corpus.meta
        pairs = sorted(set(zip(meta["device"], meta["section"])))
        for device, section in pairs:
            mask = ((meta["device"] == device) & (meta["section"] == section)).to_numpy()
            sub_meta = meta.loc[mask]
            for space, mat in (("projected_2d", coords), ("original", corpus.matrix)):
                if mat is None:
                    continue
                g = group_metrics(mat[mask], sub_meta, space, params)
                row = {
                    "device": device,
                    "section": section,
                    "domain_scope": "all",
                    "representation": corpus.representation,
                    "stack_size": corpus.stack_size,
                    "space": space,
                    "sep_status": g["sep_status"],
                    "dsup_status": g["dsup_status"],
                    "n_train": g["n_train"],
                    "n_test_normal": g["n_test_normal"],
                    "n_test_anom": g["n_test_anom"],
                }
                for c, rep in zip(params.c_sweep, g["sep"] or [None] * len(params.c_sweep)):
                    suffix = f"c{c:g}"
                    row[f"sep_margin_{suffix}"] = rep.margin if rep else None
                    row[f"sep_error_{suffix}"] = rep.error_rate if rep else None
                    row[f"sep_objective_{suffix}"] = rep.objective if rep else None
                d = g["dsup"]
                row["dsup_k"] = d.k if d else None
                row["dsup_tau"] = d.tau if d else None
                row["dsup_coverage"] = d.coverage if d else None
                row["dsup_distance_auc"] = d.distance_auc if d else None
                row["dsup_distance_pauc"] = d.distance_pauc if d else None
                rows.append(row)
    return rows


def sweep_to_csv(rows: list[dict], params: MetricParams, path) -> None:
    import csv as _csv

    cols = sweep_columns(params)
    with open(path, "w", newline="") as fh:
        writer = _csv.writer(fh)
        writer.writerow(cols)
        for row in rows:
            writer.writerow([_fmt(row.get(c)) for c in cols])
