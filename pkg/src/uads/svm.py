"""Soft-margin linear SVM solvers used for separability scoring.

The production path maximizes the dual of

    min 1/2 ||beta||^2 + C * sum_i xi_i,   xi_i = hinge(1 - y_i (x_i.beta + b0))

with accelerated projected gradient ascent (exact projection onto the box
intersected with the y.alpha = 0 hyperplane) and a duality-gap stopping rule,
so the returned objective carries its own accuracy certificate.  A slow
full-batch subgradient reference solver doubles as the test oracle.

When the optimum is degenerate (beta == 0, e.g. XOR-like inputs) every
hyperplane direction is equally optimal up to tolerance; for small 2-D
instances we then pick, among hyperplanes whose objective stays within the
gap tolerance, one that minimizes the training error rate.
"""

import logging
from dataclasses import dataclass

import numpy as np

from .errors import DataError

log = logging.getLogger(__name__)

DEFAULT_C_SWEEP = (0.01, 0.1, 1.0, 10.0, 100.0)
GAP_TOL = 1e-5
MAX_ITER = 20_000
POLISH_MAX_N = 256


@dataclass
class SvmModel:
    beta: np.ndarray
    beta0: float
    C: float
    slacks: np.ndarray
    labels: np.ndarray
    points: np.ndarray
    alpha: np.ndarray | None = None  # dual variables (warm-start handle)


@dataclass
class SepReport:
    margin: float  # 2 / ||beta||
    error_rate: float  # fraction misclassified by the returned hyperplane
    n: int
    objective: float
    C: float
    space: str
    gap: float  # certified duality gap at return
    degenerate: bool = False


def svm_objective(x: np.ndarray, y: np.ndarray, beta: np.ndarray, beta0: float, c: float) -> float:
    margins = y * (x @ beta + beta0)
    return 0.5 * float(beta @ beta) + c * float(np.maximum(0.0, 1.0 - margins).sum())


def _error_rate(x: np.ndarray, y: np.ndarray, beta: np.ndarray, beta0: float) -> float:
    pred = np.where(x @ beta + beta0 > 0, 1.0, -1.0)
    return float(np.mean(pred != y))


def _optimal_bias(y: np.ndarray, margins_wo_bias: np.ndarray) -> float:
    """Exact minimizer of sum_i hinge(1 - y_i (m_i + b0)) over b0.

    The subgradient gains slope 1 at each breakpoint, starting at -n_pos, so
    it crosses zero between the n_pos-th and (n_pos+1)-th smallest
    breakpoints; any flat stretch is resolved to its midpoint.
    """
    n_pos = int(np.sum(y > 0))
    bps = np.where(y > 0, 1.0 - margins_wo_bias, -1.0 - margins_wo_bias)
    bps = np.sort(bps)
    return float((bps[n_pos - 1] + bps[n_pos]) / 2.0)


def _project_box_hyperplane(v: np.ndarray, y: np.ndarray, c: float) -> np.ndarray:
    """Euclidean projection onto {0 <= a <= C, y.a = 0}.

    The balance h(mu) = y . clip(v - mu*y, 0, C) is piecewise linear and
    nonincreasing, with slope -1 exactly while each coordinate is strictly
    inside the box; the crossing segment is found by an event sweep.
    """
    pos = y > 0
    lows = np.where(pos, v - c, -v)
    highs = np.where(pos, v, c - v)
    ts = np.concatenate([lows, highs])
    deltas = np.concatenate([-np.ones(v.shape[0]), np.ones(v.shape[0])])
    order = np.argsort(ts, kind="mergesort")
    ts = ts[order]
    slopes = np.cumsum(deltas[order])
    n_pos = int(pos.sum())
    h = c * n_pos + np.concatenate([[0.0], np.cumsum(slopes[:-1] * np.diff(ts))])
    j = int(np.argmax(h <= 0.0))
    if h[j] > 0:  # numerically flat tail; land on the last event
        mu = ts[-1]
    elif j == 0:
        mu = ts[0]
    elif slopes[j - 1] < 0:
        mu = ts[j - 1] + h[j - 1] / (-slopes[j - 1])
    else:
        mu = ts[j - 1]
    return np.clip(v - mu * y, 0.0, c)


def svm_dual_solve(
    x: np.ndarray,
    y: np.ndarray,
    c: float,
    tol: float = GAP_TOL,
    max_iter: int = MAX_ITER,
    alpha0: np.ndarray | None = None,
) -> tuple[np.ndarray, float, np.ndarray, float]:
    """Maximal-violating-pair coordinate ascent on the dual.

    With u_i = y_i - (X w)_i the KKT conditions read
    max(u over the raisable set) <= min(u over the lowerable set); each step
    picks that violating pair and moves the analytically optimal amount along
    the feasible direction.  Returns (beta, beta0, alpha, gap) with a
    certified duality gap at the returned iterate.
    """
    n = x.shape[0]
    if alpha0 is not None and alpha0.shape[0] == n:
        alpha = _project_box_hyperplane(np.clip(alpha0, 0.0, c), y, c)
    else:
        alpha = np.zeros(n)
    w = x.T @ (y * alpha)
    m = x @ w
    pos = y > 0
    best = None  # (gap, beta, beta0)

    def certify():
        nonlocal best
        beta0 = _optimal_bias(y, m)
        primal = svm_objective(x, y, w, beta0, c)
        dual = float(alpha.sum() - 0.5 * (w @ w))
        gap = primal - dual
        if best is None or gap < best[0]:
            best = (gap, w.copy(), beta0)
        return gap, primal

    kkt_tol = 1e-8 * (1.0 + float(np.abs(x).max()) ** 2)
    for it in range(max_iter):
        u = y - m
        raisable = np.where(pos, alpha < c, alpha > 0)
        lowerable = np.where(pos, alpha > 0, alpha < c)
        u_up = np.where(raisable, u, -np.inf)
        u_low = np.where(lowerable, u, np.inf)
        i = int(np.argmax(u_up))
        violation = u_up[i] - float(np.min(u_low))
        if violation <= kkt_tol:
            gap, primal = certify()
            break
        if it % 64 == 0:
            gap, primal = certify()
            if gap <= tol * max(1.0, abs(primal)):
                break
        # second-order partner choice: best gain (u_i - u_j)^2 / ||x_i - x_j||^2
        diffs = x - x[i]
        eta_all = np.einsum("ij,ij->i", diffs, diffs)
        b = u_up[i] - u
        usable = lowerable & (b > 0)
        usable[i] = False
        if not usable.any():
            gap, primal = certify()
            break
        gain = np.where(usable, b * b / np.maximum(eta_all, 1e-12), -np.inf)
        j = int(np.argmax(gain))
        eta = float(eta_all[j])
        d_max = min(c - alpha[i] if pos[i] else alpha[i],
                    alpha[j] if pos[j] else c - alpha[j])
        d = d_max if eta <= 0 else min(d_max, float(b[j]) / eta)
        alpha[i] += d * y[i]
        alpha[j] -= d * y[j]
        diff = x[i] - x[j]
        w += d * diff
        m += d * (x @ diff)
    gap, _ = certify()

    gap, beta, beta0 = best
    return beta, float(beta0), alpha, float(gap)


def _best_linear_2d(x: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, float, int]:
    """Brute-force minimum-error hyperplane for small 2-D instances: normals
    perpendicular to point differences plus the axes, thresholds between
    consecutive projections."""
    n = x.shape[0]
    normals = [np.array([1.0, 0.0]), np.array([0.0, 1.0])]
    for i in range(n):
        for j in range(i + 1, n):
            d = x[j] - x[i]
            nrm = np.linalg.norm(d)
            if nrm > 1e-12:
                normals.append(np.array([-d[1], d[0]]) / nrm)
    best = (n + 1, np.array([1.0, 0.0]), 0.0)
    for u in normals:
        for sgn in (1.0, -1.0):
            w = sgn * u
            s = x @ w
            order = np.argsort(s, kind="stable")
            s_sorted = s[order]
            y_sorted = y[order]
            # threshold candidates: below all points, then after each point
            cuts = np.concatenate([[s_sorted[0] - 1.0], (s_sorted[:-1] + s_sorted[1:]) / 2.0, [s_sorted[-1] + 1.0]])
            pos_left = np.concatenate([[0], np.cumsum(y_sorted > 0)])
            neg_left = np.concatenate([[0], np.cumsum(y_sorted < 0)])
            n_pos, n_neg = pos_left[-1], neg_left[-1]
            for ci, theta in enumerate(cuts):
                #  predict +1 for s > theta
                errors = pos_left[ci] + (n_neg - neg_left[ci])
                if errors < best[0]:
                    best = (int(errors), w.copy(), float(theta))
    errors, w, theta = best
    return w, theta, errors


def svm_sep(
    points: np.ndarray,
    labels: np.ndarray,
    c: float,
    space: str = "projected_2d",
    tol: float = GAP_TOL,
    max_iter: int = MAX_ITER,
    alpha0: np.ndarray | None = None,
) -> tuple[SepReport, SvmModel]:
    """Fit the penalized max-margin separator and report margin and error."""
    x = np.asarray(points, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] != y.shape[0]:
        raise DataError("points and labels must align")
    if not np.all(np.isfinite(x)):
        raise DataError("points must be finite")
    if not set(np.unique(y)) <= {-1.0, 1.0}:
        raise DataError("labels must be -1/+1")
    if len(np.unique(y)) < 2:
        raise DataError("SEP undefined: both classes required")
    if c <= 0:
        raise DataError("C must be positive")

    beta, beta0, alpha, gap = svm_dual_solve(x, y, c, tol=tol, max_iter=max_iter, alpha0=alpha0)
    objective = svm_objective(x, y, beta, beta0, c)
    degenerate = False

    scale = 1.0 + float(np.abs(x).max())
    trivial_rate = min(np.sum(y > 0), np.sum(y < 0)) / x.shape[0]
    looks_degenerate = (
        np.linalg.norm(beta) * scale < 1e-6
        or _error_rate(x, y, beta, beta0) >= trivial_rate
    )
    if looks_degenerate and x.shape[1] == 2 and x.shape[0] <= POLISH_MAX_N:
        # every direction is optimal to within tolerance; take the one with
        # the fewest training errors, scaled into the tolerance ball
        w, theta, errors = _best_linear_2d(x, y)
        if errors / x.shape[0] < _error_rate(x, y, beta, beta0):
            t = 1e-4 / scale
            for _ in range(8):
                cand_beta = t * w
                candidates = [(-t * theta,), (_optimal_bias(y, x @ cand_beta),)]
                ok = []
                for (b0,) in candidates:
                    obj = svm_objective(x, y, cand_beta, b0, c)
                    if obj <= objective * (1.0 + 1e-3) + 1e-12:
                        ok.append((_error_rate(x, y, cand_beta, b0), obj, b0))
                if ok:
                    err, obj, b0 = min(ok)
                    beta, beta0, objective, degenerate = cand_beta, b0, obj, True
                    break
                t *= 0.1

    margins = y * (x @ beta + beta0)
    slacks = np.maximum(0.0, 1.0 - margins)
    norm_b = float(np.linalg.norm(beta))
    report = SepReport(
        margin=(2.0 / norm_b) if norm_b > 0 else float("inf"),
        error_rate=_error_rate(x, y, beta, beta0),
        n=x.shape[0],
        objective=objective,
        C=float(c),
        space=space,
        gap=gap,
        degenerate=degenerate,
    )
    model = SvmModel(
        beta=beta, beta0=float(beta0), C=float(c), slacks=slacks, labels=y, points=x, alpha=alpha
    )
    return report, model


def svm_reference_subgradient(
    points: np.ndarray,
    labels: np.ndarray,
    c: float,
    iters: int = 100_000,
) -> tuple[np.ndarray, float, float]:
    """Oracle: deterministic full-batch subgradient descent on beta with the
    bias minimized exactly (ternary search) each step; tracks the best
    objective seen.  Meant for instances up to ~1k points."""
    x = np.asarray(points, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    n = x.shape[0]
    if n > 1000:
        raise DataError("reference solver is limited to 1000 points")

    def bias_breakpoint_min(m: np.ndarray) -> float:
        # hinge sum over b0 is piecewise linear with kinks at y_i - m_i;
        # scan kinks and midpoints and take the best
        bps = np.sort(y - m)
        cands = np.concatenate([[bps[0] - 1.0], bps, (bps[:-1] + bps[1:]) / 2.0, [bps[-1] + 1.0]])
        losses = np.maximum(0.0, 1.0 - y[None, :] * (m[None, :] + cands[:, None])).sum(axis=1)
        return float(cands[int(np.argmin(losses))])

    beta = np.zeros(x.shape[1])
    best_obj = np.inf
    best = (beta.copy(), 0.0)
    for t in range(iters):
        m = x @ beta
        beta0 = bias_breakpoint_min(m)
        margins = y * (m + beta0)
        obj = 0.5 * float(beta @ beta) + c * float(np.maximum(0.0, 1.0 - margins).sum())
        if obj < best_obj:
            best_obj = obj
            best = (beta.copy(), beta0)
        active = margins < 1.0
        grad = beta - c * (y[active, None] * x[active]).sum(axis=0)
        beta = beta - grad / (t + 2.0)  # strongly-convex step 1/(lambda (t+2))
    return best[0], best[1], float(best_obj)
