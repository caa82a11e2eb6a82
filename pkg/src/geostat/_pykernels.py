"""Pure-Python (numpy/scipy) versions of the compiled pair-counting kernels.

Candidate pairs come from a k-d tree with a slightly inflated radius; the
squared distance is then recomputed as ``dx*dx + dy*dy`` so the accept/reject
decision is identical to the compiled path.
"""

import numpy as np
from scipy.spatial import cKDTree


def _radius(r2max):
    return float(np.sqrt(r2max)) * (1.0 + 1e-9) + 1e-12


def _cumhist(d2, r2):
    r2 = np.asarray(r2, dtype=np.float64)
    bins = np.searchsorted(r2, d2, side="left")
    return np.cumsum(np.bincount(bins, minlength=len(r2) + 1)[: len(r2)]).astype(np.int64)


def close_pairs(x, y, r2max):
    x = np.ascontiguousarray(x, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.float64)
    if len(x) < 2:
        return np.empty(0, np.int64), np.empty(0, np.int64), np.empty(0, np.float64)
    tree = cKDTree(np.column_stack([x, y]))
    pairs = tree.query_pairs(_radius(r2max), output_type="ndarray")
    if len(pairs) == 0:
        return np.empty(0, np.int64), np.empty(0, np.int64), np.empty(0, np.float64)
    a = np.minimum(pairs[:, 0], pairs[:, 1]).astype(np.int64)
    b = np.maximum(pairs[:, 0], pairs[:, 1]).astype(np.int64)
    dx = x[a] - x[b]
    dy = y[a] - y[b]
    d2 = dx * dx + dy * dy
    keep = d2 <= r2max
    a, b, d2 = a[keep], b[keep], d2[keep]
    srt = np.lexsort((b, a))
    return a[srt], b[srt], d2[srt]


def pair_hist_self(x, y, r2):
    r2 = np.asarray(r2, dtype=np.float64)
    if len(x) < 2 or len(r2) == 0:
        return np.zeros(len(r2), dtype=np.int64)
    _, _, d2 = close_pairs(x, y, r2[-1])
    return _cumhist(d2, r2)


def pair_hist_cross(xi, yi, xj, yj, r2):
    r2 = np.asarray(r2, dtype=np.float64)
    xi = np.asarray(xi, dtype=np.float64)
    yi = np.asarray(yi, dtype=np.float64)
    xj = np.asarray(xj, dtype=np.float64)
    yj = np.asarray(yj, dtype=np.float64)
    if len(xi) == 0 or len(xj) == 0 or len(r2) == 0:
        return np.zeros(len(r2), dtype=np.int64)
    ti = cKDTree(np.column_stack([xi, yi]))
    tj = cKDTree(np.column_stack([xj, yj]))
    sdm = ti.sparse_distance_matrix(tj, _radius(r2[-1]), output_type="ndarray")
    # sparse_distance_matrix drops exact zero distances; coincident points are
    # found separately below
    a = sdm["i"].astype(np.int64)
    b = sdm["j"].astype(np.int64)
    zero = ti.query_ball_tree(tj, 0.0)
    za = np.repeat(np.arange(len(xi)), [len(z) for z in zero])
    zb = np.fromiter((j for z in zero for j in z), dtype=np.int64, count=len(za))
    if len(za):
        both = np.concatenate([a * len(xj) + b, za * len(xj) + zb])
        both = np.unique(both)
        a, b = np.divmod(both, len(xj))
    dx = xi[a] - xj[b]
    dy = yi[a] - yj[b]
    d2 = dx * dx + dy * dy
    return _cumhist(d2[d2 <= r2[-1]], r2)


def label_hist(a, b, bins, is_i, m):
    cross = is_i[a] != is_i[b]
    return np.cumsum(np.bincount(bins[cross], minlength=m + 1)[:m])
