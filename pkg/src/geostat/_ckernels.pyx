# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled pair-counting kernels.

Every distance test is ``dx*dx + dy*dy <= r2[k]`` evaluated in that order;
the module must be built without FMA contraction so results match the
pure-Python fallback bit for bit.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport floor, sqrt

cnp.import_array()


cdef inline Py_ssize_t _bin(double d2, const double[::1] r2) noexcept nogil:
    cdef Py_ssize_t k = 0, m = r2.shape[0]
    while k < m and d2 > r2[k]:
        k += 1
    return k


cdef _grid(const double[::1] x, const double[::1] y, double cell):
    """Sort points into square cells; return (order, sorted keys, ncols)."""
    cdef Py_ssize_t n = x.shape[0], i
    xmin = np.min(x) if n else 0.0
    ymin = np.min(y) if n else 0.0
    ix = np.floor((np.asarray(x) - xmin) / cell).astype(np.int64)
    iy = np.floor((np.asarray(y) - ymin) / cell).astype(np.int64)
    ncols = int(iy.max()) + 3 if n else 3
    keys = (ix + 1) * ncols + (iy + 1)
    order = np.argsort(keys, kind="stable")
    return order.astype(np.intp), keys[order], ncols, xmin, ymin


cdef inline Py_ssize_t _lower(const long long[::1] keys, long long v) noexcept nogil:
    cdef Py_ssize_t lo = 0, hi = keys.shape[0], mid
    while lo < hi:
        mid = (lo + hi) >> 1
        if keys[mid] < v:
            lo = mid + 1
        else:
            hi = mid
    return lo


def pair_hist_self(x, y, r2):
    """Cumulative counts of unordered pairs with squared distance <= r2[k]."""
    cdef const double[::1] xv = np.ascontiguousarray(x, dtype=np.float64)
    cdef const double[::1] yv = np.ascontiguousarray(y, dtype=np.float64)
    cdef const double[::1] rv = np.ascontiguousarray(r2, dtype=np.float64)
    cdef Py_ssize_t n = xv.shape[0], m = rv.shape[0]
    hist = np.zeros(m + 1, dtype=np.int64)
    if n < 2 or m == 0:
        return np.zeros(m, dtype=np.int64)
    cdef long long[::1] h = hist
    order_, keys_, ncols_, xmin, ymin = _grid(xv, yv, max(sqrt(rv[m - 1]), 1e-12))
    cdef const Py_ssize_t[::1] order = order_
    cdef const long long[::1] keys = keys_
    cdef long long ncols = ncols_
    cdef Py_ssize_t s, t, a, b, lo, hi
    cdef int dxc
    cdef long long key
    cdef double dx, dy, d2
    with nogil:
        for s in range(n):
            a = order[s]
            key = keys[s]
            for dxc in range(-1, 2):
                lo = _lower(keys, key + dxc * ncols - 1)
                hi = _lower(keys, key + dxc * ncols + 2)
                if lo <= s:
                    lo = s + 1
                for t in range(lo, hi):
                    b = order[t]
                    dx = xv[a] - xv[b]
                    dy = yv[a] - yv[b]
                    d2 = dx * dx + dy * dy
                    h[_bin(d2, rv)] += 1
    return np.cumsum(hist[:m])


def pair_hist_cross(xi, yi, xj, yj, r2):
    """Cumulative counts of (i, j) pairs with squared distance <= r2[k]."""
    cdef const double[::1] xa = np.ascontiguousarray(xi, dtype=np.float64)
    cdef const double[::1] ya = np.ascontiguousarray(yi, dtype=np.float64)
    cdef const double[::1] xb = np.ascontiguousarray(xj, dtype=np.float64)
    cdef const double[::1] yb = np.ascontiguousarray(yj, dtype=np.float64)
    cdef const double[::1] rv = np.ascontiguousarray(r2, dtype=np.float64)
    cdef Py_ssize_t na = xa.shape[0], nb = xb.shape[0], m = rv.shape[0]
    hist = np.zeros(m + 1, dtype=np.int64)
    if na == 0 or nb == 0 or m == 0:
        return np.zeros(m, dtype=np.int64)
    cdef long long[::1] h = hist
    cell = max(sqrt(rv[m - 1]), 1e-12)
    # grid the j points, measured from the joint minimum so i points map onto it
    xmin = min(np.min(xa), np.min(xb))
    ymin = min(np.min(ya), np.min(yb))
    ixb = np.floor((np.asarray(xb) - xmin) / cell).astype(np.int64)
    iyb = np.floor((np.asarray(yb) - ymin) / cell).astype(np.int64)
    ixa = np.floor((np.asarray(xa) - xmin) / cell).astype(np.int64)
    iya = np.floor((np.asarray(ya) - ymin) / cell).astype(np.int64)
    ncols_ = int(max(iyb.max(), iya.max())) + 3
    keysb = (ixb + 1) * ncols_ + (iyb + 1)
    order_ = np.argsort(keysb, kind="stable").astype(np.intp)
    keys_sorted = np.ascontiguousarray(keysb[order_])
    keysa_ = np.ascontiguousarray((ixa + 1) * ncols_ + (iya + 1))
    cdef const Py_ssize_t[::1] order = order_
    cdef const long long[::1] keys = keys_sorted
    cdef const long long[::1] keysa = keysa_
    cdef long long ncols = ncols_
    cdef Py_ssize_t a, t, b, lo, hi
    cdef int dxc
    cdef double dx, dy, d2
    with nogil:
        for a in range(na):
            for dxc in range(-1, 2):
                lo = _lower(keys, keysa[a] + dxc * ncols - 1)
                hi = _lower(keys, keysa[a] + dxc * ncols + 2)
                for t in range(lo, hi):
                    b = order[t]
                    dx = xa[a] - xb[b]
                    dy = ya[a] - yb[b]
                    d2 = dx * dx + dy * dy
                    h[_bin(d2, rv)] += 1
    return np.cumsum(hist[:m])


def close_pairs(x, y, double r2max):
    """Unordered pairs (a < b) with squared distance <= r2max.

    Returns ``(a, b, d2)`` sorted by (a, b).
    """
    cdef const double[::1] xv = np.ascontiguousarray(x, dtype=np.float64)
    cdef const double[::1] yv = np.ascontiguousarray(y, dtype=np.float64)
    cdef Py_ssize_t n = xv.shape[0]
    if n < 2:
        return (np.empty(0, np.int64), np.empty(0, np.int64), np.empty(0, np.float64))
    order_, keys_, ncols_, xmin, ymin = _grid(xv, yv, max(sqrt(r2max), 1e-12))
    cdef const Py_ssize_t[::1] order = order_
    cdef const long long[::1] keys = keys_
    cdef long long ncols = ncols_
    cdef Py_ssize_t s, t, a, b, lo, hi, count = 0, pss
    cdef int dxc
    cdef long long key
    cdef double dx, dy, d2
    # pass 0 counts, pass 1 fills
    ia_ = np.empty(0, np.int64)
    ib_ = np.empty(0, np.int64)
    dd_ = np.empty(0, np.float64)
    cdef long long[::1] ia = ia_
    cdef long long[::1] ib = ib_
    cdef double[::1] dd = dd_
    for pss in range(2):
        if pss == 1:
            ia_ = np.empty(count, np.int64)
            ib_ = np.empty(count, np.int64)
            dd_ = np.empty(count, np.float64)
            ia, ib, dd = ia_, ib_, dd_
            count = 0
        with nogil:
            for s in range(n):
                a = order[s]
                key = keys[s]
                for dxc in range(-1, 2):
                    lo = _lower(keys, key + dxc * ncols - 1)
                    hi = _lower(keys, key + dxc * ncols + 2)
                    if lo <= s:
                        lo = s + 1
                    for t in range(lo, hi):
                        b = order[t]
                        dx = xv[a] - xv[b]
                        dy = yv[a] - yv[b]
                        d2 = dx * dx + dy * dy
                        if d2 <= r2max:
                            if pss == 1:
                                ia[count] = a if a < b else b
                                ib[count] = b if a < b else a
                                dd[count] = d2
                            count += 1
    srt = np.lexsort((ib_, ia_))
    return ia_[srt], ib_[srt], dd_[srt]


def label_hist(const long long[::1] a, const long long[::1] b, const long long[::1] bins,
               const unsigned char[::1] is_i, Py_ssize_t m):
    """Cumulative counts per bin of the pairs whose ends carry different labels."""
    hist = np.zeros(m + 1, dtype=np.int64)
    cdef long long[::1] h = hist
    cdef Py_ssize_t p, n = a.shape[0]
    with nogil:
        for p in range(n):
            if is_i[a[p]] != is_i[b[p]]:
                h[bins[p]] += 1
    return np.cumsum(hist[:m])
