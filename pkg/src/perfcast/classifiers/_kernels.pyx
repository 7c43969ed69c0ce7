# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
# distutils: language = c++
"""Compiled split search, partitioning and tree application.

Mirrors ``_fallback.py`` operation for operation so both backends produce
bitwise-identical trees; keep the two files in lockstep.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport fabs
from libcpp.vector cimport vector
from libcpp.pair cimport pair
from libcpp.algorithm cimport sort

cnp.import_array()

ctypedef cnp.int64_t i64
ctypedef pair[double, i64] entry_t

cdef double TIE_TOL = 1e-12
DEF MAX_STATS = 4


cdef inline bint _better(double proxy, i64 feat, double thr,
                         double best, i64 best_feat, double best_thr) nogil:
    cdef double scale = fabs(best)
    if scale < 1.0:
        scale = 1.0
    if best_feat < 0:
        return True
    if proxy > best + TIE_TOL * scale:
        return True
    if proxy < best - TIE_TOL * scale:
        return False
    if feat != best_feat:
        return feat < best_feat
    return thr < best_thr


cdef inline double _lookup_row(const double[::1] data, const i64[::1] indices,
                               i64 lo, i64 hi, i64 col) nogil:
    cdef i64 end = hi, mid
    while lo < hi:
        mid = (lo + hi) >> 1
        if indices[mid] < col:
            lo = mid + 1
        else:
            hi = mid
    if lo < end and indices[lo] == col:
        return data[lo]
    return 0.0


def best_split(
    const double[::1] csc_data, const i64[::1] csc_indices, const i64[::1] csc_indptr,
    const double[::1] csr_data, const i64[::1] csr_indices, const i64[::1] csr_indptr,
    const i64[::1] rows, const double[::1] weight, const double[:, ::1] stats,
    const i64[::1] features, int max_features, int min_leaf,
    unsigned char[::1] mark,
):
    """Best axis-aligned split of the node holding ``rows``.

    Returns ``(feature, threshold, children_proxy, parent_proxy, n_visited)``;
    ``feature`` is -1 when no valid split exists.
    """
    cdef Py_ssize_t n_node = rows.shape[0]
    cdef int k = stats.shape[1]
    cdef Py_ssize_t r, j, q, m, fi
    cdef i64 row, f, a, b, best_feat = -1
    cdef double tot[MAX_STATS]
    cdef double nzs[MAX_STATS]
    cdef double zero[MAX_STATS]
    cdef double left[MAX_STATS]
    cdef double W = 0.0, nzW, zeroW, WL, WR, val, nextval, thr, proxy, sl, sr, rj
    cdef double parent = 0.0, best = 0.0, best_thr = 0.0
    cdef i64 nL, n_nz, n_zero
    cdef int visited = 0
    cdef bint has_neg, has_pos, zero_done, boundary
    cdef vector[entry_t] ents
    cdef double cur_val
    cdef Py_ssize_t n_features = features.shape[0]

    if k > MAX_STATS:
        raise ValueError("too many statistics per row")
    for j in range(k):
        tot[j] = 0.0
    for r in range(n_node):
        row = rows[r]
        W += weight[row]
        for j in range(k):
            tot[j] += stats[row, j]
    for j in range(k):
        parent += tot[j] * tot[j] / W

    with nogil:
        for r in range(n_node):
            mark[rows[r]] = 1
        for fi in range(n_features):
            if visited >= max_features:
                break
            f = features[fi]
            ents.clear()
            a = csc_indptr[f]
            b = csc_indptr[f + 1]
            if b - a <= 4 * n_node:
                for q in range(a, b):
                    row = csc_indices[q]
                    if mark[row] and csc_data[q] != 0.0:
                        ents.push_back(entry_t(csc_data[q], row))
            else:
                for r in range(n_node):
                    row = rows[r]
                    val = _lookup_row(csr_data, csr_indices, csr_indptr[row], csr_indptr[row + 1], f)
                    if val != 0.0:
                        ents.push_back(entry_t(val, row))
            n_nz = <i64>ents.size()
            if n_nz == 0:
                continue
            sort(ents.begin(), ents.end())
            n_zero = n_node - n_nz
            if n_zero == 0 and ents[0].first == ents[n_nz - 1].first:
                continue
            visited += 1

            for j in range(k):
                nzs[j] = 0.0
            nzW = 0.0
            for q in range(n_nz):
                row = ents[q].second
                nzW += weight[row]
                for j in range(k):
                    nzs[j] += stats[row, j]
            zeroW = W - nzW
            for j in range(k):
                zero[j] = tot[j] - nzs[j]

            # walk the merged sequence: negatives, zero block, positives
            for j in range(k):
                left[j] = 0.0
            WL = 0.0
            nL = 0
            zero_done = n_zero == 0
            q = 0
            while True:
                if not zero_done and (q >= n_nz or ents[q].first > 0.0):
                    cur_val = 0.0
                    WL += zeroW
                    for j in range(k):
                        left[j] += zero[j]
                    nL += n_zero
                    zero_done = True
                elif q < n_nz:
                    cur_val = ents[q].first
                    row = ents[q].second
                    WL += weight[row]
                    for j in range(k):
                        left[j] += stats[row, j]
                    nL += 1
                    q += 1
                else:
                    break
                # next value in the merged order
                if not zero_done and (q >= n_nz or ents[q].first > 0.0):
                    nextval = 0.0
                elif q < n_nz:
                    nextval = ents[q].first
                else:
                    break
                if nextval == cur_val:
                    continue
                if nL < min_leaf or n_node - nL < min_leaf:
                    continue
                thr = (cur_val + nextval) / 2.0
                if thr == nextval:
                    thr = cur_val
                WR = W - WL
                sl = 0.0
                sr = 0.0
                for j in range(k):
                    sl += left[j] * left[j] / WL
                    rj = tot[j] - left[j]
                    sr += rj * rj / WR
                proxy = sl + sr
                if _better(proxy, f, thr, best, best_feat, best_thr):
                    best = proxy
                    best_feat = f
                    best_thr = thr
        for r in range(n_node):
            mark[rows[r]] = 0

    return best_feat, best_thr, best, parent, visited


def partition(const double[::1] csc_data, const i64[::1] csc_indices, const i64[::1] csc_indptr,
              const i64[::1] rows, i64 feature, double threshold,
              unsigned char[::1] mark):
    """Split sorted ``rows`` into (x <= threshold, x > threshold)."""
    cdef Py_ssize_t n = rows.shape[0], r, q
    cdef i64 a = csc_indptr[feature], b = csc_indptr[feature + 1]
    cdef bint zero_left = 0.0 <= threshold
    out_left = np.empty(n, dtype=np.int64)
    out_right = np.empty(n, dtype=np.int64)
    cdef i64[::1] L = out_left
    cdef i64[::1] R = out_right
    cdef Py_ssize_t nl = 0, nr = 0
    cdef i64 row
    with nogil:
        # mark: 1 = in node & zero-valued, 2 = goes left, 3 = goes right
        for r in range(n):
            mark[rows[r]] = 1
        for q in range(a, b):
            row = csc_indices[q]
            if mark[row]:
                if csc_data[q] <= threshold:
                    mark[row] = 2
                else:
                    mark[row] = 3
        for r in range(n):
            row = rows[r]
            if mark[row] == 2 or (mark[row] == 1 and zero_left):
                L[nl] = row
                nl += 1
            else:
                R[nr] = row
                nr += 1
            mark[row] = 0
    return out_left[:nl], out_right[:nr]


def apply_tree(const i64[::1] feature, const double[::1] threshold,
               const i64[::1] left, const i64[::1] right,
               const double[::1] csr_data, const i64[::1] csr_indices, const i64[::1] csr_indptr):
    """Leaf node id reached by every row of a CSR matrix."""
    cdef Py_ssize_t n = csr_indptr.shape[0] - 1, i
    out = np.empty(n, dtype=np.int64)
    cdef i64[::1] o = out
    cdef i64 node, f
    cdef double v
    with nogil:
        for i in range(n):
            node = 0
            while left[node] >= 0:
                f = feature[node]
                v = _lookup_row(csr_data, csr_indices, csr_indptr[i], csr_indptr[i + 1], f)
                if v <= threshold[node]:
                    node = left[node]
                else:
                    node = right[node]
            o[i] = node
    return out
