"""Pure numpy implementation of the tree kernels.

Same arithmetic, in the same order, as ``_kernels.pyx``: trees grown with
either backend are bitwise identical.
"""

from __future__ import annotations

import numpy as np

TIE_TOL = 1e-12


def _better(proxy, feat, thr, best, best_feat, best_thr) -> bool:
    scale = max(abs(best), 1.0)
    if best_feat < 0:
        return True
    if proxy > best + TIE_TOL * scale:
        return True
    if proxy < best - TIE_TOL * scale:
        return False
    if feat != best_feat:
        return feat < best_feat
    return thr < best_thr


def _seq_sum(a: np.ndarray) -> np.ndarray:
    # left-to-right summation (np.sum is pairwise and would round differently)
    if len(a) == 0:
        return np.zeros(a.shape[1:], dtype=np.float64)
    return np.cumsum(a, axis=0)[-1]


def best_split(
    csc_data, csc_indices, csc_indptr,
    csr_data, csr_indices, csr_indptr,
    rows, weight, stats, features, max_features, min_leaf, mark,
):
    n_node = len(rows)
    k = stats.shape[1]
    W = float(_seq_sum(weight[rows]))
    tot = _seq_sum(stats[rows])
    parent = 0.0
    for j in range(k):
        parent += tot[j] * tot[j] / W

    mark[rows] = 1
    best_feat, best_thr, best = -1, 0.0, 0.0
    visited = 0
    try:
        for f in features:
            if visited >= max_features:
                break
            f = int(f)
            a, b = csc_indptr[f], csc_indptr[f + 1]
            idx = csc_indices[a:b]
            dat = csc_data[a:b]
            keep = (mark[idx] != 0) & (dat != 0.0)
            vals, frows = dat[keep], idx[keep]
            n_nz = len(vals)
            if n_nz == 0:
                continue
            order = np.lexsort((frows, vals))
            vals, frows = vals[order], frows[order]
            n_zero = n_node - n_nz
            if n_zero == 0 and vals[0] == vals[-1]:
                continue
            visited += 1

            w_nz = weight[frows]
            s_nz = stats[frows]
            zero_w = W - float(_seq_sum(w_nz))
            zero_s = tot - _seq_sum(s_nz)

            n_neg = int(np.searchsorted(vals, 0.0, side="left"))
            if n_zero:
                seq_v = np.concatenate([vals[:n_neg], [0.0], vals[n_neg:]])
                seq_w = np.concatenate([w_nz[:n_neg], [zero_w], w_nz[n_neg:]])
                seq_s = np.concatenate([s_nz[:n_neg], zero_s[None, :], s_nz[n_neg:]])
                seq_c = np.concatenate(
                    [np.ones(n_neg, np.int64), [n_zero], np.ones(n_nz - n_neg, np.int64)]
                )
            else:
                seq_v, seq_w, seq_s = vals, w_nz, s_nz
                seq_c = np.ones(n_nz, np.int64)

            WL = np.cumsum(seq_w)
            left = np.cumsum(seq_s, axis=0)
            nL = np.cumsum(seq_c)
            cand = np.nonzero(
                (seq_v[:-1] != seq_v[1:])
                & (nL[:-1] >= min_leaf)
                & (n_node - nL[:-1] >= min_leaf)
            )[0]
            if len(cand) == 0:
                continue
            lo, hi = seq_v[cand], seq_v[cand + 1]
            thr = (lo + hi) / 2.0
            thr = np.where(thr == hi, lo, thr)
            wl = WL[cand]
            wr = W - wl
            lc = left[cand]
            sl = np.zeros(len(cand))
            sr = np.zeros(len(cand))
            for j in range(k):
                sl = sl + lc[:, j] * lc[:, j] / wl
                rj = tot[j] - lc[:, j]
                sr = sr + rj * rj / wr
            proxy = sl + sr

            # only candidates near a running maximum can ever win
            run = np.maximum.accumulate(proxy)
            prev = np.concatenate([[-np.inf], run[:-1]])
            floor = np.maximum(prev, best if best_feat >= 0 else -np.inf)
            slack = 4 * TIE_TOL * np.maximum(np.abs(floor), 1.0)
            slack[~np.isfinite(floor)] = 0.0
            hopeful = np.nonzero(~np.isfinite(floor) | (proxy >= floor - slack))[0]
            for c in hopeful:
                p, t = float(proxy[c]), float(thr[c])
                if _better(p, f, t, best, best_feat, best_thr):
                    best, best_feat, best_thr = p, f, t
    finally:
        mark[rows] = 0
    return best_feat, best_thr, best, parent, visited


def partition(csc_data, csc_indices, csc_indptr, rows, feature, threshold, mark):
    a, b = csc_indptr[feature], csc_indptr[feature + 1]
    idx = csc_indices[a:b]
    dat = csc_data[a:b]
    vals = np.zeros(len(rows))
    pos = np.searchsorted(rows, idx)
    pos_c = np.minimum(pos, len(rows) - 1)
    hit = (pos < len(rows)) & (rows[pos_c] == idx)
    vals[pos[hit]] = dat[hit]
    go_left = vals <= threshold
    return rows[go_left], rows[~go_left]


def apply_tree(feature, threshold, left, right, csr_data, csr_indices, csr_indptr):
    n = len(csr_indptr) - 1
    width = int(max(csr_indices.max(initial=0), feature.max(initial=0))) + 1
    # CSR entries in storage order have strictly increasing row*width+col keys
    keys = np.repeat(np.arange(n, dtype=np.int64), np.diff(csr_indptr)) * width + csr_indices
    node = np.zeros(n, dtype=np.int64)
    rows = np.nonzero(left[node] >= 0)[0]
    while len(rows):
        cur = node[rows]
        want = rows * width + feature[cur]
        j = np.searchsorted(keys, want)
        jc = np.minimum(j, max(len(keys) - 1, 0))
        hit = (j < len(keys)) & (keys[jc] == want) if len(keys) else np.zeros(len(rows), bool)
        vals = np.where(hit, csr_data[jc] if len(keys) else 0.0, 0.0)
        node[rows] = np.where(vals <= threshold[cur], left[cur], right[cur])
        rows = rows[left[node[rows]] >= 0]
    return node
