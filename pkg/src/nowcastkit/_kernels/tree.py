"""Regression-tree kernels: greedy variance-reduction CART growth and prediction.

Trees are stored as parallel arrays (feature, threshold, left, right, value);
``feature[node] == -1`` marks a leaf.  Split rule: ``x <= threshold`` goes
left, thresholds are midpoints between consecutive distinct values, and ties
in gain keep the lowest feature index, then the lowest threshold (features
and candidate thresholds are scanned in ascending order with a strict
improvement test).

Randomness (per-node feature subsampling) is consumed from ``rand_pool``, a
caller-supplied array of uniform draws, so results are identical on the numba
and pure-numpy backends.
"""
from __future__ import annotations

import numpy as np

from ._backend import jit


def pool_size(n_rows: int, mtry: int) -> int:
    """Number of uniform draws grow_tree may consume."""
    return (2 * n_rows + 2) * max(mtry, 1) + 8


@jit
def grow_tree(X, y, rows, max_depth, min_leaf, mtry, rand_pool):
    """Grow one tree on X[rows], y[rows].

    Returns (feature, threshold, left, right, value, n_nodes).
    """
    n = rows.shape[0]
    nf = X.shape[1]
    max_nodes = 2 * n + 1
    feature = np.full(max_nodes, -1, dtype=np.int64)
    threshold = np.zeros(max_nodes)
    left = np.full(max_nodes, -1, dtype=np.int64)
    right = np.full(max_nodes, -1, dtype=np.int64)
    value = np.zeros(max_nodes)

    idx = rows.copy()
    tmp = np.empty(n, dtype=np.int64)
    vals = np.empty(n)
    feat_ids = np.empty(nf, dtype=np.int64)

    st_start = np.empty(max_nodes, dtype=np.int64)
    st_end = np.empty(max_nodes, dtype=np.int64)
    st_depth = np.empty(max_nodes, dtype=np.int64)
    st_node = np.empty(max_nodes, dtype=np.int64)
    sp = 0
    st_start[0] = 0
    st_end[0] = n
    st_depth[0] = 0
    st_node[0] = 0
    sp = 1
    n_nodes = 1
    pool_pos = 0
    m = mtry if mtry < nf else nf

    while sp > 0:
        sp -= 1
        start = st_start[sp]
        end = st_end[sp]
        depth = st_depth[sp]
        node = st_node[sp]
        cnt = end - start

        total = 0.0
        totsq = 0.0
        for i in range(start, end):
            v = y[idx[i]]
            total += v
            totsq += v * v
        mean = total / cnt
        value[node] = mean
        sse = totsq - total * total / cnt
        if depth >= max_depth or cnt < 2 * min_leaf:
            continue
        if sse <= 1e-12 * cnt * (1.0 + mean * mean):
            continue

        for i in range(nf):
            feat_ids[i] = i
        if m < nf:
            for i in range(m):
                u = rand_pool[pool_pos]
                pool_pos += 1
                j = i + int(u * (nf - i))
                if j >= nf:
                    j = nf - 1
                t_ = feat_ids[i]
                feat_ids[i] = feat_ids[j]
                feat_ids[j] = t_
            # ascending candidate order so gain ties favour the lowest index
            for i in range(1, m):
                key = feat_ids[i]
                j = i - 1
                while j >= 0 and feat_ids[j] > key:
                    feat_ids[j + 1] = feat_ids[j]
                    j -= 1
                feat_ids[j + 1] = key

        best_gain = 0.0
        best_f = -1
        best_thr = 0.0
        base = total * total / cnt
        for fi in range(m):
            f = feat_ids[fi]
            for i in range(cnt):
                vals[i] = X[idx[start + i], f]
            order = np.argsort(vals[:cnt])
            left_sum = 0.0
            for i in range(cnt - 1):
                oi = order[i]
                left_sum += y[idx[start + oi]]
                vi = vals[oi]
                vnext = vals[order[i + 1]]
                if vi >= vnext:
                    continue
                nl = i + 1
                nr = cnt - nl
                if nl < min_leaf or nr < min_leaf:
                    continue
                rs = total - left_sum
                gain = left_sum * left_sum / nl + rs * rs / nr - base
                if gain > best_gain:
                    best_gain = gain
                    best_f = f
                    best_thr = 0.5 * (vi + vnext)

        if best_f < 0 or best_gain <= 0.0:
            continue

        lo = 0
        for i in range(start, end):
            if X[idx[i], best_f] <= best_thr:
                tmp[lo] = idx[i]
                lo += 1
        hi = lo
        for i in range(start, end):
            if X[idx[i], best_f] > best_thr:
                tmp[hi] = idx[i]
                hi += 1
        for i in range(cnt):
            idx[start + i] = tmp[i]

        lid = n_nodes
        rid = n_nodes + 1
        n_nodes += 2
        feature[node] = best_f
        threshold[node] = best_thr
        left[node] = lid
        right[node] = rid
        st_start[sp] = start
        st_end[sp] = start + lo
        st_depth[sp] = depth + 1
        st_node[sp] = lid
        sp += 1
        st_start[sp] = start + lo
        st_end[sp] = end
        st_depth[sp] = depth + 1
        st_node[sp] = rid
        sp += 1

    return feature, threshold, left, right, value, n_nodes


@jit
def tree_predict(feature, threshold, left, right, value, X):
    """Route each row of X to its leaf and return leaf means."""
    nr = X.shape[0]
    out = np.empty(nr)
    for i in range(nr):
        node = 0
        while feature[node] >= 0:
            if X[i, feature[node]] <= threshold[node]:
                node = left[node]
            else:
                node = right[node]
        out[i] = value[node]
    return out
