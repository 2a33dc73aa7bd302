"""CART kernels shared by the regression and classification forests.

Columns are rank-encoded once per fit (``codes[f, i]`` indexes the sorted
unique values of column ``f``), so a node's split search is a counting pass
for low-cardinality columns and a sort for the rest. Both give the exact
best split over midpoints between consecutive distinct values.

For 0/1 targets, minimizing weighted Gini impurity and minimizing the
children's sum of squared deviations both reduce to maximizing
``sum_c S_c^2 / n_c`` (``S_c`` the child's target sum), so one search
serves both tasks.
"""
from __future__ import annotations

import numpy as np
from numba import njit

LEAF = -1


def encode_columns(X: np.ndarray):
    """Rank codes (k, n) int32 plus concatenated sorted unique values and offsets."""
    n, k = X.shape
    codes = np.empty((k, n), dtype=np.int32)
    uniq, offsets = [], np.zeros(k + 1, dtype=np.int64)
    for f in range(k):
        u, inv = np.unique(X[:, f], return_inverse=True)
        codes[f] = inv
        uniq.append(u)
        offsets[f + 1] = offsets[f] + u.size
    return codes, np.concatenate(uniq) if uniq else np.zeros(0), offsets


@njit(cache=True, nogil=True)
def build_tree(codes, uniq, offsets, y, idx, mtry, nodesize, seed):
    """Grow one tree on the (bootstrap) row multiset ``idx``.

    A node is split only if it holds more than ``nodesize`` rows and its
    targets are not all equal; ``mtry`` columns are drawn without
    replacement at each node and the node becomes a leaf when none of them
    varies. Returns (feature, threshold, left, right, value, count) arrays.
    """
    np.random.seed(seed)
    k = codes.shape[0]
    m_total = idx.shape[0]
    max_nodes = 2 * m_total + 1
    feature = np.full(max_nodes, -1, dtype=np.int32)
    threshold = np.zeros(max_nodes)
    left = np.full(max_nodes, LEAF, dtype=np.int32)
    right = np.full(max_nodes, LEAF, dtype=np.int32)
    value = np.zeros(max_nodes)
    count = np.zeros(max_nodes, dtype=np.int32)

    max_u = 0
    for f in range(k):
        u = offsets[f + 1] - offsets[f]
        if u > max_u:
            max_u = u
    cnt = np.zeros(max_u, dtype=np.int64)
    sm = np.zeros(max_u)
    perm = np.arange(k)
    sort_codes = np.empty(m_total, dtype=np.int64)
    sort_y = np.empty(m_total)
    ys = np.empty(m_total)

    stack_node = np.empty(m_total + 1, dtype=np.int64)
    stack_start = np.empty(m_total + 1, dtype=np.int64)
    stack_end = np.empty(m_total + 1, dtype=np.int64)
    sp = 0
    stack_node[0] = 0
    stack_start[0] = 0
    stack_end[0] = m_total
    sp = 1
    n_nodes = 1

    while sp > 0:
        sp -= 1
        node = stack_node[sp]
        s = stack_start[sp]
        e = stack_end[sp]
        m = e - s
        total = 0.0
        ymin = np.inf
        ymax = -np.inf
        for i in range(s, e):
            v = y[idx[i]]
            ys[i - s] = v
            total += v
            if v < ymin:
                ymin = v
            if v > ymax:
                ymax = v
        value[node] = total / m
        count[node] = m
        if m <= nodesize or ymin == ymax:
            continue

        parent_score = total * total / m
        best_score = parent_score
        best_f = -1
        best_lo = 0
        best_hi = 0
        for t in range(mtry):
            j = t + np.random.randint(0, k - t)
            tmp = perm[t]
            perm[t] = perm[j]
            perm[j] = tmp
            f = perm[t]
            off = offsets[f]
            u = offsets[f + 1] - off
            if u < 2:
                continue
            if u == 2:
                n1 = 0
                s1 = 0.0
                for i in range(s, e):
                    c = np.int64(codes[f, idx[i]])
                    n1 += c
                    s1 += c * ys[i - s]
                nl = m - n1
                if nl > 0 and n1 > 0:
                    sl = total - s1
                    score = sl * sl / nl + s1 * s1 / n1
                    if score > best_score * (1.0 + 1e-12) + 1e-300:
                        best_score = score
                        best_f = f
                        best_lo = 0
                        best_hi = 1
            elif u <= 2 * m:
                for c in range(u):
                    cnt[c] = 0
                    sm[c] = 0.0
                for i in range(s, e):
                    r = idx[i]
                    c = np.int64(codes[f, r])
                    cnt[c] += 1
                    sm[c] += y[r]
                nl = 0
                sl = 0.0
                prev = -1
                for c in range(u):
                    if cnt[c] == 0:
                        continue
                    if prev >= 0:
                        nr = m - nl
                        sr = total - sl
                        score = sl * sl / nl + sr * sr / nr
                        if score > best_score * (1.0 + 1e-12) + 1e-300:
                            best_score = score
                            best_f = f
                            best_lo = prev
                            best_hi = c
                    nl += cnt[c]
                    sl += sm[c]
                    prev = c
            else:
                for i in range(s, e):
                    r = idx[i]
                    sort_codes[i - s] = codes[f, r]
                    sort_y[i - s] = y[r]
                order = np.argsort(sort_codes[:m], kind="mergesort")
                nl = 0
                sl = 0.0
                prev = -1
                i = 0
                while i < m:
                    c = sort_codes[order[i]]
                    if prev >= 0:
                        nr = m - nl
                        sr = total - sl
                        score = sl * sl / nl + sr * sr / nr
                        if score > best_score * (1.0 + 1e-12) + 1e-300:
                            best_score = score
                            best_f = f
                            best_lo = prev
                            best_hi = c
                    while i < m and sort_codes[order[i]] == c:
                        nl += 1
                        sl += sort_y[order[i]]
                        i += 1
                    prev = c

        if best_f < 0:
            continue

        # in-place partition of idx[s:e]: codes <= best_lo go left
        lo = s
        hi = e - 1
        while lo <= hi:
            if np.int64(codes[best_f, idx[lo]]) <= best_lo:
                lo += 1
            else:
                tmp = idx[lo]
                idx[lo] = idx[hi]
                idx[hi] = tmp
                hi -= 1
        off = offsets[best_f]
        feature[node] = best_f
        threshold[node] = 0.5 * (uniq[off + best_lo] + uniq[off + best_hi])
        lnode = n_nodes
        rnode = n_nodes + 1
        n_nodes += 2
        left[node] = lnode
        right[node] = rnode
        stack_node[sp] = rnode
        stack_start[sp] = lo
        stack_end[sp] = e
        sp += 1
        stack_node[sp] = lnode
        stack_start[sp] = s
        stack_end[sp] = lo
        sp += 1

    return (feature[:n_nodes].copy(), threshold[:n_nodes].copy(), left[:n_nodes].copy(),
            right[:n_nodes].copy(), value[:n_nodes].copy(), count[:n_nodes].copy())


@njit(cache=True, nogil=True)
def apply_forest(X, feature, threshold, left, right, value, tree_offsets, vote):
    """Per-tree outputs (n_rows, n_trees); ``vote`` maps leaf means to 0 / 0.5 / 1."""
    n = X.shape[0]
    n_trees = tree_offsets.shape[0] - 1
    out = np.empty((n, n_trees))
    for t in range(n_trees):
        base = tree_offsets[t]
        for i in range(n):
            node = 0
            while left[base + node] != LEAF:
                if X[i, feature[base + node]] <= threshold[base + node]:
                    node = left[base + node]
                else:
                    node = right[base + node]
            v = value[base + node]
            if vote:
                if v > 0.5:
                    v = 1.0
                elif v < 0.5:
                    v = 0.0
                else:
                    v = 0.5
            out[i, t] = v
    return out
