"""Compiled kernels for weighted regression trees and their ensembles.

Trees are grown level by level.  Each feature is presorted once per fit;
one pass over the sorted rows per (level, feature) accumulates left-hand
sums for every open node at once, so a level costs O(n_rows * n_features).

Node arrays use ``feature == -1`` for leaves.  ``left``/``right`` hold child
indices, ``value`` the weighted mean target of a leaf and ``cover`` the sum
of training weights that reached the node.
"""

from __future__ import annotations

import numpy as np
from numba import njit

LEAF = -1


def max_nodes(max_depth: int, n_rows: int) -> int:
    return int(min(2 ** (max_depth + 1) - 1, max(1, 2 * n_rows - 1)))


@njit(cache=True)
def presort(X):
    n, p = X.shape
    order = np.empty((p, n), dtype=np.int64)
    for f in range(p):
        order[f] = np.argsort(X[:, f], kind="mergesort")
    return order


@njit(cache=True)
def filter_order(order, keep):
    """Drop rows with ``keep[row] == False`` from every presorted column, remapping indices."""
    p, n = order.shape
    remap = np.full(n, -1, dtype=np.int64)
    m = 0
    for i in range(n):
        if keep[i]:
            remap[i] = m
            m += 1
    out = np.empty((p, m), dtype=np.int64)
    for f in range(p):
        j = 0
        for i in range(n):
            r = order[f, i]
            if keep[r]:
                out[f, j] = remap[r]
                j += 1
    return out


@njit(cache=True)
def sorted_values(X, order):
    p, n = order.shape
    out = np.empty((p, n))
    for f in range(p):
        for i in range(n):
            out[f, i] = X[order[f, i], f]
    return out


@njit(cache=True)
def grow_tree(X, order, xs, r, w, max_depth, min_leaf, mask, use_mask,
              feature, threshold, left, right, value, cover, node_of):
    """Grow one tree in place; returns the number of nodes used.

    ``order[f]`` lists rows by increasing ``X[:, f]`` and ``xs[f, i]`` is
    ``X[order[f, i], f]``.  Working copies are kept partitioned so that the
    rows of every node occupy the same slice ``lo[k]:hi[k]`` in each feature,
    still sorted within the slice.  ``node_of`` receives the leaf index of
    every training row.
    """
    n, p = X.shape
    cap = feature.shape[0]
    idx = order.copy()
    val = xs.copy()
    buf_i = np.empty(n, dtype=np.int64)
    buf_v = np.empty(n)
    goes_left = np.empty(n, dtype=np.bool_)
    wr = np.empty(n)
    W = np.zeros(cap)
    S = np.zeros(cap)
    Q = np.zeros(cap)
    lo = np.zeros(cap, dtype=np.int64)
    hi = np.zeros(cap, dtype=np.int64)
    for k in range(cap):
        feature[k] = LEAF
        threshold[k] = 0.0
        left[k] = -1
        right[k] = -1
    for i in range(n):
        wr[i] = w[i] * r[i]
        W[0] += w[i]
        S[0] += wr[i]
        Q[0] += wr[i] * r[i]
    hi[0] = n
    n_nodes = 1
    level_start = 0
    level_end = 1

    for depth in range(max_depth):
        if n_nodes + 2 * (level_end - level_start) > cap:
            break
        next_start = n_nodes
        for k in range(level_start, level_end):
            a = lo[k]
            b = hi[k]
            feature[k] = LEAF
            if b - a < 2 * min_leaf:
                continue
            Wk = W[k]
            Sk = S[k]
            parent = Sk * Sk / Wk
            best = parent
            best_f = -1
            best_t = 0.0
            for f in range(p):
                if use_mask and not mask[k, f]:
                    continue
                ix = idx[f]
                xv = val[f]
                if xv[a] == xv[b - 1]:
                    continue  # constant within the node
                # candidate split positions i (left = a..i-1) satisfy a+min_leaf <= i <= b-min_leaf
                i0 = a + min_leaf
                i1 = b - min_leaf
                wl = 0.0
                sl = 0.0
                for i in range(a, i0):
                    row = ix[i]
                    wl += w[row]
                    sl += wr[row]
                lastv = xv[i0 - 1]
                for i in range(i0, i1 + 1):
                    v = xv[i]
                    if v > lastv:
                        sr = Sk - sl
                        score = sl * sl / wl + sr * sr / (Wk - wl)
                        if score > best:
                            best = score
                            best_f = f
                            thr = 0.5 * (lastv + v)
                            if thr >= v:
                                thr = lastv
                            best_t = thr
                    row = ix[i]
                    wl += w[row]
                    sl += wr[row]
                    lastv = v
            if best_f < 0 or best - parent <= 1e-12 * Q[k]:
                continue
            feature[k] = best_f
            threshold[k] = best_t
            cl = n_nodes
            cr = n_nodes + 1
            left[k] = cl
            right[k] = cr
            n_nodes += 2
            W[cl] = 0.0
            S[cl] = 0.0
            Q[cl] = 0.0
            W[cr] = 0.0
            S[cr] = 0.0
            Q[cr] = 0.0
            ix = idx[0]
            nl = 0
            for i in range(a, b):
                row = ix[i]
                gl = X[row, best_f] <= best_t
                goes_left[row] = gl
                c = cl if gl else cr
                node_of[row] = c
                W[c] += w[row]
                S[c] += wr[row]
                Q[c] += wr[row] * r[row]
                if gl:
                    nl += 1
            lo[cl] = a
            hi[cl] = a + nl
            lo[cr] = a + nl
            hi[cr] = b
            if depth == max_depth - 1:
                # children are final leaves; node_of is already set
                continue
            # stable partition of every feature's slice
            for f in range(p):
                ix = idx[f]
                xv = val[f]
                jl = a
                jr = 0
                for i in range(a, b):
                    row = ix[i]
                    if goes_left[row]:
                        ix[jl] = row
                        xv[jl] = xv[i]
                        jl += 1
                    else:
                        buf_i[jr] = row
                        buf_v[jr] = xv[i]
                        jr += 1
                for j in range(jr):
                    ix[jl + j] = buf_i[j]
                    xv[jl + j] = buf_v[j]
        if n_nodes == next_start:
            break
        level_start = next_start
        level_end = n_nodes

    if n_nodes == 1:
        for i in range(n):
            node_of[i] = 0
    for k in range(n_nodes):
        value[k] = S[k] / W[k]
        cover[k] = W[k]
    return n_nodes


@njit(cache=True)
def tree_value(x, feature, threshold, left, right, value):
    k = 0
    while feature[k] != LEAF:
        if x[feature[k]] <= threshold[k]:
            k = left[k]
        else:
            k = right[k]
    return value[k]


@njit(cache=True)
def fit_boosting(X, y, w, order, base, gamma, max_depth, n_estimators, min_leaf, cap):
    n = X.shape[0]
    feature = np.full((n_estimators, cap), LEAF, dtype=np.int64)
    threshold = np.zeros((n_estimators, cap))
    left = np.full((n_estimators, cap), -1, dtype=np.int64)
    right = np.full((n_estimators, cap), -1, dtype=np.int64)
    value = np.zeros((n_estimators, cap))
    cover = np.zeros((n_estimators, cap))
    n_nodes = np.zeros(n_estimators, dtype=np.int64)
    loss = np.zeros(n_estimators + 1)
    F = np.full(n, base)
    r = np.empty(n)
    node_of = np.empty(n, dtype=np.int64)
    mask = np.ones((1, 1), dtype=np.bool_)
    xs = sorted_values(X, order)
    wsum = w.sum()
    acc = 0.0
    for j in range(n):
        d = y[j] - F[j]
        acc += w[j] * d * d
    loss[0] = acc / wsum
    for i in range(n_estimators):
        for j in range(n):
            r[j] = y[j] - F[j]
        n_nodes[i] = grow_tree(X, order, xs, r, w, max_depth, min_leaf, mask, False,
                               feature[i], threshold[i], left[i], right[i], value[i], cover[i], node_of)
        acc = 0.0
        for j in range(n):
            F[j] += gamma * value[i, node_of[j]]
            d = y[j] - F[j]
            acc += w[j] * d * d
        loss[i + 1] = acc / wsum
    return feature, threshold, left, right, value, cover, n_nodes, loss


@njit(cache=True)
def sum_trees(X, feature, threshold, left, right, value, stages):
    """Running sums of tree outputs; row ``s`` of the result holds the sum of the first ``stages[s]`` trees."""
    n = X.shape[0]
    T = feature.shape[0]
    out = np.zeros((stages.shape[0], n))
    for j in range(n):
        acc = 0.0
        s = 0
        for i in range(T):
            while s < stages.shape[0] and stages[s] == i:
                out[s, j] = acc
                s += 1
            acc += tree_value(X[j], feature[i], threshold[i], left[i], right[i], value[i])
        while s < stages.shape[0]:
            out[s, j] = acc
            s += 1
    return out


@njit(cache=True)
def per_tree_values(X, feature, threshold, left, right, value):
    n = X.shape[0]
    T = feature.shape[0]
    out = np.empty((T, n))
    for i in range(T):
        for j in range(n):
            out[i, j] = tree_value(X[j], feature[i], threshold[i], left[i], right[i], value[i])
    return out
