"""Compiled CART kernels shared by the random forest and gradient boosting.

Both learners split on squared error. For 0/1 targets the weighted Gini
impurity of a node is exactly twice its weighted sum of squared deviations,
so the same split search gives Gini splits for the forest.

A tree is grown on weighted distinct samples (bootstrap multiplicities
become integer weights). Trees are stored as flat arrays: ``feature`` (-1
marks a leaf), ``threshold``, ``left``, ``right`` (node ids local to the
tree) and ``value`` (weighted node mean). A forest concatenates its trees
and keeps ``offsets``.
"""

import numpy as np
from numba import njit


@njit(cache=True)
def global_order(X):
    p = X.shape[1]
    order = np.empty((p, X.shape[0]), np.int64)
    for f in range(p):
        order[f] = np.argsort(X[:, f], kind="mergesort")
    return order


@njit(cache=True)
def _subset_order(gorder, counts, idx):
    """Orderings of the distinct samples ``idx`` (positions into ``idx``)."""
    n = counts.size
    pos = np.full(n, -1, np.int64)
    for j in range(idx.size):
        pos[idx[j]] = j
    p = gorder.shape[0]
    out = np.empty((p, idx.size), np.int64)
    for f in range(p):
        k = 0
        for i in range(n):
            s = gorder[f, i]
            if counts[s] > 0:
                out[f, k] = pos[s]
                k += 1
    return out


@njit(cache=True)
def _best_split(X, y, w, idx, order, st, en, features, n_feat, min_leaf, total, wtot):
    parent = total * total / wtot
    best_score = parent + 1e-12 * (abs(parent) + 1.0)
    best_f = -1
    best_thr = 0.0
    for fi in range(n_feat):
        f = features[fi]
        row = order[f]
        left_sum = 0.0
        nl = 0.0
        for i in range(st, en - 1):
            j = row[i]
            left_sum += w[j] * y[idx[j]]
            nl += w[j]
            nr = wtot - nl
            if nl < min_leaf:
                continue
            if nr < min_leaf:
                break
            a = X[idx[j], f]
            b = X[idx[row[i + 1]], f]
            if a == b:
                continue
            right_sum = total - left_sum
            score = left_sum * left_sum / nl + right_sum * right_sum / nr
            if score > best_score:
                best_score = score
                best_f = f
                thr = 0.5 * (a + b)
                if thr >= b:
                    thr = a
                best_thr = thr
    return best_f, best_thr


@njit(cache=True)
def _grow(X, y, idx, w, order, mtry, max_depth, min_leaf, feature, threshold, left, right, value, leaf_of):
    """Grow one tree on distinct samples ``idx`` with weights ``w``.

    ``order`` (modified in place) holds per-feature orderings of positions
    into ``idx``. Returns the node count; ``leaf_of[idx[j]]`` receives the
    leaf of sample ``idx[j]``.
    """
    n_features = X.shape[1]
    N = idx.size
    buf = np.empty(N, np.int64)
    feats = np.arange(n_features)
    stack_node = np.empty(2 * N + 1, np.int64)
    stack_st = np.empty(2 * N + 1, np.int64)
    stack_en = np.empty(2 * N + 1, np.int64)
    stack_depth = np.empty(2 * N + 1, np.int64)
    stack_node[0] = 0
    stack_st[0] = 0
    stack_en[0] = N
    stack_depth[0] = 0
    top = 1
    n_nodes = 1
    row0 = order[0]
    while top > 0:
        top -= 1
        node = stack_node[top]
        st = stack_st[top]
        en = stack_en[top]
        depth = stack_depth[top]
        total = 0.0
        wtot = 0.0
        lo = np.inf
        hi = -np.inf
        for i in range(st, en):
            j = row0[i]
            v = y[idx[j]]
            total += w[j] * v
            wtot += w[j]
            if v < lo:
                lo = v
            if v > hi:
                hi = v
        value[node] = total / wtot
        feature[node] = -1
        left[node] = -1
        right[node] = -1
        split_f = -1
        thr = 0.0
        if en - st >= 2 and wtot >= 2 * min_leaf and depth < max_depth and lo != hi:
            n_feat = n_features
            if mtry < n_features:
                # partial Fisher-Yates draw of the candidate features
                for j in range(mtry):
                    r = j + np.random.randint(0, n_features - j)
                    tmp = feats[j]
                    feats[j] = feats[r]
                    feats[r] = tmp
                n_feat = mtry
            split_f, thr = _best_split(X, y, w, idx, order, st, en, feats, n_feat, min_leaf, total, wtot)
        if split_f < 0:
            for i in range(st, en):
                leaf_of[idx[row0[i]]] = node
            continue
        n_left = 0
        for f in range(n_features):
            row = order[f]
            nl = 0
            nr = 0
            for i in range(st, en):
                j = row[i]
                if X[idx[j], split_f] <= thr:
                    row[st + nl] = j
                    nl += 1
                else:
                    buf[nr] = j
                    nr += 1
            for i in range(nr):
                row[st + nl + i] = buf[i]
            n_left = nl
        mid = st + n_left
        feature[node] = split_f
        threshold[node] = thr
        left[node] = n_nodes
        right[node] = n_nodes + 1
        stack_node[top] = n_nodes
        stack_st[top] = st
        stack_en[top] = mid
        stack_depth[top] = depth + 1
        top += 1
        stack_node[top] = n_nodes + 1
        stack_st[top] = mid
        stack_en[top] = en
        stack_depth[top] = depth + 1
        top += 1
        n_nodes += 2
    return n_nodes


@njit(cache=True)
def _apply(feature, threshold, left, right, base, x):
    node = 0
    while feature[base + node] >= 0:
        if x[feature[base + node]] <= threshold[base + node]:
            node = left[base + node]
        else:
            node = right[base + node]
    return base + node


@njit(cache=True)
def grow_forest(X, y, n_trees, mtry, min_leaf, seed):
    """Bootstrap forest of fully grown trees on 0/1 targets ``y``.

    Returns (feature, threshold, left, right, value, offsets, inbag) where
    ``inbag[b, i]`` counts how often sample ``i`` was drawn for tree ``b``.
    """
    np.random.seed(seed)
    n = X.shape[0]
    cap = 2 * n + 1
    feature = np.empty(n_trees * cap, np.int32)
    threshold = np.empty(n_trees * cap)
    left = np.empty(n_trees * cap, np.int32)
    right = np.empty(n_trees * cap, np.int32)
    value = np.empty(n_trees * cap)
    offsets = np.zeros(n_trees + 1, np.int64)
    inbag = np.zeros((n_trees, n), np.int32)
    leaf_of = np.empty(n, np.int64)
    gorder = global_order(X)
    pos = 0
    for b in range(n_trees):
        counts = inbag[b]
        for i in range(n):
            counts[np.random.randint(0, n)] += 1
        idx = np.flatnonzero(counts)
        w = counts[idx].astype(np.float64)
        order = _subset_order(gorder, counts, idx)
        cnt = _grow(
            X, y, idx, w, order, mtry, 1 << 30, min_leaf,
            feature[pos:], threshold[pos:], left[pos:], right[pos:], value[pos:], leaf_of,
        )
        pos += cnt
        offsets[b + 1] = pos
    return (
        feature[:pos].copy(),
        threshold[:pos].copy(),
        left[:pos].copy(),
        right[:pos].copy(),
        value[:pos].copy(),
        offsets,
        inbag,
    )


@njit(cache=True)
def forest_votes(feature, threshold, left, right, value, offsets, X):
    """Per-tree hard votes ``(n_trees, n)``: 1 where the leaf mean exceeds 0.5."""
    n_trees = offsets.size - 1
    out = np.empty((n_trees, X.shape[0]), np.int8)
    for b in range(n_trees):
        base = offsets[b]
        for i in range(X.shape[0]):
            leaf = _apply(feature, threshold, left, right, base, X[i])
            out[b, i] = 1 if value[leaf] > 0.5 else 0
    return out


@njit(cache=True)
def oob_error(votes, inbag, y):
    """Misclassification rate of out-of-bag majority votes (ties vote 0)."""
    n = y.size
    wrong = 0
    counted = 0
    for i in range(n):
        v = 0
        c = 0
        for b in range(votes.shape[0]):
            if inbag[b, i] == 0:
                v += votes[b, i]
                c += 1
        if c == 0:
            continue
        counted += 1
        pred = 1 if 2 * v > c else 0
        if pred != y[i]:
            wrong += 1
    if counted == 0:
        return np.nan
    return wrong / counted


@njit(cache=True)
def _expit(x):
    if x >= 0:
        return 1.0 / (1.0 + np.exp(-x))
    e = np.exp(x)
    return e / (1.0 + e)


@njit(cache=True)
def boost(X, y, n_stages, max_depth, min_leaf, shrinkage, X_eval):
    """Gradient boosting with logistic loss and Newton leaf values.

    Returns (feature, threshold, left, right, value, offsets, f0, staged)
    where ``staged[s, j]`` is the raw score of ``X_eval[j]`` after ``s + 1``
    stages. Leaf ``value`` already includes the shrinkage factor.
    """
    n = X.shape[0]
    cap = 2 * n + 1
    ybar = 0.0
    for i in range(n):
        ybar += y[i]
    ybar /= n
    ybar = min(max(ybar, 1e-6), 1 - 1e-6)
    f0 = np.log(ybar / (1 - ybar))
    F = np.full(n, f0)
    F_eval = np.full(X_eval.shape[0], f0)
    staged = np.empty((n_stages, X_eval.shape[0]))
    feature = np.empty(n_stages * cap, np.int32)
    threshold = np.empty(n_stages * cap)
    left = np.empty(n_stages * cap, np.int32)
    right = np.empty(n_stages * cap, np.int32)
    value = np.empty(n_stages * cap)
    offsets = np.zeros(n_stages + 1, np.int64)
    resid = np.empty(n)
    hess = np.empty(n)
    idx = np.arange(n)
    w = np.ones(n)
    gorder = global_order(X)
    order = np.empty_like(gorder)
    leaf_of = np.empty(n, np.int64)
    num = np.empty(cap)
    den = np.empty(cap)
    pos = 0
    for s in range(n_stages):
        for i in range(n):
            p = _expit(F[i])
            resid[i] = y[i] - p
            hess[i] = p * (1 - p)
        order[:, :] = gorder
        cnt = _grow(
            X, resid, idx, w, order, X.shape[1], max_depth, min_leaf,
            feature[pos:], threshold[pos:], left[pos:], right[pos:], value[pos:], leaf_of,
        )
        num[:cnt] = 0.0
        den[:cnt] = 0.0
        for i in range(n):
            num[leaf_of[i]] += resid[i]
            den[leaf_of[i]] += hess[i]
        for k in range(cnt):
            if feature[pos + k] < 0:
                value[pos + k] = shrinkage * (num[k] / den[k] if den[k] > 1e-150 else 0.0)
        for i in range(n):
            F[i] += value[pos + leaf_of[i]]
        for j in range(X_eval.shape[0]):
            F_eval[j] += value[_apply(feature, threshold, left, right, pos, X_eval[j])]
            staged[s, j] = F_eval[j]
        pos += cnt
        offsets[s + 1] = pos
    return (
        feature[:pos].copy(),
        threshold[:pos].copy(),
        left[:pos].copy(),
        right[:pos].copy(),
        value[:pos].copy(),
        offsets,
        f0,
        staged,
    )


@njit(cache=True)
def boosted_score(feature, threshold, left, right, value, offsets, f0, X):
    out = np.full(X.shape[0], f0)
    for b in range(offsets.size - 1):
        base = offsets[b]
        for i in range(X.shape[0]):
            out[i] += value[_apply(feature, threshold, left, right, base, X[i])]
    return out
