"""Numba kernels for CART growth and forest prediction.

Growth is stack-based over an index buffer that is partitioned in place.
The split search scans candidate features in ascending index order and
thresholds in ascending order, accepting only strictly larger impurity
decreases, which realizes the documented tie-break (lowest feature index,
then lowest threshold).  The per-node feature subset comes from an internal
splitmix64 stream so results are identical across platforms and runs.
"""

from __future__ import annotations

import numpy as np
from numba import njit

NO_FEATURE = -1


@njit(cache=True, inline="always")
def _splitmix64(state: np.uint64) -> tuple[np.uint64, np.uint64]:
    state = state + np.uint64(0x9E3779B97F4A7C15)
    z = state
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    z = z ^ (z >> np.uint64(31))
    return state, z


@njit(cache=True)
def grow_tree(X, Y, rows, max_depth, min_samples_split, min_samples_leaf,
              max_features, seed):
    """Grow one CART regression tree on X[rows], Y[rows].

    Returns (feature, threshold, left, right, value, n_nodes).  feature is
    NO_FEATURE at leaves; children indices are local to this tree.
    """
    n = rows.shape[0]
    d = X.shape[1]
    m = Y.shape[1]
    cap = 2 * n + 1
    feature = np.full(cap, NO_FEATURE, np.int32)
    threshold = np.zeros(cap, np.float64)
    left = np.full(cap, -1, np.int32)
    right = np.full(cap, -1, np.int32)
    value = np.zeros((cap, m), np.float64)

    idx = rows.copy()
    rng_state = np.uint64(seed)

    # stack entries: (start, end, depth, node_id)
    stack = np.empty((cap, 4), np.int64)
    stack[0] = (0, n, 0, 0)
    top = 1
    n_nodes = 1

    feat_buf = np.empty(d, np.int64)
    sum_l = np.empty(m, np.float64)
    sumsq_l = np.empty(m, np.float64)
    sum_tot = np.empty(m, np.float64)
    sumsq_tot = np.empty(m, np.float64)

    while top > 0:
        top -= 1
        start, end, depth, node = stack[top]
        count = end - start

        # leaf value: per-output mean of rows reaching the node
        for j in range(m):
            s = 0.0
            for i in range(start, end):
                s += Y[idx[i], j]
            value[node, j] = s / count

        # node impurity: sum over outputs of within-node SSE
        node_sse = 0.0
        for j in range(m):
            s = 0.0
            for i in range(start, end):
                dev = Y[idx[i], j] - value[node, j]
                s += dev * dev
            node_sse += s

        if (
            count < min_samples_split
            or (max_depth >= 0 and depth >= max_depth)
            or node_sse <= 0.0
        ):
            continue

        # candidate feature subset, scanned in ascending index order
        if max_features >= d:
            n_feat = d
            for j in range(d):
                feat_buf[j] = j
        else:
            for j in range(d):
                feat_buf[j] = j
            for j in range(max_features):
                rng_state, z = _splitmix64(rng_state)
                pick = j + int(z % np.uint64(d - j))
                feat_buf[j], feat_buf[pick] = feat_buf[pick], feat_buf[j]
            n_feat = max_features
            feat_buf[:n_feat] = np.sort(feat_buf[:n_feat])

        for j in range(m):
            sum_tot[j] = 0.0
            sumsq_tot[j] = 0.0
        for i in range(start, end):
            for j in range(m):
                y = Y[idx[i], j]
                sum_tot[j] += y
                sumsq_tot[j] += y * y
        parent_sse = 0.0
        for j in range(m):
            parent_sse += sumsq_tot[j] - sum_tot[j] * sum_tot[j] / count

        best_gain = 0.0
        best_feat = -1
        best_thr = 0.0
        vals = np.empty(count, np.float64)

        for fi in range(n_feat):
            f = feat_buf[fi]
            for i in range(count):
                vals[i] = X[idx[start + i], f]
            order = np.argsort(vals, kind="mergesort")
            for j in range(m):
                sum_l[j] = 0.0
                sumsq_l[j] = 0.0
            for pos in range(count - 1):
                r = idx[start + order[pos]]
                for j in range(m):
                    y = Y[r, j]
                    sum_l[j] += y
                    sumsq_l[j] += y * y
                n_l = pos + 1
                n_r = count - n_l
                if n_l < min_samples_leaf or n_r < min_samples_leaf:
                    continue
                v_here = vals[order[pos]]
                v_next = vals[order[pos + 1]]
                if v_here == v_next:
                    continue
                sse = 0.0
                for j in range(m):
                    sum_r = sum_tot[j] - sum_l[j]
                    sse += sumsq_l[j] - sum_l[j] * sum_l[j] / n_l
                    sse += (sumsq_tot[j] - sumsq_l[j]) - sum_r * sum_r / n_r
                gain = parent_sse - sse
                if gain > best_gain:
                    best_gain = gain
                    best_feat = f
                    best_thr = 0.5 * (v_here + v_next)

        if best_feat < 0:
            continue

        # partition idx[start:end] around the split, preserving relative order
        scratch = np.empty(count, np.int64)
        n_l = 0
        n_r = 0
        for i in range(start, end):
            r = idx[i]
            if X[r, best_feat] <= best_thr:
                idx[start + n_l] = r
                n_l += 1
            else:
                scratch[n_r] = r
                n_r += 1
        for i in range(n_r):
            idx[start + n_l + i] = scratch[i]

        feature[node] = best_feat
        threshold[node] = best_thr
        left[node] = n_nodes
        right[node] = n_nodes + 1
        stack[top] = (start, start + n_l, depth + 1, n_nodes)
        stack[top + 1] = (start + n_l, end, depth + 1, n_nodes + 1)
        top += 2
        n_nodes += 2

    return feature[:n_nodes], threshold[:n_nodes], left[:n_nodes], right[:n_nodes], value[:n_nodes], n_nodes


@njit(cache=True)
def predict_forest_kernel(X, feature, threshold, left, right, value, offsets, out):
    """Mean over trees of per-row leaf values; children are global indices."""
    nq = X.shape[0]
    nt = offsets.shape[0] - 1
    m = value.shape[1]
    for q in range(nq):
        for t in range(nt):
            node = offsets[t]
            while feature[node] != NO_FEATURE:
                if X[q, feature[node]] <= threshold[node]:
                    node = left[node]
                else:
                    node = right[node]
            for j in range(m):
                out[q, j] += value[node, j]
    inv = 1.0 / nt
    for q in range(nq):
        for j in range(m):
            out[q, j] *= inv


@njit(cache=True)
def tree_depths(feature, left, right, offsets):
    """Maximum depth of each tree (root = depth 0)."""
    nt = offsets.shape[0] - 1
    out = np.zeros(nt, np.int64)
    stack = np.empty((feature.shape[0] + 1, 2), np.int64)
    for t in range(nt):
        top = 0
        stack[top, 0] = offsets[t]
        stack[top, 1] = 0
        top += 1
        best = 0
        while top > 0:
            top -= 1
            node = stack[top, 0]
            depth = stack[top, 1]
            if depth > best:
                best = depth
            if feature[node] != NO_FEATURE:
                stack[top, 0] = left[node]
                stack[top, 1] = depth + 1
                stack[top + 1, 0] = right[node]
                stack[top + 1, 1] = depth + 1
                top += 2
        out[t] = best
    return out
