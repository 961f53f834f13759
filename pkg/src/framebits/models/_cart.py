"""Compiled CART kernels for regression trees.

Trees are stored as flat parallel arrays indexed by node id; a leaf has
``feature == -1``. All kernels release the GIL so forests can be grown on a
thread pool.
"""

import numpy as np
from numba import njit

LEAF = -1


@njit(cache=True, nogil=True)
def build_tree(X, y, rows, max_depth, min_samples_split, min_samples_leaf,
               max_features, keys):
    """Grow one tree on ``X[rows]`` (rows may repeat, as in a bootstrap).

    ``keys`` holds one row of uniform draws per node and decides the random
    feature subset when ``max_features < n_features``; it may be empty
    otherwise. Among equally good splits the lowest feature index and then
    the lowest threshold win.
    """
    n = rows.shape[0]
    p = X.shape[1]
    cap = 2 * n + 1
    feature = np.full(cap, LEAF, dtype=np.int32)
    threshold = np.zeros(cap, dtype=np.float64)
    left = np.full(cap, -1, dtype=np.int32)
    right = np.full(cap, -1, dtype=np.int32)
    value = np.zeros(cap, dtype=np.float64)
    count = np.zeros(cap, dtype=np.int32)
    depth_of = np.zeros(cap, dtype=np.int32)
    gain = np.zeros(cap, dtype=np.float64)

    samples = rows.copy()
    scratch = np.empty(n, dtype=samples.dtype)
    xs = np.empty(n, dtype=np.float64)

    # explicit stack of (node, start, end)
    st_node = np.empty(cap, dtype=np.int64)
    st_start = np.empty(cap, dtype=np.int64)
    st_end = np.empty(cap, dtype=np.int64)
    top = 0
    st_node[0] = 0
    st_start[0] = 0
    st_end[0] = n
    top = 1
    n_nodes = 1
    candidates = np.arange(p)

    while top > 0:
        top -= 1
        node = st_node[top]
        start = st_start[top]
        end = st_end[top]
        m = end - start
        total = 0.0
        y_lo = np.inf
        y_hi = -np.inf
        for i in range(start, end):
            v = y[samples[i]]
            total += v
            if v < y_lo:
                y_lo = v
            if v > y_hi:
                y_hi = v
        value[node] = total / m
        count[node] = m
        depth = depth_of[node]
        if (depth >= max_depth or m < min_samples_split
                or m < 2 * min_samples_leaf or y_lo == y_hi):
            continue

        if max_features < p:
            order = np.argsort(keys[node], kind="mergesort")
            candidates = np.sort(order[:max_features])
        parent_proxy = total * total / m
        best_proxy = -np.inf
        best_f = -1
        best_t = 0.0
        for ci in range(candidates.shape[0]):
            f = candidates[ci]
            for i in range(m):
                xs[i] = X[samples[start + i], f]
            order = np.argsort(xs[:m], kind="mergesort")
            if xs[order[0]] == xs[order[m - 1]]:
                continue
            s_left = 0.0
            for i in range(1, m):
                s_left += y[samples[start + order[i - 1]]]
                lo = xs[order[i - 1]]
                hi = xs[order[i]]
                if lo == hi:
                    continue
                if i < min_samples_leaf or m - i < min_samples_leaf:
                    continue
                s_right = total - s_left
                proxy = s_left * s_left / i + s_right * s_right / (m - i)
                if proxy > best_proxy:
                    best_proxy = proxy
                    best_f = f
                    t = 0.5 * (lo + hi)
                    if t >= hi:
                        t = lo
                    best_t = t
        if best_f < 0 or best_proxy <= parent_proxy:
            continue

        # stable partition of the node's samples around the threshold
        nl = 0
        nr = 0
        for i in range(start, end):
            s = samples[i]
            if X[s, best_f] <= best_t:
                samples[start + nl] = s
                nl += 1
            else:
                scratch[nr] = s
                nr += 1
        for i in range(nr):
            samples[start + nl + i] = scratch[i]

        feature[node] = best_f
        threshold[node] = best_t
        gain[node] = best_proxy - parent_proxy
        lc = n_nodes
        rc = n_nodes + 1
        n_nodes += 2
        left[node] = lc
        right[node] = rc
        depth_of[lc] = depth + 1
        depth_of[rc] = depth + 1
        # right pushed first so the left subtree is numbered first
        st_node[top] = rc
        st_start[top] = start + nl
        st_end[top] = end
        top += 1
        st_node[top] = lc
        st_start[top] = start
        st_end[top] = start + nl
        top += 1

    return (feature[:n_nodes].copy(), threshold[:n_nodes].copy(),
            left[:n_nodes].copy(), right[:n_nodes].copy(),
            value[:n_nodes].copy(), count[:n_nodes].copy(), gain[:n_nodes].copy())


@njit(cache=True, nogil=True)
def predict_tree(feature, threshold, left, right, value, X):
    out = np.empty(X.shape[0], dtype=np.float64)
    for r in range(X.shape[0]):
        node = 0
        while feature[node] != LEAF:
            if X[r, feature[node]] <= threshold[node]:
                node = left[node]
            else:
                node = right[node]
        out[r] = value[node]
    return out
