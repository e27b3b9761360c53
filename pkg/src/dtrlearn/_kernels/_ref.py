"""Pure-numpy reference implementations of the hot kernels.

This module is the fallback backend used when the compiled extension is
unavailable.  The compiled core (``_core.pyx``) mirrors the algorithms here
step for step: node visit order, tie-breaking, and summation order are kept
identical so that both backends grow the same trees and select the same
policy splits.

Kernels
-------
- ``build_tree`` / ``predict_tree``: depth-limited CART with multi-output
  variance-reduction splits (one output column for regression, one-hot
  columns for classification, where the summed variance criterion equals
  Gini impurity).
- ``search_depth0/1/2``: exact score-maximizing policy-tree search.  Split
  thresholds are midpoints between consecutive distinct observed values of
  each feature, plus -inf/+inf sentinels.  Candidates are enumerated in the
  canonical order (feature ascending, threshold ascending, leaf-action tuple
  ascending) and the first maximizer wins, which fixes all ties
  deterministically.
"""

from __future__ import annotations

import numpy as np

from ..rng import SplitMix64, derive_seed, splitmix64_stream

TAG_BOOTSTRAP = 0xB001
TAG_FEATURES = 0xFEA7

NEG_INF = float("-inf")
POS_INF = float("inf")


def feature_subset(tree_seed: int, node_id: int, n_features: int, mtry: int) -> np.ndarray:
    """Deterministic per-node feature subset (partial Fisher-Yates, sorted)."""
    if mtry >= n_features:
        return np.arange(n_features, dtype=np.int64)
    stream = SplitMix64(derive_seed(tree_seed, TAG_FEATURES, node_id))
    arr = list(range(n_features))
    for i in range(mtry):
        j = i + stream.randint_below(n_features - i)
        arr[i], arr[j] = arr[j], arr[i]
    return np.array(sorted(arr[:mtry]), dtype=np.int64)


def bootstrap_indices(tree_seed: int, n: int) -> np.ndarray:
    """Deterministic bootstrap resample of ``range(n)`` (n draws)."""
    draws = splitmix64_stream(derive_seed(tree_seed, TAG_BOOTSTRAP), n)
    return (draws % np.uint64(n)).astype(np.int64)


def _split_threshold(lo: float, hi: float) -> float:
    # Midpoint of two adjacent distinct values; guards against the midpoint
    # rounding down onto `lo` when lo and hi are adjacent floats.
    thr = 0.5 * (lo + hi)
    if not thr > lo:
        thr = hi
    return thr


def build_tree(X, Y, sample_idx, max_depth, min_leaf, mtry, tree_seed):
    """Grow one CART tree on the (possibly repeated) rows ``sample_idx``.

    Returns ``(feature, threshold, left, right, value)`` arrays indexed by
    node id; ``feature[i] == -1`` marks a leaf.  Node ids are assigned in
    creation order with the left child allocated before the right one.
    """
    X = np.asarray(X, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.float64)
    n_features = X.shape[1]

    feature: list[int] = []
    threshold: list[float] = []
    left: list[int] = []
    right: list[int] = []
    value: list[np.ndarray] = []

    def new_node() -> int:
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        value.append(np.zeros(Y.shape[1]))
        return len(feature) - 1

    root = new_node()
    stack = [(root, np.asarray(sample_idx, dtype=np.int64), 0)]
    while stack:
        nid, samples, depth = stack.pop()
        m = samples.shape[0]
        ys = Y[samples]
        # Sequential (cumsum) totals keep the arithmetic identical to the
        # compiled backend's running sums.
        tot = np.cumsum(ys, axis=0)[-1]
        value[nid] = tot / m
        if depth >= max_depth or m < 2 * min_leaf:
            continue

        best_gain = NEG_INF
        best = None
        for f in feature_subset(tree_seed, nid, n_features, mtry):
            vals = X[samples, f]
            order = np.lexsort((np.arange(m), vals))
            sv = vals[order]
            prefix = np.cumsum(ys[order], axis=0)
            j = np.arange(1, m)
            valid = sv[:-1] < sv[1:]
            valid &= (j >= min_leaf) & (m - j >= min_leaf)
            if not valid.any():
                continue
            sum_l = prefix[:-1]
            sum_r = tot[None, :] - sum_l
            gain = (sum_l * sum_l).sum(axis=1) / j + (sum_r * sum_r).sum(axis=1) / (m - j)
            gain = np.where(valid, gain, NEG_INF)
            k = int(np.argmax(gain))
            if gain[k] > best_gain:
                best_gain = gain[k]
                best = (int(f), _split_threshold(sv[k], sv[k + 1]))
        if best is None:
            continue

        f, thr = best
        go_left = X[samples, f] < thr
        feature[nid] = f
        threshold[nid] = thr
        lid = new_node()
        rid = new_node()
        left[nid] = lid
        right[nid] = rid
        stack.append((rid, samples[~go_left], depth + 1))
        stack.append((lid, samples[go_left], depth + 1))

    return (
        np.array(feature, dtype=np.int32),
        np.array(threshold, dtype=np.float64),
        np.array(left, dtype=np.int32),
        np.array(right, dtype=np.int32),
        np.array(value, dtype=np.float64),
    )


def predict_tree(tree, X):
    """Route rows of ``X`` through a tree; returns the (n, q) leaf values."""
    feature, threshold, left, right, value = tree
    X = np.asarray(X, dtype=np.float64)
    node = np.zeros(X.shape[0], dtype=np.int64)
    while True:
        active = feature[node] >= 0
        if not active.any():
            break
        rows = np.nonzero(active)[0]
        cur = node[rows]
        go_left = X[rows, feature[cur]] < threshold[cur]
        node[rows] = np.where(go_left, left[cur], right[cur])
    return value[node]


# ---------------------------------------------------------------------------
# Exact policy-tree search.
# ---------------------------------------------------------------------------


def _column_totals(scores):
    # Sequential totals (see build_tree).
    return np.cumsum(scores, axis=0)[-1]


def search_depth0(scores):
    """Best constant action: ``(objective, action)`` with lowest-action ties."""
    tot = _column_totals(scores)
    a = int(np.argmax(tot))
    return float(tot[a]), a


def _feature_order(X):
    n, p = X.shape
    rows = np.arange(n)
    orders = np.empty((p, n), dtype=np.int64)
    for f in range(p):
        orders[f] = np.lexsort((rows, X[:, f]))
    return orders


def _allowed_positions(sv):
    """Split positions 0..n that separate distinct sorted values."""
    n = sv.shape[0]
    ok = np.ones(n + 1, dtype=bool)
    ok[1:n] = sv[:-1] < sv[1:]
    return ok


def _position_threshold(sv, pos):
    n = sv.shape[0]
    if pos == 0:
        return NEG_INF
    if pos == n:
        return POS_INF
    return _split_threshold(sv[pos - 1], sv[pos])


def _best_split_masked(scores, order, sv, allowed, present):
    """Canonical best single split along one pre-sorted feature.

    ``present`` selects the active unit subset; split positions and
    thresholds always refer to the full sorted column so that parent and
    child searches share one candidate grid.  Returns
    ``(value, pos, a_left, a_right)`` for the first maximizer in
    (position, action-pair) order.
    """
    n = order.shape[0]
    rows = scores[order] * present[order, None]
    prefix = np.zeros((n + 1, scores.shape[1]))
    np.cumsum(rows, axis=0, out=prefix[1:])
    tot = prefix[-1]
    suffix = tot[None, :] - prefix

    l_best = np.argmax(prefix, axis=1)
    r_best = np.argmax(suffix, axis=1)
    vals = prefix[np.arange(n + 1), l_best] + suffix[np.arange(n + 1), r_best]
    vals = np.where(allowed, vals, NEG_INF)
    pos = int(np.argmax(vals))
    return float(vals[pos]), pos, int(l_best[pos]), int(r_best[pos])


def search_depth1(scores, X):
    """Exact depth-1 search over all (feature, threshold, leaf-pair) candidates.

    Returns ``(objective, feature, threshold, a_left, a_right)``.
    """
    n, p = X.shape
    orders = _feature_order(X)
    present = np.ones(n, dtype=np.float64)
    best_val = NEG_INF
    best = None
    for f in range(p):
        sv = X[orders[f], f]
        allowed = _allowed_positions(sv)
        val, pos, a_l, a_r = _best_split_masked(scores, orders[f], sv, allowed, present)
        if val > best_val:
            best_val = val
            best = (f, _position_threshold(sv, pos), a_l, a_r)
    return (best_val,) + best


def _subtree_search(scores, orders, svs, alloweds, present):
    best_val = NEG_INF
    best = None
    for f in range(orders.shape[0]):
        val, pos, a_l, a_r = _best_split_masked(scores, orders[f], svs[f], alloweds[f], present)
        if val > best_val:
            best_val = val
            best = (f, _position_threshold(svs[f], pos), a_l, a_r)
    return best_val, best


def search_depth2(scores, X):
    """Exact depth-2 search: exhaustive root split, optimal depth-1 children.

    The objective is a sum over units, so given the root partition the two
    child subtrees decouple and each is searched exactly.  Returns
    ``(objective, (root_f, root_thr), (lf, lthr, lll, llr), (rf, rthr, rll, rlr))``.
    """
    n, p = X.shape
    orders = _feature_order(X)
    svs = np.stack([X[orders[f], f] for f in range(p)])
    alloweds = np.stack([_allowed_positions(svs[f]) for f in range(p)])

    best_val = NEG_INF
    best = None
    for f in range(p):
        order = orders[f]
        allowed_pos = np.nonzero(alloweds[f])[0]
        for pos in allowed_pos:
            present = np.zeros(n, dtype=np.float64)
            present[order[:pos]] = 1.0
            lv, lbest = _subtree_search(scores, orders, svs, alloweds, present)
            rv, rbest = _subtree_search(scores, orders, svs, alloweds, 1.0 - present)
            val = lv + rv
            if val > best_val:
                best_val = val
                best = (
                    (f, _position_threshold(svs[f], pos)),
                    lbest,
                    rbest,
                )
    return (best_val,) + best
