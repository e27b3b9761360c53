"""Independent test oracles.

These deliberately avoid the library's search/scoring code paths: the tree
oracle enumerates every candidate with boolean masks and dense matmuls, the
regression oracle is plain k-nearest-neighbors.  Expected values asserted in
tests either come from these oracles or from hand arithmetic spelled out
inline.
"""

from __future__ import annotations

import numpy as np

NEG_INF = float("-inf")
POS_INF = float("inf")


def candidate_thresholds(col: np.ndarray) -> list[float]:
    vals = np.unique(col)
    mids = []
    for lo, hi in zip(vals[:-1], vals[1:]):
        t = 0.5 * (lo + hi)
        if not t > lo:
            t = hi
        mids.append(float(t))
    return [NEG_INF] + mids + [POS_INF]


def all_splits(X: np.ndarray) -> list[tuple[int, float]]:
    return [(f, t) for f in range(X.shape[1]) for t in candidate_thresholds(X[:, f])]


def brute_force_objective(scores: np.ndarray, X: np.ndarray, depth: int) -> float:
    """Max of sum_i scores[i, pi(x_i)] over depth-d trees, by enumeration."""
    n, d = scores.shape
    tot = scores.sum(axis=0)
    if depth == 0:
        return float(tot.max())

    splits = all_splits(X)
    masks = np.stack([X[:, f] < t for f, t in splits])  # (n_splits, n)

    def best_depth1(weights: np.ndarray) -> float:
        # weights selects the active subset (1.0/0.0)
        sub = scores * weights[:, None]
        sub_tot = sub.sum(axis=0)
        left = masks.astype(float) @ sub  # (n_splits, d)
        right = sub_tot[None, :] - left
        return float((left.max(axis=1) + right.max(axis=1)).max())

    if depth == 1:
        return best_depth1(np.ones(n))

    best = NEG_INF
    for root in masks:
        w = root.astype(float)
        best = max(best, best_depth1(w) + best_depth1(1.0 - w))
    return best


def knn_rmse(x_train, y_train, x_test, y_test, k: int = 5) -> float:
    """RMSE of k-nearest-neighbor regression (1-d feature)."""
    x_train = np.asarray(x_train, dtype=float).ravel()
    preds = []
    for x in np.asarray(x_test, dtype=float).ravel():
        nearest = np.argsort(np.abs(x_train - x))[:k]
        preds.append(np.mean(np.asarray(y_train)[nearest]))
    return float(np.sqrt(np.mean((np.asarray(y_test) - np.asarray(preds)) ** 2)))


def tree_actions_by_hand(tree, X: np.ndarray) -> np.ndarray:
    """Route rows through a PolicyTree without the library's evaluator."""
    n = X.shape[0]
    out = np.empty(n, dtype=np.int64)
    for i in range(n):
        node = 0
        level = 0
        while level < tree.depth:
            f = tree.features[node]
            thr = tree.thresholds[node]
            node = 2 * node + (1 if X[i, f] >= thr else 0) + 1
            level += 1
        out[i] = tree.leaves[node - ((1 << tree.depth) - 1)]
    return out
