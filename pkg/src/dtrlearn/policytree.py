"""Policy representations and exact score-maximizing tree search.

A stage policy is an axis-aligned decision tree of depth 0, 1, or 2 stored
breadth-first (complete binary shape; leaves may repeat actions).  Routing
follows "go left iff x[feature] < threshold".  Depth-0 trees are the
constant policies.  A pointwise policy (argmax of fitted Q models) covers
the unrestricted Q-learning comparator.

Stage constraints express absorbing start/stop problems: when the previous
action lies in the absorbing set the policy must repeat it, regardless of
the tree.  Constrained units contribute their forced-action score to every
candidate, so they drop out of the search itself.

``exact_tree_search`` maximizes the sum of per-unit scores at the assigned
action over every tree in the class.  Split thresholds are midpoints
between consecutive distinct observed feature values plus -inf/+inf
sentinels; candidate enumeration order (feature ascending, threshold
ascending, leaf tuple ascending) fixes all ties, so results do not depend
on unit order or parallel schedule.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .nuisance import q_matrix


@dataclass(frozen=True)
class StageConstraint:
    """Feasibility rule for one stage.

    ``absorbing`` lists the actions that, once taken, must be repeated in
    every later stage.  ``absorbing_start`` absorbs every nonzero arm (the
    decision is when to start; arm 0 means "not yet started"),
    ``absorbing_stop`` absorbs arm 0 (once stopped, stay stopped).
    """

    kind: str = "unconstrained"
    absorbing: tuple[int, ...] = ()

    def __post_init__(self):
        if self.kind not in ("unconstrained", "absorbing_start", "absorbing_stop"):
            raise ValueError(f"unknown constraint kind: {self.kind!r}")

    def forced_actions(self, prior_actions) -> np.ndarray:
        """Per-unit forced action, -1 where the policy is free to choose."""
        prior = np.asarray(prior_actions, dtype=np.int64)
        forced = np.full(prior.shape[0], -1, dtype=np.int64)
        if self.absorbing:
            mask = np.isin(prior, np.asarray(self.absorbing))
        elif self.kind == "absorbing_start":
            mask = prior != 0
        elif self.kind == "absorbing_stop":
            mask = prior == 0
        else:
            return forced
        forced[mask] = prior[mask]
        return forced


UNCONSTRAINED = StageConstraint()


@dataclass(frozen=True)
class PolicyTree:
    """Complete depth-``d`` decision tree for one stage, breadth-first."""

    stage: int
    depth: int
    features: tuple[int, ...]
    thresholds: tuple[float, ...]
    leaves: tuple[int, ...]

    def __post_init__(self):
        n_internal = (1 << self.depth) - 1
        if len(self.features) != n_internal or len(self.thresholds) != n_internal:
            raise ValueError(f"depth-{self.depth} tree needs {n_internal} internal nodes")
        if len(self.leaves) != (1 << self.depth):
            raise ValueError(f"depth-{self.depth} tree needs {1 << self.depth} leaves")

    def to_dict(self) -> dict:
        return {
            "kind": "tree",
            "stage": self.stage,
            "depth": self.depth,
            "nodes": [
                {"feature": int(f), "threshold": _encode_threshold(t)}
                for f, t in zip(self.features, self.thresholds)
            ],
            "leaves": [int(a) for a in self.leaves],
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "PolicyTree":
        return cls(
            stage=payload["stage"],
            depth=payload["depth"],
            features=tuple(n["feature"] for n in payload["nodes"]),
            thresholds=tuple(_decode_threshold(n["threshold"]) for n in payload["nodes"]),
            leaves=tuple(payload["leaves"]),
        )


def constant_policy(stage: int, action: int) -> PolicyTree:
    """The constant policy assigning ``action`` to every history."""
    return PolicyTree(stage=stage, depth=0, features=(), thresholds=(), leaves=(action,))


class PointwisePolicy:
    """Argmax-of-Q policy over all measurable rules (not a tree).

    Holds the per-fold Q models of its stage; on training data units are
    routed through their own fold's model, on fresh data the fold models
    are averaged.  Ties pick the lowest action code.
    """

    def __init__(self, stage: int, n_actions: int, models: list, model_kind: str):
        self.stage = stage
        self.n_actions = n_actions
        self.models = models
        self.model_kind = model_kind

    def action_values(self, H, folds=None) -> np.ndarray:
        H = np.asarray(H, dtype=np.float64)
        if folds is not None and (
            folds.num_folds != len(self.models) or folds.n_units != H.shape[0]
        ):
            folds = None  # foreign data: average the fold models
        return q_matrix(self.models, folds, H, self.n_actions, self.model_kind)

    def to_dict(self) -> dict:
        return {
            "kind": "pointwise",
            "stage": self.stage,
            "n_actions": self.n_actions,
            "model_kind": self.model_kind,
            "models": [m.to_dict() for m in self.models],
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "PointwisePolicy":
        from .models import model_from_dict

        models = [model_from_dict(m) for m in payload["models"]]
        return cls(payload["stage"], payload["n_actions"], models, payload["model_kind"])


def _encode_threshold(t: float):
    if t == float("-inf"):
        return "-inf"
    if t == float("inf"):
        return "inf"
    return float(t)


def _decode_threshold(t) -> float:
    if isinstance(t, str):
        return float(t)
    return float(t)


def policy_to_dict(policy) -> dict:
    return policy.to_dict()


def policy_from_dict(payload: dict):
    if payload["kind"] == "tree":
        return PolicyTree.from_dict(payload)
    if payload["kind"] == "pointwise":
        return PointwisePolicy.from_dict(payload)
    raise ValueError(f"unknown policy kind: {payload['kind']!r}")


def _tree_actions(policy: PolicyTree, H: np.ndarray) -> np.ndarray:
    n = H.shape[0]
    if policy.depth == 0:
        return np.full(n, policy.leaves[0], dtype=np.int64)
    features = np.asarray(policy.features, dtype=np.int64)
    thresholds = np.asarray(policy.thresholds, dtype=np.float64)
    leaves = np.asarray(policy.leaves, dtype=np.int64)
    cur = np.zeros(n, dtype=np.int64)
    for _ in range(policy.depth):
        go_right = H[np.arange(n), features[cur]] >= thresholds[cur]
        cur = 2 * cur + 1 + go_right
    return leaves[cur - ((1 << policy.depth) - 1)]


def assign_actions(policy, H, prior_actions=None, constraint: StageConstraint | None = None,
                   folds=None, n_actions: int | None = None) -> np.ndarray:
    """Vectorized policy evaluation with constraint overrides applied."""
    H = np.asarray(H, dtype=np.float64)
    if H.ndim == 1:
        H = H.reshape(1, -1)
    if isinstance(policy, PointwisePolicy):
        values = policy.action_values(H, folds=folds)
        actions = np.argmax(values, axis=1).astype(np.int64)
        d = policy.n_actions
    else:
        actions = _tree_actions(policy, H)
        d = n_actions if n_actions is not None else int(actions.max(initial=0)) + 1
    if constraint is not None and prior_actions is not None and constraint.kind != "unconstrained":
        forced = constraint.forced_actions(prior_actions)
        actions = np.where(forced >= 0, forced, actions)
    return actions


def evaluate(policy, h, constraint: StageConstraint | None = None, prior_action=None):
    """Single-history policy evaluation; returns the action code."""
    prior = None if prior_action is None else np.asarray([prior_action])
    return int(assign_actions(policy, np.asarray(h, dtype=np.float64).reshape(1, -1),
                              prior_actions=prior, constraint=constraint)[0])


# ---------------------------------------------------------------------------
# Exact search.
# ---------------------------------------------------------------------------


def _objective(scores: np.ndarray, actions: np.ndarray) -> float:
    return float(np.sum(scores[np.arange(scores.shape[0]), actions]))


def exact_tree_search(
    scores,
    features,
    depth: int,
    constraint: StageConstraint | None = None,
    prior_actions=None,
    stage: int = 1,
    feature_indices=None,
) -> tuple[PolicyTree, float]:
    """Maximize ``sum_i scores[i, pi(H_i)]`` over depth-``depth`` trees.

    Units with a constraint-forced action contribute their forced-action
    score to every candidate and are excluded from the split search.  The
    reported objective re-evaluates the returned tree over all units.
    ``feature_indices`` restricts the split variables to the named history
    columns (tree nodes still refer to full-history column indices).
    """
    scores = np.ascontiguousarray(np.asarray(scores, dtype=np.float64))
    H = np.ascontiguousarray(np.asarray(features, dtype=np.float64))
    n, d = scores.shape
    if n == 0:
        raise ValueError("cannot search an empty dataset")
    if H.shape[0] != n:
        raise ValueError(f"scores have {n} rows but features have {H.shape[0]}")
    if depth not in (0, 1, 2):
        raise ValueError(f"tree depth must be 0, 1, or 2, got {depth}")

    cols = np.arange(H.shape[1]) if feature_indices is None else np.asarray(feature_indices, dtype=np.int64)
    X = np.ascontiguousarray(H[:, cols]) if cols.size else H[:, :0]

    free = np.ones(n, dtype=bool)
    if constraint is not None and prior_actions is not None and constraint.kind != "unconstrained":
        forced = constraint.forced_actions(prior_actions)
        free = forced < 0

    sub_scores = np.ascontiguousarray(scores[free])
    sub_X = np.ascontiguousarray(X[free])
    use_depth = depth if (X.shape[1] > 0 and sub_scores.shape[0] > 0) else 0

    if use_depth == 0 or sub_scores.shape[0] == 0:
        if sub_scores.shape[0] == 0:
            best_a = 0
        else:
            _, best_a = _kernels.search_depth0(sub_scores)
        tree = _degenerate_tree(stage, depth, best_a, cols)
    elif use_depth == 1:
        _, f, thr, a_l, a_r = _kernels.search_depth1(sub_scores, sub_X)
        tree = PolicyTree(stage=stage, depth=1, features=(int(cols[f]),),
                          thresholds=(float(thr),), leaves=(int(a_l), int(a_r)))
        if depth == 2:
            tree = _promote_depth1(tree, cols)
    else:
        _, root, lchild, rchild = _kernels.search_depth2(sub_scores, sub_X)
        tree = PolicyTree(
            stage=stage,
            depth=2,
            features=(int(cols[root[0]]), int(cols[lchild[0]]), int(cols[rchild[0]])),
            thresholds=(float(root[1]), float(lchild[1]), float(rchild[1])),
            leaves=(int(lchild[2]), int(lchild[3]), int(rchild[2]), int(rchild[3])),
        )

    actions = assign_actions(tree, H, prior_actions=prior_actions, constraint=constraint,
                             n_actions=d)
    return tree, _objective(scores, actions)


def _degenerate_tree(stage: int, depth: int, action: int, cols) -> PolicyTree:
    """Constant behavior expressed as a complete tree of the requested depth."""
    if depth == 0 or len(cols) == 0:
        return constant_policy(stage, action)
    n_internal = (1 << depth) - 1
    f0 = int(cols[0])
    return PolicyTree(
        stage=stage,
        depth=depth,
        features=(f0,) * n_internal,
        thresholds=(float("-inf"),) * n_internal,
        leaves=(action,) * (1 << depth),
    )


def _promote_depth1(tree: PolicyTree, cols) -> PolicyTree:
    f0 = int(cols[0])
    return PolicyTree(
        stage=tree.stage,
        depth=2,
        features=(tree.features[0], f0, f0),
        thresholds=(tree.thresholds[0], float("-inf"), float("-inf")),
        leaves=(tree.leaves[0], tree.leaves[0], tree.leaves[1], tree.leaves[1]),
    )


# ---------------------------------------------------------------------------
# Finite policy classes.
# ---------------------------------------------------------------------------

ENUMERATION_GUARD = 10**6


@dataclass(frozen=True)
class PolicyClassSpec:
    """Searchable class of stage policies.

    ``kind="constant"`` is the two-or-more constant policies; ``kind="tree"``
    is the depth-bounded tree class, optionally restricted to the named
    feature columns.  The stage constraint rides along so learners apply it
    both during search and at evaluation time.
    """

    kind: str = "tree"
    depth: int = 1
    feature_indices: tuple[int, ...] | None = None
    constraint: StageConstraint = field(default_factory=StageConstraint)

    def __post_init__(self):
        if self.kind not in ("constant", "tree"):
            raise ValueError(f"unknown policy class kind: {self.kind!r}")
        if self.kind == "tree" and self.depth not in (0, 1, 2):
            raise ValueError("tree classes support depth 0, 1, or 2")


def _candidate_thresholds(values: np.ndarray) -> list[float]:
    distinct = np.unique(values)
    mids = []
    for lo, hi in zip(distinct[:-1], distinct[1:]):
        thr = 0.5 * (lo + hi)
        if not thr > lo:
            thr = hi
        mids.append(float(thr))
    return [float("-inf")] + mids + [float("inf")]


def enumerate_policies(
    class_spec: PolicyClassSpec,
    n_actions: int,
    features=None,
    stage: int = 1,
    dedup: bool = True,
) -> list[PolicyTree]:
    """Exhaustively list the policies in a finite class.

    Tree classes need the observed ``features`` matrix to build the
    threshold grid.  With ``dedup=True`` (default), policies that assign
    identical actions to every observed history are collapsed to their
    first (canonical-order) representative.  Classes beyond 10^6 raw
    candidates are refused.
    """
    if class_spec.kind == "constant" or (class_spec.kind == "tree" and class_spec.depth == 0):
        return [constant_policy(stage, a) for a in range(n_actions)]

    if features is None:
        raise ValueError("tree class enumeration needs the observed feature matrix")
    H = np.asarray(features, dtype=np.float64)
    cols = (
        np.arange(H.shape[1])
        if class_spec.feature_indices is None
        else np.asarray(class_spec.feature_indices, dtype=np.int64)
    )
    if cols.size == 0:
        return [constant_policy(stage, a) for a in range(n_actions)]

    splits = []
    for c in cols:
        for thr in _candidate_thresholds(H[:, c]):
            splits.append((int(c), thr))

    n_splits = len(splits)
    if class_spec.depth == 1:
        total = n_splits * n_actions * n_actions
    else:
        total = n_splits * (n_splits * n_actions * n_actions) ** 2
    if total > ENUMERATION_GUARD:
        raise ValueError(
            f"policy class too large to enumerate: {total} candidates "
            f"(limit {ENUMERATION_GUARD})"
        )

    candidates: list[PolicyTree] = []
    if class_spec.depth == 1:
        for f, thr in splits:
            for a_l in range(n_actions):
                for a_r in range(n_actions):
                    candidates.append(
                        PolicyTree(stage=stage, depth=1, features=(f,),
                                   thresholds=(thr,), leaves=(a_l, a_r))
                    )
    else:
        subtrees = [
            (f, thr, a_l, a_r)
            for f, thr in splits
            for a_l in range(n_actions)
            for a_r in range(n_actions)
        ]
        for f, thr in splits:
            for lf, lthr, lll, llr in subtrees:
                for rf, rthr, rll, rlr in subtrees:
                    candidates.append(
                        PolicyTree(
                            stage=stage,
                            depth=2,
                            features=(f, lf, rf),
                            thresholds=(thr, lthr, rthr),
                            leaves=(lll, llr, rll, rlr),
                        )
                    )

    if not dedup:
        return candidates
    seen = set()
    unique = []
    for tree in candidates:
        sig = _tree_actions(tree, H).tobytes()
        if sig not in seen:
            seen.add(sig)
            unique.append(tree)
    return unique


def policy_to_json(policy) -> str:
    return json.dumps(policy.to_dict())


def policy_from_json(text: str):
    return policy_from_dict(json.loads(text))
