"""Pluggable regression and classification backends.

Two model families cover every nuisance fit in the package:

- ``random_forest``: bagged CART trees with variance-reduction splits and
  leaf-mean prediction.  Classification uses the same builder on one-hot
  targets (summed one-hot variance equals Gini impurity) with
  class-frequency leaves.  Tree growth runs in the selected kernel backend.
- ``linear``: ordinary least squares via SVD (minimum-norm on collinear
  designs).  The classification counterpart is a multinomial logistic model
  fitted by L-BFGS with a tiny L2 penalty for identifiability.

Fitted models are immutable and safe for concurrent prediction.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.optimize

from . import _kernels
from .rng import derive_seed

TAG_TREE = 0x7EEE


@dataclass(frozen=True)
class RegressorSpec:
    """Backend choice plus forest hyperparameters.

    ``feature_fraction`` is the fraction of features tried per split;
    ``seed`` drives bootstrap resampling and per-node feature subsets.
    The linear backend ignores everything but ``kind`` (it always includes
    an intercept).
    """

    kind: str = "random_forest"
    n_trees: int = 100
    max_depth: int = 12
    min_leaf: int = 5
    feature_fraction: float = 0.4
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("random_forest", "linear"):
            raise ValueError(f"unknown regressor kind: {self.kind!r}")
        if self.n_trees < 1:
            raise ValueError("n_trees must be >= 1")
        if self.min_leaf < 1:
            raise ValueError("min_leaf must be >= 1")
        if not 0.0 < self.feature_fraction <= 1.0:
            raise ValueError("feature_fraction must be in (0, 1]")

    def with_seed(self, seed: int) -> "RegressorSpec":
        return RegressorSpec(
            kind=self.kind,
            n_trees=self.n_trees,
            max_depth=self.max_depth,
            min_leaf=self.min_leaf,
            feature_fraction=self.feature_fraction,
            seed=seed,
        )

    def mtry(self, n_features: int) -> int:
        return max(1, min(n_features, int(np.ceil(self.feature_fraction * n_features))))


def _as_matrix(X) -> np.ndarray:
    X = np.ascontiguousarray(np.asarray(X, dtype=np.float64))
    if X.ndim == 1:
        X = X.reshape(1, -1)
    return X


class ForestModel:
    """Bagged CART ensemble over the kernel backend; mean-of-trees prediction."""

    def __init__(self, trees, n_outputs: int, n_features: int, spec: RegressorSpec):
        self._trees = trees
        self.n_outputs = n_outputs
        self.n_features = n_features
        self.spec = spec

    def predict_raw(self, X) -> np.ndarray:
        X = _as_matrix(X)
        if X.shape[1] != self.n_features:
            raise ValueError(f"expected {self.n_features} features, got {X.shape[1]}")
        acc = np.zeros((X.shape[0], self.n_outputs))
        for tree in self._trees:
            acc += _kernels.predict_tree(tree, X)
        return acc / len(self._trees)

    def to_dict(self) -> dict:
        return {
            "model": "forest",
            "n_outputs": self.n_outputs,
            "n_features": self.n_features,
            "trees": [
                {
                    "feature": t[0].tolist(),
                    "threshold": t[1].tolist(),
                    "left": t[2].tolist(),
                    "right": t[3].tolist(),
                    "value": t[4].tolist(),
                }
                for t in self._trees
            ],
        }

    @classmethod
    def from_dict(cls, payload: dict, spec: RegressorSpec | None = None) -> "ForestModel":
        trees = [
            (
                np.asarray(t["feature"], dtype=np.int32),
                np.asarray(t["threshold"], dtype=np.float64),
                np.asarray(t["left"], dtype=np.int32),
                np.asarray(t["right"], dtype=np.int32),
                np.asarray(t["value"], dtype=np.float64),
            )
            for t in payload["trees"]
        ]
        return cls(trees, payload["n_outputs"], payload["n_features"], spec or RegressorSpec())


class ForestRegressor(ForestModel):
    def predict(self, X) -> np.ndarray:
        return self.predict_raw(X)[:, 0]


class ForestClassifier(ForestModel):
    def predict_proba(self, X) -> np.ndarray:
        return self.predict_raw(X)


def _grow_forest(spec: RegressorSpec, X: np.ndarray, Y: np.ndarray):
    n, p = X.shape
    mtry = spec.mtry(p) if p > 0 else 0
    trees = []
    for t in range(spec.n_trees):
        tree_seed = derive_seed(spec.seed, TAG_TREE, t)
        idx = _kernels.bootstrap_indices(tree_seed, n)
        trees.append(
            _kernels.build_tree(X, Y, idx, spec.max_depth, spec.min_leaf, mtry, tree_seed)
        )
    return trees


class LinearRegressor:
    """OLS with intercept; normal equations plus ridge jitter."""

    def __init__(self, beta: np.ndarray, n_features: int):
        self.beta = beta
        self.n_features = n_features

    def predict(self, X) -> np.ndarray:
        X = _as_matrix(X)
        return X @ self.beta[1:] + self.beta[0]

    def to_dict(self) -> dict:
        return {"model": "linear", "n_features": self.n_features, "beta": self.beta.tolist()}

    @classmethod
    def from_dict(cls, payload: dict) -> "LinearRegressor":
        beta = np.asarray(payload["beta"], dtype=np.float64)
        return cls(beta, payload["n_features"])


def _solve_ols(X: np.ndarray, y: np.ndarray) -> np.ndarray:
    # SVD least squares: exact on well-posed problems, minimum-norm (finite,
    # stable) on collinear designs
    design = np.hstack([np.ones((X.shape[0], 1)), X])
    beta, *_ = np.linalg.lstsq(design, y, rcond=None)
    return beta


class LogisticClassifier:
    """Multinomial logistic model (softmax link), tiny L2 for identifiability."""

    def __init__(self, coef: np.ndarray, n_features: int, n_classes: int):
        self.coef = coef  # (n_classes, n_features + 1); class 0 pinned at zero
        self.n_features = n_features
        self.n_classes = n_classes

    def predict_proba(self, X) -> np.ndarray:
        X = _as_matrix(X)
        design = np.hstack([np.ones((X.shape[0], 1)), X])
        logits = design @ self.coef.T
        logits -= logits.max(axis=1, keepdims=True)
        expl = np.exp(logits)
        return expl / expl.sum(axis=1, keepdims=True)

    def to_dict(self) -> dict:
        return {
            "model": "logistic",
            "n_features": self.n_features,
            "n_classes": self.n_classes,
            "coef": self.coef.tolist(),
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "LogisticClassifier":
        return cls(
            np.asarray(payload["coef"], dtype=np.float64),
            payload["n_features"],
            payload["n_classes"],
        )


def _fit_logistic(X: np.ndarray, labels: np.ndarray, n_classes: int) -> LogisticClassifier:
    n, p = X.shape
    design = np.hstack([np.ones((n, 1)), X])
    onehot = np.zeros((n, n_classes))
    onehot[np.arange(n), labels] = 1.0
    k_free = n_classes - 1  # class 0 logits pinned at zero
    lam = 1e-8

    def objective(flat):
        coef = flat.reshape(k_free, p + 1)
        logits = np.hstack([np.zeros((n, 1)), design @ coef.T])
        logits -= logits.max(axis=1, keepdims=True)
        expl = np.exp(logits)
        logz = np.log(expl.sum(axis=1))
        ll = (logits * onehot).sum() - logz.sum()
        probs = expl / expl.sum(axis=1, keepdims=True)
        grad = (probs[:, 1:] - onehot[:, 1:]).T @ design + lam * coef
        return -(ll - 0.5 * lam * (coef**2).sum()), grad.ravel()

    res = scipy.optimize.minimize(
        objective,
        np.zeros(k_free * (p + 1)),
        jac=True,
        method="L-BFGS-B",
        options={"maxiter": 300},
    )
    coef = np.vstack([np.zeros(p + 1), res.x.reshape(k_free, p + 1)])
    return LogisticClassifier(coef, p, n_classes)


def fit_regressor(spec: RegressorSpec, X, y):
    """Fit a regression model of ``y`` on ``X`` per ``spec``.

    Constant targets are fine (the forest reduces to constant leaves, OLS
    to an intercept); predictions are finite for any finite input.
    """
    X = _as_matrix(X)
    y = np.asarray(y, dtype=np.float64).ravel()
    if X.shape[0] != y.shape[0]:
        raise ValueError(f"X has {X.shape[0]} rows but y has {y.shape[0]}")
    if X.shape[0] < 2:
        raise ValueError("need at least 2 rows to fit")
    if spec.kind == "linear":
        return LinearRegressor(_solve_ols(X, y), X.shape[1])
    trees = _grow_forest(spec, X, np.ascontiguousarray(y.reshape(-1, 1)))
    return ForestRegressor(trees, 1, X.shape[1], spec)


def fit_classifier(spec: RegressorSpec, X, labels, n_classes: int):
    """Fit a classifier over ``n_classes`` codes; predicts probability rows.

    Classes absent from the training labels are kept in the output
    simplex (their raw probability is zero until clipping re-floors it);
    a warning flags the degenerate stage.
    """
    X = _as_matrix(X)
    labels = np.asarray(labels, dtype=np.int64).ravel()
    if X.shape[0] != labels.shape[0]:
        raise ValueError(f"X has {X.shape[0]} rows but labels has {labels.shape[0]}")
    counts = np.bincount(labels, minlength=n_classes)
    if (counts == 0).any():
        missing = np.nonzero(counts == 0)[0].tolist()
        warnings.warn(
            f"action(s) {missing} never occur in training data; "
            "their predicted probability falls to the clip floor",
            stacklevel=2,
        )
    if spec.kind == "linear":
        return _fit_logistic(X, labels, n_classes)
    onehot = np.zeros((X.shape[0], n_classes))
    onehot[np.arange(X.shape[0]), labels] = 1.0
    trees = _grow_forest(spec, X, onehot)
    return ForestClassifier(trees, n_classes, X.shape[1], spec)


def model_from_dict(payload: dict):
    kind = payload["model"]
    if kind == "forest":
        model = ForestModel.from_dict(payload)
        if model.n_outputs == 1:
            return ForestRegressor(model._trees, 1, model.n_features, model.spec)
        return ForestClassifier(model._trees, model.n_outputs, model.n_features, model.spec)
    if kind == "linear":
        return LinearRegressor.from_dict(payload)
    if kind == "logistic":
        return LogisticClassifier.from_dict(payload)
    raise ValueError(f"unknown model payload: {kind!r}")
