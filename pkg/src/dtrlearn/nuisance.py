"""Cross-fitted nuisance estimation: propensity scores and Q-functions.

Every nuisance prediction for unit ``i`` comes from the model trained with
unit ``i``'s fold held out.  Propensity rows are floored at ``eta`` and
renormalized (mass above the floor is rescaled), which keeps inverse
weights bounded.  Q-functions are estimated by fitted Q-evaluation: the
final stage regresses the stage-T outcome on ``(H_T, A_T)``; earlier
stages regress ``y_t`` plus the next-stage fit evaluated at the next-stage
policy on ``(H_t, A_t)``.

Design matrices differ by backend: forests take the action as one numeric
column next to the history; the linear backend uses the treatment-interacted
design (action dummies, dummy-by-history interactions, history), which is
also the misspecified Q model of the robustness experiments.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dataset import FoldAssignment, PanelDataset, history_features
from .models import RegressorSpec, fit_classifier, fit_regressor
from .rng import derive_seed

TAG_PROPENSITY = 0xE07
TAG_QFIT = 0x0F17


def clip_probabilities(probs: np.ndarray, eta: float) -> np.ndarray:
    """Floor each class probability at ``eta``, rescaling the free mass.

    Rows sum to one within 1e-9 and have minimum >= eta afterwards.  The
    floor-and-rescale loop is the simplex projection onto
    ``{p : p_c >= eta, sum p = 1}`` and terminates within ``d`` passes.
    """
    P = np.asarray(probs, dtype=np.float64)
    if P.ndim == 1:
        return clip_probabilities(P.reshape(1, -1), eta)[0]
    d = P.shape[1]
    if not 0.0 < eta <= 1.0 / d:
        raise ValueError(f"eta must lie in (0, 1/{d}], got {eta}")
    P = np.clip(P, 0.0, None)
    total = P.sum(axis=1, keepdims=True)
    uniform = np.full(d, 1.0 / d)
    P = np.where(total > 0.0, P / np.where(total > 0.0, total, 1.0), uniform)
    clamped = np.zeros_like(P, dtype=bool)
    for _ in range(d):
        low = (P < eta) & ~clamped
        if not low.any():
            break
        clamped |= low
        n_clamped = clamped.sum(axis=1, keepdims=True)
        free_mass = 1.0 - eta * n_clamped
        free_sum = np.where(~clamped, P, 0.0).sum(axis=1, keepdims=True)
        free_count = d - n_clamped
        scale = np.where(free_sum > 0.0, free_mass / np.where(free_sum > 0.0, free_sum, 1.0), 0.0)
        fallback = np.where(free_count > 0, free_mass / np.where(free_count > 0, free_count, 1), 0.0)
        P = np.where(clamped, eta, np.where(free_sum > 0.0, P * scale, fallback))
    return P


@dataclass
class NuisanceSet:
    """Per-fold fitted nuisances plus the overlap floor.

    ``propensity[k][t-1]`` classifies ``A_t`` from stage-``t`` predictors
    for units outside fold ``k``; ``q_final[k]`` regresses the stage-T
    outcome on ``(H_T, A_T)``.  ``propensity_features`` selects the
    predictor set: the full history (default) or the stage-1 history only
    (the deliberately misspecified variant).
    """

    folds: FoldAssignment
    eta: float
    propensity: list = field(default_factory=list)
    q_final: list = field(default_factory=list)
    propensity_spec: RegressorSpec | None = None
    q_spec: RegressorSpec | None = None
    propensity_features: str = "history"

    def training_indices(self) -> dict:
        """Audit map: fold -> sorted unit indices used for training."""
        return {
            int(k): np.nonzero(self.folds.train_mask(k))[0].tolist()
            for k in range(self.folds.num_folds)
        }

    def debug_json(self) -> str:
        """Per-fold training indices as JSON, for cross-fitting audits."""
        import json

        return json.dumps(self.training_indices())


def _propensity_predictors(data: PanelDataset, t: int, mode: str) -> np.ndarray:
    if mode == "history":
        return history_features(data, t)
    if mode == "stage1":
        return history_features(data, 1)
    raise ValueError(f"unknown propensity feature mode: {mode!r}")


def fit_propensities(
    data: PanelDataset,
    folds: FoldAssignment,
    spec: RegressorSpec,
    eta: float,
    feature_mode: str = "history",
) -> NuisanceSet:
    """Fit one action classifier per (fold, stage) on held-out training data."""
    d_max = max(data.schema.actions_per_stage)
    if not 0.0 < eta < 1.0 / d_max:
        raise ValueError(f"eta must lie in (0, 1/{d_max}), got {eta}")
    nuis = NuisanceSet(
        folds=folds,
        eta=eta,
        propensity_spec=spec,
        propensity_features=feature_mode,
    )
    T = data.schema.num_stages
    for k in range(folds.num_folds):
        train = folds.train_mask(k)
        per_stage = []
        for t in range(1, T + 1):
            X = _propensity_predictors(data, t, feature_mode)
            stage_spec = spec.with_seed(derive_seed(spec.seed, TAG_PROPENSITY, k, t))
            model = fit_classifier(
                stage_spec,
                X[train],
                data.actions[train, t - 1],
                data.schema.actions_per_stage[t - 1],
            )
            per_stage.append(model)
        nuis.propensity.append(per_stage)
    return nuis


def propensity_matrix(nuis: NuisanceSet, data: PanelDataset, t: int) -> np.ndarray:
    """Clipped out-of-fold probabilities ``e_t(H_it, a)`` as an (n, d) matrix."""
    X = _propensity_predictors(data, t, nuis.propensity_features)
    n = data.n_units
    d = data.schema.actions_per_stage[t - 1]
    out = np.empty((n, d))
    for k in range(nuis.folds.num_folds):
        rows = nuis.folds.members(k)
        out[rows] = nuis.propensity[k][t - 1].predict_proba(X[rows])
    return clip_probabilities(out, nuis.eta)


def propensity_observed(nuis: NuisanceSet, data: PanelDataset, t: int) -> np.ndarray:
    """Clipped out-of-fold probability of the action each unit actually got."""
    probs = propensity_matrix(nuis, data, t)
    return probs[np.arange(data.n_units), data.actions[:, t - 1]]


# ---------------------------------------------------------------------------
# Q-function fitting.
# ---------------------------------------------------------------------------


def q_design(H: np.ndarray, actions: np.ndarray, n_actions: int, kind: str) -> np.ndarray:
    """Design matrix for regressing a target on ``(H, A)``.

    Forest: ``[H, A]`` with the action as one numeric column.  Linear:
    ``[A-dummies, A-dummies x H, H]`` (intercept added by the fitter).
    """
    a = np.asarray(actions, dtype=np.float64).reshape(-1, 1)
    if kind == "random_forest":
        return np.hstack([H, a])
    dummies = [(a == c).astype(np.float64) for c in range(1, n_actions)]
    inter = [dummy * H for dummy in dummies]
    return np.hstack(dummies + inter + [H])


def fit_final_q(
    data: PanelDataset, folds: FoldAssignment, spec: RegressorSpec
) -> list:
    """Per-fold regression of the stage-T outcome on ``(H_T, A_T)``."""
    T = data.schema.num_stages
    H = history_features(data, T)
    d = data.schema.actions_per_stage[T - 1]
    X = q_design(H, data.actions[:, T - 1], d, spec.kind)
    y = data.outcomes[:, T - 1]
    models = []
    for k in range(folds.num_folds):
        train = folds.train_mask(k)
        fold_spec = spec.with_seed(derive_seed(spec.seed, TAG_QFIT, k, T))
        models.append(fit_regressor(fold_spec, X[train], y[train]))
    return models


def q_matrix(
    models: list,
    folds: FoldAssignment | None,
    H: np.ndarray,
    n_actions: int,
    kind: str,
) -> np.ndarray:
    """Evaluate per-fold Q models at every action: entry (i, a) = Q(H_i, a).

    With ``folds`` given, unit ``i`` uses the model for its own fold; with
    ``folds=None`` (fresh data) predictions average over the fold models.
    """
    n = H.shape[0]
    out = np.empty((n, n_actions))
    for a in range(n_actions):
        X = q_design(H, np.full(n, a), n_actions, kind)
        if folds is None:
            acc = np.zeros(n)
            for model in models:
                acc += model.predict(X)
            out[:, a] = acc / len(models)
        else:
            for k in range(folds.num_folds):
                rows = folds.members(k)
                out[rows, a] = models[k].predict(X[rows])
    return out


def fitted_q_evaluation(
    data: PanelDataset,
    folds: FoldAssignment,
    future_policies,
    t: int,
    spec: RegressorSpec,
    q_next: list | None,
    next_constraint=None,
) -> list:
    """Per-fold fitted Q-evaluation at stage ``t`` for the policy suffix.

    ``future_policies`` is the learned suffix ``(pi_{t+1}, ..., pi_T)``;
    only ``pi_{t+1}`` enters the regression target, evaluated together with
    the unit's own-fold next-stage model ``q_next[k(i)]``.  For ``t == T``
    the target is the stage-T outcome alone and ``q_next`` must be None.
    """
    from .policytree import assign_actions  # local import to avoid a cycle

    T = data.schema.num_stages
    if not 1 <= t <= T:
        raise ValueError(f"stage index {t} outside 1..{T}")
    if t == T:
        if q_next is not None:
            raise ValueError("final stage takes no next-stage Q models")
        return fit_final_q(data, folds, spec)
    if q_next is None:
        raise ValueError(f"stage {t} < {T} needs next-stage Q models")
    if len(future_policies) != T - t:
        raise ValueError(
            f"need {T - t} future policies for stage {t}, got {len(future_policies)}"
        )

    H_next = history_features(data, t + 1)
    d_next = data.schema.actions_per_stage[t]
    pi_next = future_policies[0]
    a_next = assign_actions(pi_next, H_next, prior_actions=data.actions[:, t - 1],
                            constraint=next_constraint, folds=folds, n_actions=d_next)
    X_next = q_design(H_next, a_next, d_next, spec.kind)
    q_next_val = np.empty(data.n_units)
    for k in range(folds.num_folds):
        rows = folds.members(k)
        q_next_val[rows] = q_next[k].predict(X_next[rows])
    target = data.outcomes[:, t - 1] + q_next_val

    H = history_features(data, t)
    d = data.schema.actions_per_stage[t - 1]
    X = q_design(H, data.actions[:, t - 1], d, spec.kind)
    models = []
    for k in range(folds.num_folds):
        train = folds.train_mask(k)
        fold_spec = spec.with_seed(derive_seed(spec.seed, TAG_QFIT, k, t))
        models.append(fit_regressor(fold_spec, X[train], target[train]))
    return models


def training_r2(model, X: np.ndarray, y: np.ndarray) -> float:
    """In-sample R-squared; diagnostic only, no contract attached."""
    pred = model.predict(X)
    ss_res = float(((y - pred) ** 2).sum())
    ss_tot = float(((y - y.mean()) ** 2).sum())
    return 1.0 - ss_res / ss_tot if ss_tot > 0 else 0.0
