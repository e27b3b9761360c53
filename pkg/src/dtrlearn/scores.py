"""Per-unit, per-action score matrices: AIPW, IPW, and oracle variants.

The stage-``t`` AIPW score of action ``a`` for unit ``i`` is

    (U_i - Qhat(H_it, A_it)) / ehat(H_it, A_it) * 1{A_it = a} + Qhat(H_it, a)

where the pseudo-outcome ``U_i`` is the stage outcome plus, below the final
stage, the next-stage score evaluated at the next learned policy.  The mean
of column ``pi_t(H_it)`` estimates the stage-``t`` policy value.  The IPW
variant drops the outcome-regression term and weights the cumulative
remaining outcome by the product of action-match indicators over future
stages and inverse propensities.

Oracle variants take callback-style true nuisances; with those, the stage
score mean is an unbiased estimate of the policy value, which tests exploit
as a Monte Carlo identity.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataset import FoldAssignment, PanelDataset, history_features
from .nuisance import NuisanceSet, propensity_observed, q_matrix
from .policytree import StageConstraint, assign_actions


@dataclass(frozen=True)
class ScoreMatrix:
    """n x d_t matrix of action scores for one stage."""

    stage: int
    values: np.ndarray
    provenance: str  # aipw | ipw | oracle_aipw
    folds: FoldAssignment | None
    bound: float

    def __post_init__(self):
        if self.provenance not in ("aipw", "ipw", "oracle_aipw"):
            raise ValueError(f"unknown provenance: {self.provenance!r}")

    def column_means(self) -> np.ndarray:
        return self.values.mean(axis=0)

    def policy_value(self, actions) -> float:
        """Mean score along per-unit assigned actions."""
        n = self.values.shape[0]
        return float(self.values[np.arange(n), np.asarray(actions, dtype=np.int64)].mean())

    def to_csv(self, path, unit_ids=None) -> None:
        n, d = self.values.shape
        ids = np.arange(n) if unit_ids is None else np.asarray(unit_ids)
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(",".join(["unit_id"] + [f"score_a{a}" for a in range(d)]) + "\n")
            for i in range(n):
                cells = [str(int(ids[i]))] + [repr(float(v)) for v in self.values[i]]
                fh.write(",".join(cells) + "\n")


def _aipw_values(pseudo: np.ndarray, actions: np.ndarray, q_mat: np.ndarray,
                 e_obs: np.ndarray) -> np.ndarray:
    n = pseudo.shape[0]
    rows = np.arange(n)
    vals = q_mat.copy()
    vals[rows, actions] += (pseudo - q_mat[rows, actions]) / e_obs
    return vals


def _score_bound(y_max: float, q_max: float, e_min: float, next_bound: float) -> float:
    # exact recursion: |score_t| <= (|y_t| + |next| + |Q|)/e + |Q|
    return (y_max + next_bound + q_max) / e_min + q_max


def _check_values(vals: np.ndarray, bound: float) -> None:
    if not np.isfinite(vals).all():
        raise AssertionError("non-finite score entry")
    limit = bound * (1.0 + 1e-9) + 1e-9
    worst = float(np.abs(vals).max())
    if worst > limit:
        raise AssertionError(f"score magnitude {worst} exceeds bound {bound}")


def _require_same_folds(a: FoldAssignment | None, b: FoldAssignment | None) -> None:
    if a is None or b is None:
        return
    if a is not b and not (
        a.num_folds == b.num_folds and np.array_equal(a.fold_of_unit, b.fold_of_unit)
    ):
        raise ValueError("fold assignments differ between stages")


def aipw_matrix(stage: int, pseudo, actions, q_mat, e_obs, *, y_abs_max: float,
                next_bound: float = 0.0, folds: FoldAssignment | None = None,
                provenance: str = "aipw") -> ScoreMatrix:
    """Assemble one AIPW score matrix from raw arrays (shared core)."""
    pseudo = np.asarray(pseudo, dtype=np.float64)
    actions = np.asarray(actions, dtype=np.int64)
    q_mat = np.asarray(q_mat, dtype=np.float64)
    e_obs = np.asarray(e_obs, dtype=np.float64)
    if (e_obs <= 0.0).any():
        raise AssertionError("propensity at an observed action is not positive")
    vals = _aipw_values(pseudo, actions, q_mat, e_obs)
    bound = _score_bound(y_abs_max, float(np.abs(q_mat).max()), float(e_obs.min()), next_bound)
    _check_values(vals, bound)
    return ScoreMatrix(stage=stage, values=vals, provenance=provenance, folds=folds, bound=bound)


def aipw_scores_final(data: PanelDataset, nuis: NuisanceSet) -> ScoreMatrix:
    """Final-stage AIPW scores from cross-fitted nuisances."""
    T = data.schema.num_stages
    if not nuis.q_final:
        raise ValueError("nuisance set lacks the final-stage Q models")
    H = history_features(data, T)
    d = data.schema.actions_per_stage[T - 1]
    q_mat = q_matrix(nuis.q_final, nuis.folds, H, d, nuis.q_spec.kind)
    e_obs = propensity_observed(nuis, data, T)
    y = data.outcomes[:, T - 1]
    return aipw_matrix(T, y, data.actions[:, T - 1], q_mat, e_obs,
                       y_abs_max=float(np.abs(y).max()), folds=nuis.folds)


def stage_pseudo_outcome(data: PanelDataset, t: int, next_scores: ScoreMatrix,
                         next_policy, next_constraint: StageConstraint | None = None,
                         folds: FoldAssignment | None = None) -> np.ndarray:
    """``y_t`` plus the next-stage score at the next policy's assignment."""
    H_next = history_features(data, t + 1)
    a_next = assign_actions(next_policy, H_next, prior_actions=data.actions[:, t - 1],
                            constraint=next_constraint, folds=folds,
                            n_actions=data.schema.actions_per_stage[t])
    n = data.n_units
    return data.outcomes[:, t - 1] + next_scores.values[np.arange(n), a_next]


def aipw_scores_stage(data: PanelDataset, t: int, q_models: list, q_kind: str,
                      nuis: NuisanceSet, next_scores: ScoreMatrix, next_policy,
                      next_constraint: StageConstraint | None = None) -> ScoreMatrix:
    """Stage-``t`` AIPW scores given the next stage's scores and policy."""
    if next_scores.stage != t + 1:
        raise ValueError(f"next_scores is for stage {next_scores.stage}, expected {t + 1}")
    _require_same_folds(nuis.folds, next_scores.folds)
    pseudo = stage_pseudo_outcome(data, t, next_scores, next_policy, next_constraint,
                                  folds=nuis.folds)
    H = history_features(data, t)
    d = data.schema.actions_per_stage[t - 1]
    q_mat = q_matrix(q_models, nuis.folds, H, d, q_kind)
    e_obs = propensity_observed(nuis, data, t)
    y = data.outcomes[:, t - 1]
    return aipw_matrix(t, pseudo, data.actions[:, t - 1], q_mat, e_obs,
                       y_abs_max=float(np.abs(y).max()), next_bound=next_scores.bound,
                       folds=nuis.folds)


def ipw_scores(data: PanelDataset, nuis: NuisanceSet, future_policies, t: int,
               future_constraints=None) -> ScoreMatrix:
    """Backward IPW scores: cumulative outcome weighted by match indicators.

    ``values[i, a] = (sum_{s>=t} y_is) * prod_{s>t} 1{A_is = pi_s(H_is)}
    * 1{A_it = a} / prod_{s>=t} e_s(H_is, A_is)``.
    """
    T = data.schema.num_stages
    n = data.n_units
    if len(future_policies) != T - t:
        raise ValueError(f"need {T - t} future policies for stage {t}")
    if future_constraints is None:
        future_constraints = [None] * (T - t)

    cum_y = data.outcomes[:, t - 1 :].sum(axis=1)
    match = np.ones(n, dtype=np.float64)
    denom = np.ones(n, dtype=np.float64)
    for offset, policy in enumerate(future_policies):
        s = t + 1 + offset
        H_s = history_features(data, s)
        a_pi = assign_actions(policy, H_s, prior_actions=data.actions[:, s - 2],
                              constraint=future_constraints[offset], folds=nuis.folds,
                              n_actions=data.schema.actions_per_stage[s - 1])
        match *= data.actions[:, s - 1] == a_pi
        denom *= propensity_observed(nuis, data, s)
    denom *= propensity_observed(nuis, data, t)

    weight = cum_y * match / denom
    vals = np.zeros((n, data.schema.actions_per_stage[t - 1]))
    vals[np.arange(n), data.actions[:, t - 1]] = weight
    _check_values(vals, float(np.abs(vals).max()) + 1.0)
    return ScoreMatrix(stage=t, values=vals, provenance="ipw", folds=nuis.folds,
                       bound=float(np.abs(vals).max()) + 1.0)


def oracle_scores(data: PanelDataset, policies, true_propensity, true_q,
                  constraints=None) -> list[ScoreMatrix]:
    """Oracle score matrices for a fixed policy sequence, stages 1..T.

    ``true_propensity(t, H_t, a_obs)`` returns the observed-action
    propensities; ``true_q(t, H_t, suffix)`` returns the (n, d_t) matrix of
    the true Q-function for the policy suffix ``policies[t:]``.  The
    stage-t score mean over units is unbiased for the policy value of
    ``policies[t-1:]``, which makes these matrices test oracles.
    """
    T = data.schema.num_stages
    if len(policies) != T:
        raise ValueError(f"need {T} policies, got {len(policies)}")
    if constraints is None:
        constraints = [None] * T
    matrices: list[ScoreMatrix | None] = [None] * T

    for t in range(T, 0, -1):
        H = history_features(data, t)
        a_obs = data.actions[:, t - 1]
        e_obs = np.asarray(true_propensity(t, H, a_obs), dtype=np.float64)
        q_mat = np.asarray(true_q(t, H, tuple(policies[t:])), dtype=np.float64)
        y = data.outcomes[:, t - 1]
        if t == T:
            pseudo = y
            next_bound = 0.0
        else:
            nxt = matrices[t]
            pseudo = stage_pseudo_outcome(data, t, nxt, policies[t],
                                          next_constraint=constraints[t])
            next_bound = nxt.bound
        matrices[t - 1] = aipw_matrix(t, pseudo, a_obs, q_mat, e_obs,
                                      y_abs_max=float(np.abs(y).max()),
                                      next_bound=next_bound, folds=None,
                                      provenance="oracle_aipw")
    return matrices
