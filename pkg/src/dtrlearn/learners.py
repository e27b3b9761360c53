"""End-to-end learners for optimal dynamic treatment regimes.

Five methods share one cross-fitting fold assignment per run and one master
seed that derives every internal stream:

- ``dr``: doubly robust backward induction.  Fit out-of-fold propensities
  for all stages and the final-stage Q-function; build the final-stage AIPW
  score matrix; pick the score-maximizing tree; then walk backward, at each
  stage fitting the Q-function for the learned suffix by fitted
  Q-evaluation, building the stage score matrix from the next stage's
  scores, and searching again.
- ``q_learn`` / ``q_search``: backward recursion on fitted Q alone (no
  propensity term).  ``q_search`` maximizes predicted Q over the tree
  class; ``q_learn`` returns the pointwise argmax policy over all
  measurable rules.
- ``ipw``: backward recursion with inverse-propensity-weighted scores.
- ``aipw_simultaneous``: enumerate a small product class of DTRs and pick
  the one maximizing the cross-fitted AIPW welfare estimate, refitting the
  Q-functions per candidate suffix (memoized, since the Q target depends
  only on the future policies).
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field, replace

import numpy as np

from .dataset import FoldAssignment, PanelDataset, history_features, make_folds
from .models import RegressorSpec
from .nuisance import (
    NuisanceSet,
    fit_propensities,
    fitted_q_evaluation,
    propensity_observed,
    q_matrix,
)
from .policytree import (
    PolicyClassSpec,
    PointwisePolicy,
    StageConstraint,
    assign_actions,
    enumerate_policies,
    exact_tree_search,
    policy_from_dict,
    policy_to_dict,
)
from .rng import derive_seed
from .scores import aipw_matrix, ipw_scores, stage_pseudo_outcome

TAG_FOLDS = 0xF01D
TAG_PROP = 0x9201
TAG_Q = 0x9202

METHODS = ("dr", "q_learn", "q_search", "ipw", "aipw_simultaneous")

DTR_ENUMERATION_GUARD = 10**5


def _default_propensity_spec() -> RegressorSpec:
    # propensities are smoother targets than Q-functions; a lighter forest
    # suffices and is shared by every method that weights by them
    return RegressorSpec(n_trees=60, max_depth=10, feature_fraction=0.3)


@dataclass(frozen=True)
class LearnerConfig:
    """Everything a learner run needs besides the data."""

    method: str
    seed: int
    num_folds: int = 5
    eta: float = 0.01
    propensity_spec: RegressorSpec = field(default_factory=_default_propensity_spec)
    q_spec: RegressorSpec = field(default_factory=RegressorSpec)
    policy_classes: tuple[PolicyClassSpec, ...] | None = None
    propensity_features: str = "history"

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}; pick one of {METHODS}")
        if self.num_folds < 2:
            raise ValueError("num_folds must be >= 2")
        if not 0.0 < self.eta < 0.5:
            raise ValueError("eta must lie in (0, 0.5)")


@dataclass(frozen=True)
class Dtr:
    """A dynamic treatment regime: one policy per stage, stages ascending."""

    policies: tuple

    def __post_init__(self):
        stages = [p.stage for p in self.policies]
        if stages != list(range(1, len(self.policies) + 1)):
            raise ValueError(f"policies must carry stages 1..T in order, got {stages}")

    def stage(self, t: int):
        return self.policies[t - 1]

    def to_dict(self) -> dict:
        return {"policies": [policy_to_dict(p) for p in self.policies]}

    @classmethod
    def from_dict(cls, payload: dict) -> "Dtr":
        return cls(tuple(policy_from_dict(p) for p in payload["policies"]))


@dataclass(frozen=True)
class LearnResult:
    """Learned DTR plus the objective trace.

    ``objectives`` holds the per-stage score means at the chosen policies
    for the backward methods, and the single welfare estimate of the
    winning candidate for the simultaneous method.
    """

    dtr: Dtr
    objectives: tuple
    method: str

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "objectives": [float(v) for v in self.objectives],
            "dtr": self.dtr.to_dict(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_dict(cls, payload: dict) -> "LearnResult":
        return cls(
            dtr=Dtr.from_dict(payload["dtr"]),
            objectives=tuple(payload["objectives"]),
            method=payload["method"],
        )


def default_policy_classes(schema) -> tuple[PolicyClassSpec, ...]:
    """Depth-1 trees at stage 1 and depth-2 trees later; constants when the
    stage has no history columns to split on."""
    classes = []
    for t in range(1, schema.num_stages + 1):
        if schema.history_dim(t) == 0:
            classes.append(PolicyClassSpec(kind="constant"))
        else:
            classes.append(PolicyClassSpec(kind="tree", depth=1 if t == 1 else 2))
    return tuple(classes)


def _resolve_classes(cfg: LearnerConfig, data: PanelDataset) -> tuple[PolicyClassSpec, ...]:
    classes = cfg.policy_classes or default_policy_classes(data.schema)
    if len(classes) != data.schema.num_stages:
        raise ValueError(
            f"need {data.schema.num_stages} policy classes, got {len(classes)}"
        )
    return tuple(classes)


def _prior_actions(data: PanelDataset, t: int):
    return data.actions[:, t - 2] if t >= 2 else None


def _search_stage(values: np.ndarray, H: np.ndarray, class_spec: PolicyClassSpec,
                  prior_actions, stage: int):
    depth = 0 if class_spec.kind == "constant" else class_spec.depth
    return exact_tree_search(
        values,
        H,
        depth,
        constraint=class_spec.constraint,
        prior_actions=prior_actions,
        stage=stage,
        feature_indices=class_spec.feature_indices,
    )


# ---------------------------------------------------------------------------
# Nuisance providers: cross-fitted estimates or caller-supplied truths.
# ---------------------------------------------------------------------------


class FittedNuisance:
    """Cross-fitted nuisances with a suffix-keyed cache of Q-model chains."""

    def __init__(self, cfg: LearnerConfig, need_propensities: bool = True):
        self.cfg = cfg
        self.need_propensities = need_propensities
        self.q_kind = cfg.q_spec.kind

    def prepare(self, data: PanelDataset, folds: FoldAssignment) -> None:
        self.data = data
        self.folds = folds
        cfg = self.cfg
        self._q_spec = cfg.q_spec.with_seed(derive_seed(cfg.seed, TAG_Q))
        self._q_cache: dict = {}
        self._e_cache: dict = {}
        if self.need_propensities:
            prop_spec = cfg.propensity_spec.with_seed(derive_seed(cfg.seed, TAG_PROP))
            self.nuisance_set = fit_propensities(
                data, folds, prop_spec, cfg.eta, feature_mode=cfg.propensity_features
            )
        else:
            self.nuisance_set = NuisanceSet(folds=folds, eta=cfg.eta, q_spec=self._q_spec)
        self.nuisance_set.q_spec = self._q_spec

    def propensity_observed(self, t: int) -> np.ndarray:
        if t not in self._e_cache:
            self._e_cache[t] = propensity_observed(self.nuisance_set, self.data, t)
        return self._e_cache[t]

    def _suffix_key(self, policies) -> tuple:
        return tuple(json.dumps(policy_to_dict(p), sort_keys=True) for p in policies)

    def q_models(self, t: int, suffix_policies, suffix_constraints) -> list:
        key = (t, self._suffix_key(suffix_policies))
        if key not in self._q_cache:
            T = self.data.schema.num_stages
            if t == T:
                models = fitted_q_evaluation(self.data, self.folds, (), T, self._q_spec, None)
            else:
                q_next = self.q_models(t + 1, suffix_policies[1:], suffix_constraints[1:])
                models = fitted_q_evaluation(
                    self.data,
                    self.folds,
                    suffix_policies,
                    t,
                    self._q_spec,
                    q_next,
                    next_constraint=suffix_constraints[0],
                )
            self._q_cache[key] = models
            if t == T:
                self.nuisance_set.q_final = models
        return self._q_cache[key]

    def q_matrix_stage(self, t: int, suffix_policies, suffix_constraints) -> np.ndarray:
        models = self.q_models(t, suffix_policies, suffix_constraints)
        H = history_features(self.data, t)
        d = self.data.schema.actions_per_stage[t - 1]
        return q_matrix(models, self.folds, H, d, self.q_kind)


class OracleNuisance:
    """Callback-style true nuisances (used by tests and analytic examples).

    ``propensity_fn(t, H_t, a_obs) -> (n,)`` true observed-action
    propensities; ``q_fn(t, H_t, suffix_policies) -> (n, d_t)`` the true
    Q-function matrix for the given future-policy suffix.
    """

    def __init__(self, propensity_fn, q_fn):
        self.propensity_fn = propensity_fn
        self.q_fn = q_fn

    def prepare(self, data: PanelDataset, folds: FoldAssignment) -> None:
        self.data = data
        self.folds = folds

    def propensity_observed(self, t: int) -> np.ndarray:
        H = history_features(self.data, t)
        return np.asarray(self.propensity_fn(t, H, self.data.actions[:, t - 1]), dtype=np.float64)

    def q_matrix_stage(self, t: int, suffix_policies, suffix_constraints) -> np.ndarray:
        H = history_features(self.data, t)
        return np.asarray(self.q_fn(t, H, tuple(suffix_policies)), dtype=np.float64)


# ---------------------------------------------------------------------------
# Learners.
# ---------------------------------------------------------------------------


def learn_dr(data: PanelDataset, cfg: LearnerConfig, nuisance=None) -> LearnResult:
    """Doubly robust backward-induction learning."""
    folds = make_folds(data.n_units, cfg.num_folds, derive_seed(cfg.seed, TAG_FOLDS))
    provider = nuisance if nuisance is not None else FittedNuisance(cfg)
    provider.prepare(data, folds)
    classes = _resolve_classes(cfg, data)
    T = data.schema.num_stages
    n = data.n_units

    policies: list = [None] * T
    objectives = [0.0] * T
    suffix: list = []
    suffix_constraints: list = []
    next_scores = None

    for t in range(T, 0, -1):
        H = history_features(data, t)
        y = data.outcomes[:, t - 1]
        q_mat = provider.q_matrix_stage(t, tuple(suffix), tuple(suffix_constraints))
        e_obs = provider.propensity_observed(t)
        if t == T:
            pseudo = y
            next_bound = 0.0
        else:
            pseudo = stage_pseudo_outcome(
                data, t, next_scores, suffix[0], suffix_constraints[0], folds=folds
            )
            next_bound = next_scores.bound
        sm = aipw_matrix(
            t,
            pseudo,
            data.actions[:, t - 1],
            q_mat,
            e_obs,
            y_abs_max=float(np.abs(y).max()),
            next_bound=next_bound,
            folds=folds,
        )
        tree, obj = _search_stage(sm.values, H, classes[t - 1], _prior_actions(data, t), t)
        policies[t - 1] = tree
        objectives[t - 1] = obj / n
        next_scores = sm
        suffix.insert(0, tree)
        suffix_constraints.insert(0, classes[t - 1].constraint)

    return LearnResult(Dtr(tuple(policies)), tuple(objectives), "dr")


def learn_q(data: PanelDataset, cfg: LearnerConfig, with_policy_search: bool) -> LearnResult:
    """Q-learning comparators: backward recursion on fitted Q alone."""
    folds = make_folds(data.n_units, cfg.num_folds, derive_seed(cfg.seed, TAG_FOLDS))
    q_spec = cfg.q_spec.with_seed(derive_seed(cfg.seed, TAG_Q))
    classes = _resolve_classes(cfg, data)
    T = data.schema.num_stages
    n = data.n_units

    policies: list = [None] * T
    objectives = [0.0] * T
    models = fitted_q_evaluation(data, folds, (), T, q_spec, None)
    suffix: list = []

    for t in range(T, 0, -1):
        H = history_features(data, t)
        d = data.schema.actions_per_stage[t - 1]
        if t < T:
            models = fitted_q_evaluation(
                data, folds, tuple(suffix), t, q_spec, models,
                next_constraint=classes[t].constraint,
            )
        q_mat = q_matrix(models, folds, H, d, q_spec.kind)
        prior = _prior_actions(data, t)
        if with_policy_search:
            policy, obj = _search_stage(q_mat, H, classes[t - 1], prior, t)
        else:
            policy = PointwisePolicy(t, d, models, q_spec.kind)
            actions = assign_actions(policy, H, prior_actions=prior,
                                     constraint=classes[t - 1].constraint, folds=folds)
            obj = float(np.sum(q_mat[np.arange(n), actions]))
        policies[t - 1] = policy
        objectives[t - 1] = obj / n
        suffix.insert(0, policy)

    method = "q_search" if with_policy_search else "q_learn"
    return LearnResult(Dtr(tuple(policies)), tuple(objectives), method)


def learn_ipw(data: PanelDataset, cfg: LearnerConfig) -> LearnResult:
    """IPW classification-based backward optimization."""
    folds = make_folds(data.n_units, cfg.num_folds, derive_seed(cfg.seed, TAG_FOLDS))
    prop_spec = cfg.propensity_spec.with_seed(derive_seed(cfg.seed, TAG_PROP))
    nuis = fit_propensities(data, folds, prop_spec, cfg.eta,
                            feature_mode=cfg.propensity_features)
    classes = _resolve_classes(cfg, data)
    T = data.schema.num_stages
    n = data.n_units

    policies: list = [None] * T
    objectives = [0.0] * T
    suffix: list = []
    suffix_constraints: list = []

    for t in range(T, 0, -1):
        H = history_features(data, t)
        sm = ipw_scores(data, nuis, tuple(suffix), t, tuple(suffix_constraints))
        tree, obj = _search_stage(sm.values, H, classes[t - 1], _prior_actions(data, t), t)
        policies[t - 1] = tree
        objectives[t - 1] = obj / n
        suffix.insert(0, tree)
        suffix_constraints.insert(0, classes[t - 1].constraint)

    return LearnResult(Dtr(tuple(policies)), tuple(objectives), "ipw")


def _aipw_welfare(data: PanelDataset, provider, policies, constraints,
                  folds: FoldAssignment | None) -> float:
    """Cross-fitted AIPW welfare estimate of a fixed DTR.

    ``W = mean_i sum_t [psi_it * y_it - (psi_it - psi_i,t-1) * Q_t(H_it, pi_t)]``
    with ``psi_it`` the cumulative product of action-match indicators over
    inverse propensities and ``psi_i0 = 1``.
    """
    T = data.schema.num_stages
    n = data.n_units
    psi_prev = np.ones(n)
    contrib = np.zeros(n)
    for t in range(1, T + 1):
        H = history_features(data, t)
        a_pi = assign_actions(policies[t - 1], H, prior_actions=_prior_actions(data, t),
                              constraint=constraints[t - 1], folds=folds,
                              n_actions=data.schema.actions_per_stage[t - 1])
        e_obs = provider.propensity_observed(t)
        q_mat = provider.q_matrix_stage(t, tuple(policies[t:]), tuple(constraints[t:]))
        q_at_pi = q_mat[np.arange(n), a_pi]
        ind = (data.actions[:, t - 1] == a_pi).astype(np.float64)
        psi = psi_prev * ind / e_obs
        contrib += psi * data.outcomes[:, t - 1] - (psi - psi_prev) * q_at_pi
        psi_prev = psi
    return float(contrib.mean())


def learn_aipw_simultaneous(data: PanelDataset, cfg: LearnerConfig, nuisance=None) -> LearnResult:
    """Maximize the AIPW welfare estimate over an enumerable product class."""
    folds = make_folds(data.n_units, cfg.num_folds, derive_seed(cfg.seed, TAG_FOLDS))
    provider = nuisance if nuisance is not None else FittedNuisance(cfg)
    provider.prepare(data, folds)
    classes = _resolve_classes(cfg, data)
    T = data.schema.num_stages

    stage_lists = []
    total = 1
    for t in range(1, T + 1):
        H = history_features(data, t)
        candidates = enumerate_policies(
            classes[t - 1], data.schema.actions_per_stage[t - 1], features=H, stage=t
        )
        stage_lists.append(candidates)
        total *= len(candidates)
    if total > DTR_ENUMERATION_GUARD:
        raise ValueError(
            f"candidate DTR count {total} exceeds the enumeration limit "
            f"{DTR_ENUMERATION_GUARD}"
        )

    constraints = [c.constraint for c in classes]
    best_w = -np.inf
    best: tuple | None = None
    for combo in itertools.product(*stage_lists):
        w = _aipw_welfare(data, provider, list(combo), constraints, folds)
        if w > best_w:
            best_w = w
            best = combo
    assert best is not None
    return LearnResult(Dtr(tuple(best)), (best_w,), "aipw_simultaneous")


def aipw_welfare_estimate(data: PanelDataset, dtr: Dtr, cfg: LearnerConfig,
                          nuisance=None) -> float:
    """Cross-fitted AIPW point estimate of the welfare of a fixed DTR."""
    folds = make_folds(data.n_units, cfg.num_folds, derive_seed(cfg.seed, TAG_FOLDS))
    provider = nuisance if nuisance is not None else FittedNuisance(cfg)
    provider.prepare(data, folds)
    classes = _resolve_classes(cfg, data)
    constraints = [c.constraint for c in classes]
    return _aipw_welfare(data, provider, list(dtr.policies), constraints, folds)


def learn(data: PanelDataset, cfg: LearnerConfig, nuisance=None) -> LearnResult:
    """Dispatch on ``cfg.method``."""
    if cfg.method == "dr":
        return learn_dr(data, cfg, nuisance=nuisance)
    if cfg.method == "q_learn":
        return learn_q(data, cfg, with_policy_search=False)
    if cfg.method == "q_search":
        return learn_q(data, cfg, with_policy_search=True)
    if cfg.method == "ipw":
        return learn_ipw(data, cfg)
    return learn_aipw_simultaneous(data, cfg, nuisance=nuisance)


def derived_config(cfg: LearnerConfig, rep: int) -> LearnerConfig:
    """Per-repetition config with an independent derived seed stream."""
    return replace(cfg, seed=derive_seed(cfg.seed, 0x5EB, rep))
