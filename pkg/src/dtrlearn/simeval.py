"""Simulation DGPs, ground-truth welfare, and the Monte Carlo harness.

Generators return a :class:`PotentialOutcomePanel`: an observational panel
plus, per unit, the full map of potential states and potential outcomes for
every action combination.  That map makes test-sample welfare evaluation
exact along counterfactual paths, with no estimation involved.

Two simulated families are built in:

- ``dgp1`` / ``dgp2``: two stages of binary treatment, 20 standard-normal
  first-stage states, one continuous second-stage state, heterogeneous
  second-stage effects (sign-shaped in dgp1, linear in dgp2), logistic
  treatment assignment in both stages, and a final-stage-only outcome.
- ``appendix_d`` / ``appendix_d_modified``: the analytic two-stage example
  with fair-coin treatments, no states, and Bernoulli final outcomes whose
  means make backward induction over constant policies respectively
  suboptimal and optimal.
- ``custom_discrete``: a small fully-discrete two-stage process whose every
  expectation is computable by exhaustive enumeration; the tests use it as
  an identification oracle.

Benchmark repetitions derive their seeds from the master seed through the
counter-based splitting scheme in :mod:`dtrlearn.rng`, so runs are
reproducible and repetitions can execute in parallel.
"""

from __future__ import annotations

import itertools
import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .dataset import PanelDataset, StageSchema, history_features
from .learners import (
    Dtr,
    LearnerConfig,
    _resolve_classes,
    aipw_welfare_estimate,  # noqa: F401  (re-exported; part of this module's API)
    derived_config,
    learn,
)
from .policytree import assign_actions
from .rng import derive_seed, numpy_generator

TAG_TRAIN = 0x7121
TAG_TEST = 0x7E57

DGP_KINDS = ("dgp1", "dgp2", "appendix_d", "appendix_d_modified", "custom_discrete")


@dataclass(frozen=True)
class DgpSpec:
    kind: str
    n: int
    seed: int

    def __post_init__(self):
        if self.kind not in DGP_KINDS:
            raise ValueError(f"unknown DGP kind {self.kind!r}; pick one of {DGP_KINDS}")
        if self.n < 1:
            raise ValueError("n must be >= 1")


class PotentialOutcomePanel:
    """Observational panel plus per-unit potential states and outcomes.

    ``potential_states[t][prefix]`` is the (n, state_dim_t) state block that
    stage ``t >= 2`` would show under prior actions ``prefix``;
    ``potential_outcomes[t][combo]`` the stage-``t`` outcome under actions
    ``combo``.  Observed columns must equal the potentials at the realized
    actions (consistency), which is checked at construction.
    """

    def __init__(self, data: PanelDataset, potential_states, potential_outcomes):
        self.data = data
        self.potential_states = potential_states
        self.potential_outcomes = potential_outcomes
        self._check_consistency()

    def _check_consistency(self) -> None:
        data = self.data
        T = data.schema.num_stages
        for t in range(2, T + 1):
            branch = self.potential_states.get(t, {})
            for prefix, states in branch.items():
                mask = (data.actions[:, : t - 1] == np.asarray(prefix)).all(axis=1)
                if not np.array_equal(data.states[t - 1][mask], states[mask]):
                    raise ValueError(f"stage-{t} states inconsistent with potentials")
        for t in range(1, T + 1):
            for combo, y in self.potential_outcomes.get(t, {}).items():
                mask = (data.actions[:, :t] == np.asarray(combo)).all(axis=1)
                if not np.array_equal(data.outcomes[mask, t - 1], y[mask]):
                    raise ValueError(f"stage-{t} outcomes inconsistent with potentials")

    @property
    def n_units(self) -> int:
        return self.data.n_units


def true_welfare(pop: PotentialOutcomePanel, dtr: Dtr, constraints=None) -> float:
    """Mean total outcome along the counterfactual path assigned by ``dtr``.

    Stage by stage: assign ``a_t`` from the counterfactual history (past
    assigned actions, potential states under them), then collect the
    potential outcomes at the assigned action combinations.
    """
    data = pop.data
    schema = data.schema
    T = schema.num_stages
    n = data.n_units
    if constraints is None:
        constraints = [None] * T

    assigned = np.zeros((n, T), dtype=np.int64)
    state_blocks = [data.states[0]]
    total = np.zeros(n)
    for t in range(1, T + 1):
        if t >= 2:
            block = np.empty((n, schema.state_dims[t - 1]))
            for prefix, states in pop.potential_states[t].items():
                mask = (assigned[:, : t - 1] == np.asarray(prefix)).all(axis=1)
                block[mask] = states[mask]
            state_blocks.append(block)
        H = np.hstack([assigned[:, : t - 1].astype(np.float64)] + state_blocks[:t])
        prior = assigned[:, t - 2] if t >= 2 else None
        assigned[:, t - 1] = assign_actions(
            dtr.stage(t), H, prior_actions=prior, constraint=constraints[t - 1],
            n_actions=schema.actions_per_stage[t - 1],
        )
        if schema.outcome_present[t - 1]:
            stage_y = np.empty(n)
            for combo, y in pop.potential_outcomes[t].items():
                mask = (assigned[:, :t] == np.asarray(combo)).all(axis=1)
                stage_y[mask] = y[mask]
            total += stage_y
    return float(total.mean())


# ---------------------------------------------------------------------------
# DGP families.
# ---------------------------------------------------------------------------


def _sigmoid(x: np.ndarray) -> np.ndarray:
    return 1.0 / (1.0 + np.exp(x))


class SimulatedTwoStageDgp:
    """The two benchmark processes; ``effect`` picks the phi shape."""

    def __init__(self, effect: str):
        if effect not in ("sign", "linear"):
            raise ValueError(effect)
        self.effect = effect
        self.schema = StageSchema(
            num_stages=2,
            actions_per_stage=(2, 2),
            state_dims=(20, 1),
            outcome_present=(False, True),
        )

    def _phi(self, a1: int, s2: np.ndarray) -> np.ndarray:
        if self.effect == "sign":
            return np.sign(s2 * (a1 - 0.5))
        return s2 + (a1 - 0.5)

    def generate(self, n: int, seed: int) -> PotentialOutcomePanel:
        rng = numpy_generator(seed)
        s1 = rng.standard_normal((n, 20))
        eps1 = rng.standard_normal(n)
        eps2 = rng.standard_normal(n)
        u1 = rng.random(n)
        u2 = rng.random(n)

        base = s1[:, 1] + s1[:, 2] ** 2 + s1[:, 3] + eps1
        s2_pot = {(0,): base.copy(), (1,): np.sign(s1[:, 0]) + base}

        y2_pot = {}
        for a1 in (0, 1):
            s2a = s2_pot[(a1,)]
            rest = 0.5 * s2a + s1[:, 3] - s1[:, 4] ** 2 + s1[:, 5] + eps2
            for a2 in (0, 1):
                y2_pot[(a1, a2)] = self._phi(a1, s2a) * a2 + rest

        p_a1 = _sigmoid(0.5 * s1[:, 1] - 0.5 * s1[:, 2] - s1[:, 4])
        a1 = (u1 < p_a1).astype(np.int64)
        s2_obs = np.where(a1 == 1, s2_pot[(1,)], s2_pot[(0,)])
        p_a2 = _sigmoid(0.5 * s1[:, 4] + 0.5 * s2_obs - 0.2 * a1)
        a2 = (u2 < p_a2).astype(np.int64)
        y2 = np.choose(a2, [np.where(a1 == 1, y2_pot[(1, 0)], y2_pot[(0, 0)]),
                            np.where(a1 == 1, y2_pot[(1, 1)], y2_pot[(0, 1)])])

        data = PanelDataset(
            self.schema,
            actions=np.column_stack([a1, a2]),
            states=[s1, s2_obs.reshape(-1, 1)],
            outcomes=np.column_stack([np.zeros(n), y2]),
        )
        potential_states = {2: {k: v.reshape(-1, 1) for k, v in s2_pot.items()}}
        potential_outcomes = {
            1: {(0,): np.zeros(n), (1,): np.zeros(n)},
            2: y2_pot,
        }
        return PotentialOutcomePanel(data, potential_states, potential_outcomes)


class AppendixDDgp:
    """Analytic two-stage example: fair-coin actions, Bernoulli final outcome.

    All welfare content sits in the four means ``E[Y2(a1, a2)]``; the
    second-stage history is the first-stage action alone.
    """

    def __init__(self, modified: bool):
        self.means = {(1, 1): 1.0, (1, 0): 0.5, (0, 1): 0.4 if modified else 0.0, (0, 0): 0.6}
        self.schema = StageSchema(
            num_stages=2,
            actions_per_stage=(2, 2),
            state_dims=(0, 0),
            outcome_present=(False, True),
        )

    def generate(self, n: int, seed: int) -> PotentialOutcomePanel:
        rng = numpy_generator(seed)
        a1 = (rng.random(n) < 0.5).astype(np.int64)
        a2 = (rng.random(n) < 0.5).astype(np.int64)
        y2_pot = {}
        for combo in ((0, 0), (0, 1), (1, 0), (1, 1)):
            y2_pot[combo] = (rng.random(n) < self.means[combo]).astype(np.float64)
        y2 = np.empty(n)
        for combo, y in y2_pot.items():
            mask = (a1 == combo[0]) & (a2 == combo[1])
            y2[mask] = y[mask]
        data = PanelDataset(
            self.schema,
            actions=np.column_stack([a1, a2]),
            states=[np.empty((n, 0)), np.empty((n, 0))],
            outcomes=np.column_stack([np.zeros(n), y2]),
        )
        potential_states = {2: {(0,): np.empty((n, 0)), (1,): np.empty((n, 0))}}
        potential_outcomes = {1: {(0,): np.zeros(n), (1,): np.zeros(n)}, 2: y2_pot}
        return PotentialOutcomePanel(data, potential_states, potential_outcomes)

    # -- exact truths (oracle nuisances and exhaustive values) --------------

    def true_propensity(self, t, H, a_obs) -> np.ndarray:
        return np.full(np.asarray(a_obs).shape[0], 0.5)

    def true_q(self, t, H, suffix_policies) -> np.ndarray:
        n = H.shape[0]
        out = np.empty((n, 2))
        if t == 2:
            a1 = H[:, 0].astype(np.int64)
            for a2 in (0, 1):
                means = np.array([self.means[(0, a2)], self.means[(1, a2)]])
                out[:, a2] = means[a1]
            return out
        pi2 = suffix_policies[0]
        for a1 in (0, 1):
            a2 = int(assign_actions(pi2, np.array([[float(a1)]]), n_actions=2)[0])
            out[:, a1] = self.means[(a1, a2)]
        return out

    def true_stage_value(self, t, policies) -> float:
        """Exhaustive policy value for the suffix ``policies[t-1:]``."""
        if t == 2:
            pi2 = policies[1]
            val = 0.0
            for a1 in (0, 1):
                a2 = int(assign_actions(pi2, np.array([[float(a1)]]), n_actions=2)[0])
                val += 0.5 * self.means[(a1, a2)]
            return val
        pi1 = policies[0]
        a1 = int(assign_actions(pi1, np.empty((1, 0)), n_actions=2)[0])
        pi2 = policies[1]
        a2 = int(assign_actions(pi2, np.array([[float(a1)]]), n_actions=2)[0])
        return self.means[(a1, a2)]


class DiscreteTwoStageDgp:
    """Fully discrete two-stage process with exhaustively computable truths.

    Binary first/second-stage states and actions; all conditional tables
    are indexed ``[s1][a1][s2][a2]`` as applicable.  Outcomes are Bernoulli
    at both stages, so Monte Carlo standard errors are honest while every
    expectation reduces to a finite sum.
    """

    def __init__(self, p_s1, e1, mu1, p_s2, e2, mu2):
        self.p_s1 = float(p_s1)
        self.e1 = np.asarray(e1, dtype=np.float64)            # (2,) P(A1=1|s1)
        self.mu1 = np.asarray(mu1, dtype=np.float64)          # (2,2) E[Y1(a1)|s1]
        self.p_s2 = np.asarray(p_s2, dtype=np.float64)        # (2,2) P(S2(a1)=1|s1)
        self.e2 = np.asarray(e2, dtype=np.float64)            # (2,2,2) P(A2=1|s1,a1,s2)
        self.mu2 = np.asarray(mu2, dtype=np.float64)          # (2,2,2,2)
        self.schema = StageSchema(
            num_stages=2,
            actions_per_stage=(2, 2),
            state_dims=(1, 1),
            outcome_present=(True, True),
        )

    def generate(self, n: int, seed: int) -> PotentialOutcomePanel:
        rng = numpy_generator(seed)
        s1 = (rng.random(n) < self.p_s1).astype(np.int64)
        y1_pot = {(a1,): (rng.random(n) < self.mu1[s1, a1]).astype(np.float64) for a1 in (0, 1)}
        s2_pot = {(a1,): (rng.random(n) < self.p_s2[s1, a1]).astype(np.int64) for a1 in (0, 1)}
        y2_pot = {}
        for a1 in (0, 1):
            s2a = s2_pot[(a1,)]
            for a2 in (0, 1):
                y2_pot[(a1, a2)] = (rng.random(n) < self.mu2[s1, a1, s2a, a2]).astype(np.float64)
        a1 = (rng.random(n) < self.e1[s1]).astype(np.int64)
        s2 = np.where(a1 == 1, s2_pot[(1,)], s2_pot[(0,)])
        a2 = (rng.random(n) < self.e2[s1, a1, s2]).astype(np.int64)
        y1 = np.where(a1 == 1, y1_pot[(1,)], y1_pot[(0,)])
        y2 = np.empty(n)
        for combo, y in y2_pot.items():
            mask = (a1 == combo[0]) & (a2 == combo[1])
            y2[mask] = y[mask]
        data = PanelDataset(
            self.schema,
            actions=np.column_stack([a1, a2]),
            states=[s1.reshape(-1, 1).astype(float), s2.reshape(-1, 1).astype(float)],
            outcomes=np.column_stack([y1, y2]),
        )
        potential_states = {2: {k: v.reshape(-1, 1).astype(float) for k, v in s2_pot.items()}}
        potential_outcomes = {1: y1_pot, 2: y2_pot}
        return PotentialOutcomePanel(data, potential_states, potential_outcomes)

    # -- exact truths --------------------------------------------------------

    def true_propensity(self, t, H, a_obs) -> np.ndarray:
        a_obs = np.asarray(a_obs, dtype=np.int64)
        if t == 1:
            s1 = H[:, 0].astype(np.int64)
            p1 = self.e1[s1]
            return np.where(a_obs == 1, p1, 1.0 - p1)
        a1 = H[:, 0].astype(np.int64)
        s1 = H[:, 1].astype(np.int64)
        s2 = H[:, 2].astype(np.int64)
        p1 = self.e2[s1, a1, s2]
        return np.where(a_obs == 1, p1, 1.0 - p1)

    def true_q(self, t, H, suffix_policies) -> np.ndarray:
        n = H.shape[0]
        out = np.empty((n, 2))
        if t == 2:
            a1 = H[:, 0].astype(np.int64)
            s1 = H[:, 1].astype(np.int64)
            s2 = H[:, 2].astype(np.int64)
            for a2 in (0, 1):
                out[:, a2] = self.mu2[s1, a1, s2, a2]
            return out
        s1 = H[:, 0].astype(np.int64)
        pi2 = suffix_policies[0]
        for a1 in (0, 1):
            cont = np.zeros(n)
            for s2 in (0, 1):
                h2 = np.column_stack([
                    np.full(n, float(a1)), s1.astype(float), np.full(n, float(s2)),
                ])
                a2 = assign_actions(pi2, h2, prior_actions=np.full(n, a1), n_actions=2)
                prob = np.where(s2 == 1, self.p_s2[s1, a1], 1.0 - self.p_s2[s1, a1])
                cont += prob * self.mu2[s1, a1, s2, a2]
            out[:, a1] = self.mu1[s1, a1] + cont
        return out

    def true_stage_value(self, t, policies) -> float:
        """Exhaustive ``V_t``: observed-prefix expectation, then the policies."""
        val = 0.0
        for s1 in (0, 1):
            p_s1 = self.p_s1 if s1 == 1 else 1.0 - self.p_s1
            if t == 1:
                a1 = int(assign_actions(policies[0], np.array([[float(s1)]]), n_actions=2)[0])
                branches = [(a1, 1.0)]
                include_y1 = True
            else:
                e1 = self.e1[s1]
                branches = [(0, 1.0 - e1), (1, e1)]
                include_y1 = False
            for a1, p_a1 in branches:
                inner = self.mu1[s1, a1] if include_y1 else 0.0
                for s2 in (0, 1):
                    p_s2 = self.p_s2[s1, a1] if s2 == 1 else 1.0 - self.p_s2[s1, a1]
                    h2 = np.array([[float(a1), float(s1), float(s2)]])
                    a2 = int(assign_actions(policies[1], h2,
                                            prior_actions=np.array([a1]), n_actions=2)[0])
                    inner += p_s2 * self.mu2[s1, a1, s2, a2]
                val += p_s1 * p_a1 * inner
        return val

    def true_welfare_exhaustive(self, policies) -> float:
        return self.true_stage_value(1, policies)


DEFAULT_DISCRETE = DiscreteTwoStageDgp(
    p_s1=0.6,
    e1=(0.3, 0.7),
    mu1=((0.2, 0.5), (0.4, 0.3)),
    p_s2=((0.3, 0.6), (0.5, 0.8)),
    e2=(((0.4, 0.6), (0.3, 0.7)), ((0.5, 0.2), (0.6, 0.4))),
    mu2=(
        (((0.1, 0.7), (0.5, 0.2)), ((0.6, 0.3), (0.2, 0.9))),
        (((0.3, 0.4), (0.8, 0.1)), ((0.5, 0.5), (0.1, 0.6))),
    ),
)


def dgp_model(kind: str):
    if kind == "dgp1":
        return SimulatedTwoStageDgp("sign")
    if kind == "dgp2":
        return SimulatedTwoStageDgp("linear")
    if kind == "appendix_d":
        return AppendixDDgp(modified=False)
    if kind == "appendix_d_modified":
        return AppendixDDgp(modified=True)
    if kind == "custom_discrete":
        return DEFAULT_DISCRETE
    raise ValueError(f"unknown DGP kind {kind!r}")


def generate(spec: DgpSpec) -> PotentialOutcomePanel:
    """Draw a panel with full potential-outcome maps per ``spec``."""
    return dgp_model(spec.kind).generate(spec.n, spec.seed)


# ---------------------------------------------------------------------------
# Benchmark harness.
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RepRecord:
    rep: int
    method: str
    seed: int
    welfare: float | None
    wall_ms: float | None = None
    error: str | None = None


@dataclass(frozen=True)
class MethodSummary:
    method: str
    mean: float | None
    sd: float | None
    n_ok: int
    n_failed: int


@dataclass(frozen=True)
class BenchmarkReport:
    dgp: str
    n_train: int
    n_test: int
    reps: int
    master_seed: int
    records: tuple
    summaries: tuple
    notes: dict = field(default_factory=dict)

    def to_jsonl(self) -> str:
        lines = [json.dumps({"benchmark": {
            "dgp": self.dgp, "n_train": self.n_train, "n_test": self.n_test,
            "reps": self.reps, "master_seed": self.master_seed, "notes": self.notes,
        }})]
        for r in self.records:
            lines.append(json.dumps({
                "rep": r.rep, "method": r.method, "seed": r.seed,
                "welfare": r.welfare, "wall_ms": r.wall_ms, "error": r.error,
            }))
        for s in self.summaries:
            lines.append(json.dumps({
                "summary": s.method, "mean": s.mean, "sd": s.sd,
                "reps_ok": s.n_ok, "failures": s.n_failed,
            }))
        return "\n".join(lines) + "\n"

    def mean_welfare(self, method: str) -> float:
        for s in self.summaries:
            if s.method == method:
                if s.mean is None:
                    raise ValueError(f"method {method!r} has no successful repetitions")
                return s.mean
        raise KeyError(method)


def _run_one_rep(args) -> list[RepRecord]:
    (kind, n_train, n_test, methods, master_seed, rep, timings) = args
    train = generate(DgpSpec(kind, n_train, derive_seed(master_seed, TAG_TRAIN, rep)))
    test = generate(DgpSpec(kind, n_test, derive_seed(master_seed, TAG_TEST, rep)))
    records = []
    for label, cfg in methods:
        cfg_r = derived_config(cfg, rep)
        started = time.perf_counter()
        try:
            result = learn(train.data, cfg_r)
            constraints = [c.constraint for c in _resolve_classes(cfg_r, train.data)]
            welfare = true_welfare(test, result.dtr, constraints)
            elapsed = (time.perf_counter() - started) * 1000.0
            records.append(RepRecord(rep=rep, method=label, seed=cfg_r.seed,
                                     welfare=welfare,
                                     wall_ms=elapsed if timings else None))
        except Exception as exc:  # failed reps are recorded, not fatal
            records.append(RepRecord(rep=rep, method=label, seed=cfg_r.seed,
                                     welfare=None, error=f"{type(exc).__name__}: {exc}"))
    return records


def run_benchmark(methods, dgp_kind: str, n_train: int, n_test: int, reps: int,
                  master_seed: int, jobs: int = 1, timings: bool = False) -> BenchmarkReport:
    """Monte Carlo comparison of learners on one DGP.

    ``methods`` is a sequence of ``(label, LearnerConfig)`` pairs; every
    repetition trains all methods on the same train panel and evaluates the
    learned DTRs by exact counterfactual welfare on the same test panel.
    Failed repetitions are recorded and excluded from the summary.
    """
    if reps < 1:
        raise ValueError("reps must be >= 1")
    tasks = [(dgp_kind, n_train, n_test, list(methods), master_seed, rep, timings)
             for rep in range(reps)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            per_rep = list(pool.map(_run_one_rep, tasks))
    else:
        per_rep = [_run_one_rep(task) for task in tasks]

    records = tuple(itertools.chain.from_iterable(per_rep))
    summaries = []
    for label, _ in methods:
        vals = [r.welfare for r in records if r.method == label and r.welfare is not None]
        n_fail = sum(1 for r in records if r.method == label and r.welfare is None)
        if vals:
            mean = float(np.mean(vals))
            sd = float(np.std(vals, ddof=1)) if len(vals) > 1 else None
        else:
            mean = None
            sd = None
        summaries.append(MethodSummary(label, mean, sd, len(vals), n_fail))

    return BenchmarkReport(
        dgp=dgp_kind, n_train=n_train, n_test=n_test, reps=reps,
        master_seed=master_seed, records=records, summaries=tuple(summaries),
        notes={"stage1_outcome": "identically zero in the built-in simulated DGPs"},
    )


def format_report_table(reports) -> str:
    """Fixed-width text table: method rows, one mean (sd) column per n."""
    reports = list(reports)
    methods = [s.method for s in reports[0].summaries]
    header = ["method".ljust(22)] + [f"n={r.n_train}".rjust(16) for r in reports]
    lines = ["".join(header), "-" * (22 + 16 * len(reports))]
    for m in methods:
        cells = [m.ljust(22)]
        for r in reports:
            s = next(s for s in r.summaries if s.method == m)
            if s.mean is None:
                cells.append("failed".rjust(16))
            else:
                sd = f"({s.sd:.2f})" if s.sd is not None else "(--)"
                cells.append(f"{s.mean:.2f} {sd}".rjust(16))
        lines.append("".join(cells))
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# Potential-outcome sidecar I/O (for simulate/evaluate round trips).
# ---------------------------------------------------------------------------


def write_sidecar(path, pop: PotentialOutcomePanel) -> None:
    """Write potential states/outcomes as CSV next to a simulated panel."""
    schema = pop.data.schema
    cols = ["unit_id"]
    blocks = []
    for t in sorted(pop.potential_states):
        for prefix in sorted(pop.potential_states[t]):
            block = pop.potential_states[t][prefix]
            tag = "".join(str(a) for a in prefix)
            for j in range(block.shape[1]):
                cols.append(f"ps{t}_a{tag}_{j + 1}")
            blocks.append(block)
    for t in sorted(pop.potential_outcomes):
        for combo in sorted(pop.potential_outcomes[t]):
            tag = "".join(str(a) for a in combo)
            cols.append(f"py{t}_a{tag}")
            blocks.append(pop.potential_outcomes[t][combo].reshape(-1, 1))
    n = pop.data.n_units
    mat = np.hstack(blocks) if blocks else np.empty((n, 0))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(cols) + "\n")
        for i in range(n):
            fh.write(",".join([str(i)] + [repr(float(v)) for v in mat[i]]) + "\n")
    _ = schema  # layout is schema-driven on read


def load_sidecar(path, data: PanelDataset) -> PotentialOutcomePanel:
    """Rebuild a :class:`PotentialOutcomePanel` from a panel and its sidecar."""
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
        mat = np.array([[float(c) for c in line.strip().split(",")]
                        for line in fh if line.strip()])
    by_name = {name: mat[:, j] for j, name in enumerate(header)}
    schema = data.schema
    potential_states: dict = {}
    potential_outcomes: dict = {}
    for t in range(2, schema.num_stages + 1):
        dim = schema.state_dims[t - 1]
        branch = {}
        for prefix in itertools.product(*[range(schema.actions_per_stage[s])
                                          for s in range(t - 1)]):
            tag = "".join(str(a) for a in prefix)
            cols = [f"ps{t}_a{tag}_{j + 1}" for j in range(dim)]
            if all(c in by_name for c in cols):
                branch[prefix] = (
                    np.column_stack([by_name[c] for c in cols]) if cols
                    else np.empty((data.n_units, 0))
                )
        potential_states[t] = branch
    for t in range(1, schema.num_stages + 1):
        combos = {}
        for combo in itertools.product(*[range(schema.actions_per_stage[s])
                                         for s in range(t)]):
            tag = "".join(str(a) for a in combo)
            name = f"py{t}_a{tag}"
            if name in by_name:
                combos[combo] = by_name[name]
        if combos:
            potential_outcomes[t] = combos
    return PotentialOutcomePanel(data, potential_states, potential_outcomes)
