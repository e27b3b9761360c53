import numpy as np
import pytest

from dtrlearn.learners import Dtr, LearnerConfig
from dtrlearn.models import RegressorSpec
from dtrlearn.policytree import PolicyClassSpec, PolicyTree, constant_policy
from dtrlearn.simeval import (
    DEFAULT_DISCRETE,
    AppendixDDgp,
    DgpSpec,
    dgp_model,
    format_report_table,
    generate,
    load_sidecar,
    run_benchmark,
    true_welfare,
    write_sidecar,
)

CONSTANT_CLASSES = (PolicyClassSpec(kind="constant"), PolicyClassSpec(kind="constant"))


def constant_dtr(a1, a2):
    return Dtr((constant_policy(1, a1), constant_policy(2, a2)))


class TestDgpSpecs:
    def test_unknown_kind_rejected(self):
        with pytest.raises(ValueError, match="unknown DGP"):
            DgpSpec("dgp3", 10, 0)

    def test_generation_is_deterministic(self):
        a = generate(DgpSpec("dgp1", 100, 5))
        b = generate(DgpSpec("dgp1", 100, 5))
        assert np.array_equal(a.data.outcomes, b.data.outcomes)
        assert np.array_equal(a.data.actions, b.data.actions)

    def test_observed_columns_equal_potentials_at_realized_actions(self):
        pop = generate(DgpSpec("dgp2", 500, 6))
        a1 = pop.data.actions[:, 0]
        a2 = pop.data.actions[:, 1]
        s2 = np.where(a1 == 1, pop.potential_states[2][(1,)][:, 0],
                      pop.potential_states[2][(0,)][:, 0])
        assert np.array_equal(pop.data.states[1][:, 0], s2)
        for combo, y in pop.potential_outcomes[2].items():
            mask = (a1 == combo[0]) & (a2 == combo[1])
            assert np.array_equal(pop.data.outcomes[mask, 1], y[mask])

    def test_analytic_example_population_means(self):
        pop = generate(DgpSpec("appendix_d", 1_000_000, 7))
        for combo, mean in ((1, 1), 1.0), ((1, 0), 0.5), ((0, 1), 0.0), ((0, 0), 0.6):
            draw = pop.potential_outcomes[2][combo]
            se = draw.std(ddof=1) / np.sqrt(draw.shape[0]) if draw.std() > 0 else 0.0
            assert abs(draw.mean() - mean) <= 3 * se + 1e-12

    def test_dgp1_stage1_propensity_near_half_at_neutral_covariates(self):
        # conditional on the three assignment covariates being near zero, the
        # empirical treatment frequency matches the mean true propensity
        pop = generate(DgpSpec("dgp1", 1_000_000, 8))
        s1 = pop.data.states[0]
        window = (np.abs(s1[:, 1]) < 0.1) & (np.abs(s1[:, 2]) < 0.1) & (np.abs(s1[:, 4]) < 0.1)
        assert window.sum() > 200
        x = 0.5 * s1[window, 1] - 0.5 * s1[window, 2] - s1[window, 4]
        p_true = 1.0 / (1.0 + np.exp(x))
        freq = pop.data.actions[window, 0].mean()
        se = np.sqrt(0.25 / window.sum())
        assert abs(p_true.mean() - 0.5) < 0.03
        assert abs(freq - p_true.mean()) < 3 * se

    def test_stage1_outcome_identically_zero(self):
        pop = generate(DgpSpec("dgp1", 200, 9))
        assert np.array_equal(pop.data.outcomes[:, 0], np.zeros(200))


class TestTrueWelfare:
    def test_analytic_example_welfare_levels(self):
        pop = generate(DgpSpec("appendix_d", 1_000_000, 10))
        w_opt = true_welfare(pop, constant_dtr(1, 1))
        w_myopic = true_welfare(pop, constant_dtr(0, 0))
        assert abs(w_opt - 1.0) < 3 * 0.5 / 1000.0 + 1e-9
        assert abs(w_myopic - 0.6) < 3 * 0.5 / 1000.0

    def test_extensionally_equal_policies_same_welfare(self):
        pop = generate(DgpSpec("dgp1", 5000, 11))
        as_constant = constant_dtr(1, 0)
        as_degenerate_tree = Dtr((
            PolicyTree(stage=1, depth=1, features=(0,),
                       thresholds=(float("-inf"),), leaves=(1, 1)),
            PolicyTree(stage=2, depth=1, features=(3,),
                       thresholds=(0.7,), leaves=(0, 0)),
        ))
        assert true_welfare(pop, as_constant) == true_welfare(pop, as_degenerate_tree)

    def test_counterfactual_path_uses_potential_states(self):
        # a policy that reads the second-stage state must see S2(pi_1), not
        # the observed S2; check against a hand-rolled path evaluation
        pop = generate(DgpSpec("dgp1", 2000, 12))
        tree2 = PolicyTree(stage=2, depth=1, features=(21,),  # S2 column in H2
                           thresholds=(0.0,), leaves=(0, 1))
        dtr = Dtr((constant_policy(1, 1), tree2))
        w = true_welfare(pop, dtr)
        s2_1 = pop.potential_states[2][(1,)][:, 0]
        a2 = (s2_1 >= 0.0).astype(int)
        y = np.where(a2 == 1, pop.potential_outcomes[2][(1, 1)],
                     pop.potential_outcomes[2][(1, 0)])
        assert w == pytest.approx(float(y.mean()))

    def test_exhaustive_value_matches_monte_carlo(self):
        dgp = DEFAULT_DISCRETE
        pop = dgp.generate(50000, seed=13)
        for a1, a2 in ((0, 0), (1, 0), (0, 1), (1, 1)):
            dtr = constant_dtr(a1, a2)
            mc = true_welfare(pop, dtr)
            exact = dgp.true_welfare_exhaustive(list(dtr.policies))
            assert abs(mc - exact) < 3 * 1.0 / np.sqrt(50000)


def tiny_methods(seed=31):
    spec = RegressorSpec(n_trees=5)
    return [
        ("dr", LearnerConfig(method="dr", seed=seed, num_folds=2,
                             propensity_spec=spec, q_spec=spec,
                             policy_classes=CONSTANT_CLASSES)),
        ("ipw", LearnerConfig(method="ipw", seed=seed + 1, num_folds=2,
                              propensity_spec=spec, q_spec=spec,
                              policy_classes=CONSTANT_CLASSES)),
    ]


class TestBenchmark:
    def test_single_rep_has_no_sd(self):
        report = run_benchmark(tiny_methods()[:1], "custom_discrete",
                               n_train=200, n_test=500, reps=1, master_seed=1)
        assert len(report.records) == 1
        assert report.summaries[0].sd is None
        assert report.summaries[0].n_ok == 1

    def test_reruns_are_byte_identical(self):
        kwargs = dict(dgp_kind="custom_discrete", n_train=200, n_test=500,
                      reps=3, master_seed=2)
        a = run_benchmark(tiny_methods(), **kwargs)
        b = run_benchmark(tiny_methods(), **kwargs)
        assert a.to_jsonl() == b.to_jsonl()

    def test_jobs_do_not_change_results(self):
        kwargs = dict(dgp_kind="custom_discrete", n_train=200, n_test=500,
                      reps=4, master_seed=3)
        serial = run_benchmark(tiny_methods(), jobs=1, **kwargs)
        parallel = run_benchmark(tiny_methods(), jobs=2, **kwargs)
        assert serial.to_jsonl() == parallel.to_jsonl()

    def test_seed_isolation_between_methods(self):
        # changing ipw's seed must not move dr's per-rep welfare
        base = run_benchmark(tiny_methods(seed=40), "custom_discrete",
                             n_train=200, n_test=500, reps=3, master_seed=4)
        methods = tiny_methods(seed=40)
        bumped = [(methods[0][0], methods[0][1]),
                  ("ipw", LearnerConfig(method="ipw", seed=999, num_folds=2,
                                        propensity_spec=RegressorSpec(n_trees=5),
                                        q_spec=RegressorSpec(n_trees=5),
                                        policy_classes=CONSTANT_CLASSES))]
        other = run_benchmark(bumped, "custom_discrete",
                              n_train=200, n_test=500, reps=3, master_seed=4)
        dr_a = [r.welfare for r in base.records if r.method == "dr"]
        dr_b = [r.welfare for r in other.records if r.method == "dr"]
        assert dr_a == dr_b

    def test_failed_reps_are_recorded_not_fatal(self):
        bad = LearnerConfig(method="aipw_simultaneous", seed=1, num_folds=2,
                            policy_classes=(PolicyClassSpec(kind="tree", depth=2),
                                            PolicyClassSpec(kind="tree", depth=2)))
        report = run_benchmark([("boom", bad)], "dgp1",
                               n_train=150, n_test=200, reps=2, master_seed=5)
        assert report.summaries[0].n_failed == 2
        assert report.summaries[0].mean is None
        assert all(r.error for r in report.records)

    def test_table_formatting(self):
        report = run_benchmark(tiny_methods(), "custom_discrete",
                               n_train=200, n_test=500, reps=2, master_seed=6)
        table = format_report_table([report])
        assert "n=200" in table
        assert "dr" in table and "ipw" in table


class TestSidecar:
    def test_round_trip_preserves_welfare(self, tmp_path):
        pop = generate(DgpSpec("dgp1", 300, 14))
        path = tmp_path / "po.csv"
        write_sidecar(path, pop)
        again = load_sidecar(path, pop.data)
        dtr = constant_dtr(1, 1)
        assert true_welfare(again, dtr) == true_welfare(pop, dtr)

    def test_round_trip_appendix_d(self, tmp_path):
        pop = generate(DgpSpec("appendix_d", 200, 15))
        path = tmp_path / "po.csv"
        write_sidecar(path, pop)
        again = load_sidecar(path, pop.data)
        assert true_welfare(again, constant_dtr(0, 0)) == pytest.approx(
            true_welfare(pop, constant_dtr(0, 0)))


def test_regret_nonnegativity_over_enumerable_class():
    # the best enumerated DTR on the same test panel dominates any learned one
    dgp = DEFAULT_DISCRETE
    train = dgp.generate(600, seed=50)
    test = dgp.generate(20000, seed=51)
    cfg = LearnerConfig(method="dr", seed=52, num_folds=2,
                        propensity_spec=RegressorSpec(n_trees=10),
                        q_spec=RegressorSpec(n_trees=10),
                        policy_classes=CONSTANT_CLASSES)
    from dtrlearn.learners import learn_dr

    learned = learn_dr(train.data, cfg)
    w_learned = true_welfare(test, learned.dtr)
    w_best = max(
        true_welfare(test, constant_dtr(a1, a2))
        for a1 in (0, 1)
        for a2 in (0, 1)
    )
    assert w_best >= w_learned


def test_dgp_model_kinds():
    assert isinstance(dgp_model("appendix_d"), AppendixDDgp)
    assert dgp_model("appendix_d").means[(0, 1)] == 0.0
    assert dgp_model("appendix_d_modified").means[(0, 1)] == 0.4
