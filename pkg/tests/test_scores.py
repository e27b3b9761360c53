import numpy as np
import pytest

from dtrlearn.dataset import PanelDataset, StageSchema, make_folds
from dtrlearn.nuisance import NuisanceSet
from dtrlearn.policytree import constant_policy
from dtrlearn.scores import (
    ScoreMatrix,
    aipw_matrix,
    ipw_scores,
    oracle_scores,
    stage_pseudo_outcome,
)
from dtrlearn.simeval import DEFAULT_DISCRETE


class TestAipwCore:
    def test_direct_substitution(self):
        # (2.0 - 1.5)/0.5 + 1.5 = 2.5 at the observed action
        sm = aipw_matrix(1, pseudo=[2.0], actions=[1], q_mat=[[0.7, 1.5]],
                         e_obs=[0.5], y_abs_max=2.0)
        assert sm.values[0, 1] == pytest.approx(2.5)

    def test_unobserved_action_column_is_q(self):
        sm = aipw_matrix(1, pseudo=[2.0], actions=[1], q_mat=[[0.7, 1.5]],
                         e_obs=[0.5], y_abs_max=2.0)
        assert sm.values[0, 0] == 0.7

    def test_unit_propensity_telescopes_to_outcome(self):
        sm = aipw_matrix(1, pseudo=[2.0], actions=[0], q_mat=[[123.0, 0.0]],
                         e_obs=[1.0], y_abs_max=2.0)
        assert sm.values[0, 0] == pytest.approx(2.0)

    def test_five_row_hand_computation(self):
        y = np.array([2.0, -1.0, 0.5, 3.0, 1.0])
        a = np.array([1, 0, 1, 0, 1])
        e = np.array([0.5, 0.4, 0.8, 0.5, 0.25])
        q = np.array([[0.5, 1.5], [-0.5, 0.0], [1.0, 1.0], [2.0, -1.0], [0.0, 2.0]])
        sm = aipw_matrix(1, y, a, q, e, y_abs_max=3.0)
        # residuals by hand: 1.0, -1.25, -0.625, 2.0, -4.0
        expected = np.array([
            [0.5, 2.5],
            [-1.75, 0.0],
            [1.0, 0.375],
            [4.0, -1.0],
            [0.0, -2.0],
        ])
        assert sm.values == pytest.approx(expected)
        assert sm.column_means() == pytest.approx([0.75, -0.025])

    def test_perfectly_fitted_q_kills_residual(self):
        # Q(H, A) equal to the realized target -> scores reduce to the Q row
        y = np.array([1.0, 2.0])
        a = np.array([0, 1])
        q = np.array([[1.0, 5.0], [4.0, 2.0]])
        sm = aipw_matrix(1, y, a, q, np.array([0.3, 0.6]), y_abs_max=2.0)
        assert sm.values == pytest.approx(q)

    def test_non_finite_rejected(self):
        with pytest.raises(AssertionError, match="non-finite"):
            aipw_matrix(1, [np.nan], [0], [[1.0, 1.0]], [0.5], y_abs_max=1.0)

    def test_nonpositive_propensity_rejected(self):
        with pytest.raises(AssertionError, match="not positive"):
            aipw_matrix(1, [1.0], [0], [[1.0, 1.0]], [0.0], y_abs_max=1.0)

    def test_magnitude_bound_holds(self):
        rng = np.random.default_rng(0)
        y = rng.normal(size=50)
        a = rng.integers(0, 2, size=50)
        q = rng.normal(size=(50, 2))
        e = rng.uniform(0.1, 0.9, size=50)
        sm = aipw_matrix(1, y, a, q, e, y_abs_max=float(np.abs(y).max()))
        assert np.abs(sm.values).max() <= sm.bound * (1 + 1e-9)


class TestStagePseudoOutcome:
    def test_degenerate_nuisances_reduce_to_plug_in(self):
        # Q == 0 and e == 1: score at the observed action equals the
        # pseudo-outcome, other columns vanish
        schema = StageSchema(2, (2, 2), (1, 1), (True, True))
        rng = np.random.default_rng(1)
        n = 6
        data = PanelDataset(
            schema,
            actions=rng.integers(0, 2, size=(n, 2)),
            states=[rng.normal(size=(n, 1)), rng.normal(size=(n, 1))],
            outcomes=rng.normal(size=(n, 2)),
        )
        next_sm = aipw_matrix(2, data.outcomes[:, 1], data.actions[:, 1],
                              np.zeros((n, 2)), np.ones(n), y_abs_max=10.0)
        pseudo = stage_pseudo_outcome(data, 1, next_sm, constant_policy(2, 1))
        sm = aipw_matrix(1, pseudo, data.actions[:, 0], np.zeros((n, 2)),
                         np.ones(n), y_abs_max=10.0, next_bound=next_sm.bound)
        rows = np.arange(n)
        assert sm.values[rows, data.actions[:, 0]] == pytest.approx(pseudo)
        off = sm.values.copy()
        off[rows, data.actions[:, 0]] = 0.0
        assert off == pytest.approx(np.zeros((n, 2)))

    def test_fold_mismatch_is_hard_error(self):
        from dtrlearn.scores import _require_same_folds

        a = make_folds(10, 2, seed=0)
        b = make_folds(10, 2, seed=1)
        with pytest.raises(ValueError, match="fold assignments differ"):
            _require_same_folds(a, b)


class TestOracleIdentity:
    """Oracle score means are unbiased for the exhaustive policy values."""

    @pytest.mark.parametrize("pi1_leaf,pi2_leaf", [(0, 0), (1, 1), (0, 1)])
    def test_stage_means_match_exhaustive_values(self, pi1_leaf, pi2_leaf):
        dgp = DEFAULT_DISCRETE
        n = 20000
        pop = dgp.generate(n, seed=42 + pi1_leaf * 2 + pi2_leaf)
        policies = [constant_policy(1, pi1_leaf), constant_policy(2, pi2_leaf)]
        matrices = oracle_scores(pop.data, policies, dgp.true_propensity, dgp.true_q)
        for t in (1, 2):
            sm = matrices[t - 1]
            assert sm.provenance == "oracle_aipw"
            from dtrlearn.dataset import history_features
            from dtrlearn.policytree import assign_actions

            H = history_features(pop.data, t)
            acts = assign_actions(policies[t - 1], H, n_actions=2)
            applied = sm.values[np.arange(n), acts]
            truth = dgp.true_stage_value(t, policies)
            se = applied.std(ddof=1) / np.sqrt(n)
            assert abs(applied.mean() - truth) < 3 * se + 1e-12

    def test_double_robustness_wrong_q(self):
        # true propensities, biased Q: column means stay unbiased
        dgp = DEFAULT_DISCRETE
        n = 20000
        pop = dgp.generate(n, seed=7)
        policies = [constant_policy(1, 1), constant_policy(2, 1)]

        def wrong_q(t, H, suffix):
            return dgp.true_q(t, H, suffix) + 0.7

        matrices = oracle_scores(pop.data, policies, dgp.true_propensity, wrong_q)
        sm = matrices[0]
        from dtrlearn.dataset import history_features
        from dtrlearn.policytree import assign_actions

        H = history_features(pop.data, 1)
        acts = assign_actions(policies[0], H, n_actions=2)
        applied = sm.values[np.arange(n), acts]
        truth = dgp.true_stage_value(1, policies)
        se = applied.std(ddof=1) / np.sqrt(n)
        assert abs(applied.mean() - truth) < 3 * se

    def test_double_robustness_wrong_propensity(self):
        # true Q, distorted-but-bounded propensities: still unbiased
        dgp = DEFAULT_DISCRETE
        n = 20000
        pop = dgp.generate(n, seed=8)
        policies = [constant_policy(1, 0), constant_policy(2, 1)]

        def wrong_e(t, H, a_obs):
            return 0.5 * dgp.true_propensity(t, H, a_obs) + 0.25

        matrices = oracle_scores(pop.data, policies, wrong_e, dgp.true_q)
        sm = matrices[0]
        from dtrlearn.dataset import history_features
        from dtrlearn.policytree import assign_actions

        H = history_features(pop.data, 1)
        acts = assign_actions(policies[0], H, n_actions=2)
        applied = sm.values[np.arange(n), acts]
        truth = dgp.true_stage_value(1, policies)
        se = applied.std(ddof=1) / np.sqrt(n)
        assert abs(applied.mean() - truth) < 3 * se


class _TableClassifier:
    """Stub propensity model driven by a row-wise function."""

    def __init__(self, fn):
        self.fn = fn

    def predict_proba(self, X):
        return self.fn(np.asarray(X))


def _toy_ipw_setup():
    schema = StageSchema(2, (2, 2), (1, 1), (True, True))
    data = PanelDataset(
        schema,
        actions=np.array([[0, 1], [1, 1], [0, 0], [1, 0]]),
        states=[np.array([[0.0], [0.0], [1.0], [1.0]]),
                np.array([[1.0], [0.0], [1.0], [0.0]])],
        outcomes=np.array([[1.0, 2.0], [0.0, 1.0], [2.0, 0.0], [1.0, 3.0]]),
    )
    folds = make_folds(4, 2, seed=0)

    def stage1_probs(X):
        p1 = 0.4 + 0.2 * X[:, 0]
        return np.column_stack([1.0 - p1, p1])

    def stage2_probs(X):
        return np.full((X.shape[0], 2), 0.5)

    nuis = NuisanceSet(folds=folds, eta=0.01)
    for _ in range(folds.num_folds):
        nuis.propensity.append([_TableClassifier(stage1_probs), _TableClassifier(stage2_probs)])
    return data, nuis


class TestIpw:
    def test_single_stage_unit_propensity_reduces_to_indicator(self):
        schema = StageSchema(1, (2,), (1,), (True,))
        data = PanelDataset(
            schema,
            actions=np.array([[1], [0], [1]]),
            states=[np.zeros((3, 1))],
            outcomes=np.array([[2.0], [3.0], [-1.0]]),
        )
        folds = make_folds(3, 2, seed=0)
        nuis = NuisanceSet(folds=folds, eta=0.25)
        ones = _TableClassifier(lambda X: np.full((X.shape[0], 2), 0.5))
        for _ in range(2):
            nuis.propensity.append([ones])
        sm = ipw_scores(data, nuis, (), 1)
        rows = np.arange(3)
        assert sm.values[rows, data.actions[:, 0]] == pytest.approx(
            data.outcomes[:, 0] / 0.5
        )
        off = sm.values.copy()
        off[rows, data.actions[:, 0]] = 0.0
        assert off == pytest.approx(np.zeros((3, 2)))

    def test_four_row_hand_computation(self):
        data, nuis = _toy_ipw_setup()
        sm = ipw_scores(data, nuis, (constant_policy(2, 1),), 1)
        # hand: cum_y = [3,1,2,4]; match = [1,1,0,0];
        # denom = e2*e1 = [.5*.6, .5*.4, .5*.4, .5*.6] = [.3,.2,.2,.3]
        # weights = [10, 5, 0, 0] at the observed first-stage action
        expected = np.array([[10.0, 0.0], [0.0, 5.0], [0.0, 0.0], [0.0, 0.0]])
        assert sm.values == pytest.approx(expected)
        assert sm.column_means() == pytest.approx([2.5, 1.25])

    def test_future_disagreement_zeroes_the_row(self):
        data, nuis = _toy_ipw_setup()
        sm = ipw_scores(data, nuis, (constant_policy(2, 0),), 1)
        # units 0 and 1 took a2=1, policy says 0 -> rows vanish
        assert sm.values[0] == pytest.approx([0.0, 0.0])
        assert sm.values[1] == pytest.approx([0.0, 0.0])
        assert sm.values[2, 0] == pytest.approx(2.0 / 0.2)
        assert sm.values[3, 1] == pytest.approx(4.0 / 0.3)

    def test_aipw_with_zero_q_equals_ipw_single_stage(self):
        schema = StageSchema(1, (2,), (1,), (True,))
        rng = np.random.default_rng(3)
        n = 8
        data = PanelDataset(
            schema,
            actions=rng.integers(0, 2, size=(n, 1)),
            states=[rng.normal(size=(n, 1))],
            outcomes=rng.normal(size=(n, 1)),
        )
        folds = make_folds(n, 2, seed=0)
        nuis = NuisanceSet(folds=folds, eta=0.05)
        probs = _TableClassifier(lambda X: np.full((X.shape[0], 2), 0.5))
        for _ in range(2):
            nuis.propensity.append([probs])
        ipw = ipw_scores(data, nuis, (), 1)
        from dtrlearn.nuisance import propensity_observed

        aipw = aipw_matrix(1, data.outcomes[:, 0], data.actions[:, 0],
                           np.zeros((n, 2)), propensity_observed(nuis, data, 1),
                           y_abs_max=float(np.abs(data.outcomes).max()))
        assert aipw.values == pytest.approx(ipw.values)


class TestFittedScoreOps:
    """The public cross-fitted score builders on a small fitted pipeline."""

    def _fitted(self, n=300, seed=44):
        from dtrlearn.models import RegressorSpec
        from dtrlearn.nuisance import fit_final_q, fit_propensities

        pop = DEFAULT_DISCRETE.generate(n, seed=seed)
        folds = make_folds(n, 2, seed=1)
        spec = RegressorSpec(n_trees=10, feature_fraction=1.0)
        nuis = fit_propensities(pop.data, folds, spec, eta=0.01)
        nuis.q_spec = spec
        nuis.q_final = fit_final_q(pop.data, folds, spec)
        return pop, nuis

    def test_final_scores_shape_and_provenance(self):
        from dtrlearn.scores import aipw_scores_final

        pop, nuis = self._fitted()
        sm = aipw_scores_final(pop.data, nuis)
        assert sm.stage == 2
        assert sm.values.shape == (300, 2)
        assert sm.provenance == "aipw"
        assert np.isfinite(sm.values).all()

    def test_perfectly_fitted_q_reduces_to_q_rows(self):
        # constant outcomes make the fitted Q exact, so residuals vanish and
        # the score matrix equals the Q matrix column for column
        from dtrlearn.dataset import PanelDataset
        from dtrlearn.nuisance import fit_final_q, fit_propensities, q_matrix
        from dtrlearn.models import RegressorSpec
        from dtrlearn.scores import aipw_scores_final
        from dtrlearn.dataset import history_features

        pop = DEFAULT_DISCRETE.generate(200, seed=45)
        data = PanelDataset(pop.data.schema, pop.data.actions, pop.data.states,
                            np.full((200, 2), 2.5))
        folds = make_folds(200, 2, seed=2)
        spec = RegressorSpec(n_trees=8)
        nuis = fit_propensities(data, folds, spec, eta=0.01)
        nuis.q_spec = spec
        nuis.q_final = fit_final_q(data, folds, spec)
        sm = aipw_scores_final(data, nuis)
        q = q_matrix(nuis.q_final, folds, history_features(data, 2), 2, spec.kind)
        assert sm.values == pytest.approx(q, abs=1e-9)

    def test_stage_scores_require_matching_folds(self):
        from dtrlearn.scores import aipw_scores_final, aipw_scores_stage
        from dtrlearn.nuisance import fitted_q_evaluation

        pop, nuis = self._fitted()
        sm2 = aipw_scores_final(pop.data, nuis)
        pi2 = constant_policy(2, 1)
        q1 = fitted_q_evaluation(pop.data, nuis.folds, (pi2,), 1, nuis.q_spec,
                                 nuis.q_final)
        mismatched = ScoreMatrix(stage=2, values=sm2.values, provenance="aipw",
                                 folds=make_folds(300, 2, seed=99), bound=sm2.bound)
        with pytest.raises(ValueError, match="fold assignments differ"):
            aipw_scores_stage(pop.data, 1, q1, nuis.q_spec.kind, nuis, mismatched, pi2)

    def test_stage_scores_wrong_stage_rejected(self):
        from dtrlearn.scores import aipw_scores_final, aipw_scores_stage

        pop, nuis = self._fitted()
        sm2 = aipw_scores_final(pop.data, nuis)
        with pytest.raises(ValueError, match="stage"):
            aipw_scores_stage(pop.data, 2, nuis.q_final, nuis.q_spec.kind, nuis,
                              sm2, constant_policy(2, 1))


def test_score_matrix_csv_dump(tmp_path):
    sm = ScoreMatrix(stage=1, values=np.array([[1.0, 2.0], [3.0, 4.0]]),
                     provenance="aipw", folds=None, bound=10.0)
    path = tmp_path / "scores.csv"
    sm.to_csv(path)
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "unit_id,score_a0,score_a1"
    assert lines[1] == "0,1.0,2.0"
