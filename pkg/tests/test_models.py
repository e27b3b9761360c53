import numpy as np
import pytest

from dtrlearn.models import RegressorSpec, fit_classifier, fit_regressor, model_from_dict

from helpers import knn_rmse


class TestLinearRegressor:
    def test_exact_on_linear_target(self):
        X = np.array([[0.0], [1.0], [2.0], [3.0]])
        y = 2.0 * X[:, 0] + 1.0
        model = fit_regressor(RegressorSpec(kind="linear"), X, y)
        assert model.predict(np.array([[10.0]]))[0] == pytest.approx(21.0, abs=1e-9)

    def test_intercept_only_with_no_features(self):
        X = np.empty((4, 0))
        y = np.array([1.0, 2.0, 3.0, 4.0])
        model = fit_regressor(RegressorSpec(kind="linear"), X, y)
        assert model.predict(np.empty((2, 0))) == pytest.approx([2.5, 2.5])

    def test_collinear_design_stays_finite(self):
        rng = np.random.default_rng(0)
        x = rng.normal(size=50)
        X = np.column_stack([x, x, 2 * x])  # rank deficient
        y = x + rng.normal(size=50) * 0.1
        model = fit_regressor(RegressorSpec(kind="linear"), X, y)
        assert np.isfinite(model.predict(X)).all()


class TestForestRegressor:
    def test_constant_target_predicts_constant(self):
        rng = np.random.default_rng(1)
        X = rng.normal(size=(40, 3))
        y = np.full(40, 3.25)
        model = fit_regressor(RegressorSpec(n_trees=10), X, y)
        pred = model.predict(rng.normal(size=(10, 3)))
        assert pred == pytest.approx(np.full(10, 3.25), abs=1e-12)

    def test_quadratic_beats_rmse_budget_and_knn_factor(self):
        rng = np.random.default_rng(2)
        x = rng.uniform(-2, 2, size=500)
        y = x**2 + rng.normal(size=500) * 0.1
        grid = np.linspace(-1.9, 1.9, 200)
        truth = grid**2
        model = fit_regressor(
            RegressorSpec(n_trees=100, max_depth=10, min_leaf=5, feature_fraction=1.0),
            x.reshape(-1, 1),
            y,
        )
        rmse = float(np.sqrt(np.mean((model.predict(grid.reshape(-1, 1)) - truth) ** 2)))
        oracle = knn_rmse(x, y, grid, truth, k=5)
        assert rmse < 0.3
        assert rmse < 1.5 * oracle

    def test_deterministic_given_seed(self):
        rng = np.random.default_rng(3)
        X = rng.normal(size=(60, 4))
        y = rng.normal(size=60)
        spec = RegressorSpec(n_trees=8, seed=77)
        a = fit_regressor(spec, X, y).predict(X)
        b = fit_regressor(spec, X, y).predict(X)
        assert np.array_equal(a, b)
        c = fit_regressor(spec.with_seed(78), X, y).predict(X)
        assert not np.array_equal(a, c)

    def test_scale_equivariance_exact(self):
        # variance-reduction splits and leaf means scale with the target
        rng = np.random.default_rng(4)
        X = rng.normal(size=(80, 3))
        y = rng.normal(size=80)
        spec = RegressorSpec(n_trees=12, seed=5)
        base = fit_regressor(spec, X, y).predict(X)
        scaled = fit_regressor(spec, X, 10.0 * y).predict(X)
        assert scaled == pytest.approx(10.0 * base, rel=1e-9)

    def test_predictions_finite_for_extreme_inputs(self):
        rng = np.random.default_rng(5)
        X = rng.normal(size=(50, 2))
        y = rng.normal(size=50)
        model = fit_regressor(RegressorSpec(n_trees=5), X, y)
        assert np.isfinite(model.predict(np.array([[1e12, -1e12]]))).all()

    def test_rejects_mismatched_rows(self):
        with pytest.raises(ValueError, match="rows"):
            fit_regressor(RegressorSpec(), np.zeros((3, 1)), np.zeros(4))


class TestClassifier:
    def test_probabilities_sum_to_one(self):
        rng = np.random.default_rng(6)
        X = rng.normal(size=(120, 3))
        labels = rng.integers(0, 3, size=120)
        model = fit_classifier(RegressorSpec(n_trees=20), X, labels, n_classes=3)
        probs = model.predict_proba(X)
        assert probs.shape == (120, 3)
        assert probs.min() >= 0.0
        assert probs.sum(axis=1) == pytest.approx(np.ones(120), abs=1e-9)

    def test_missing_class_warns_and_zeroes(self):
        X = np.zeros((10, 1))
        labels = np.ones(10, dtype=int)
        with pytest.warns(UserWarning, match="never occur"):
            model = fit_classifier(RegressorSpec(n_trees=3), X, labels, n_classes=2)
        probs = model.predict_proba(np.zeros((2, 1)))
        assert probs[:, 1] == pytest.approx(np.ones(2))

    def test_logistic_recovers_simple_boundary(self):
        rng = np.random.default_rng(7)
        X = rng.normal(size=(800, 2))
        p = 1.0 / (1.0 + np.exp(-(2.0 * X[:, 0] - X[:, 1])))
        labels = (rng.random(800) < p).astype(int)
        model = fit_classifier(RegressorSpec(kind="linear"), X, labels, n_classes=2)
        probs = model.predict_proba(np.array([[2.0, 0.0], [-2.0, 0.0]]))
        assert probs[0, 1] > 0.9
        assert probs[1, 1] < 0.1

    def test_logistic_multiclass(self):
        rng = np.random.default_rng(8)
        X = rng.normal(size=(600, 2))
        labels = np.argmax(
            np.column_stack([X[:, 0], X[:, 1], -(X[:, 0] + X[:, 1])]), axis=1
        )
        model = fit_classifier(RegressorSpec(kind="linear"), X, labels, n_classes=3)
        probs = model.predict_proba(X)
        assert (np.argmax(probs, axis=1) == labels).mean() > 0.85


class TestSerialization:
    def test_forest_round_trip(self):
        rng = np.random.default_rng(9)
        X = rng.normal(size=(30, 2))
        y = rng.normal(size=30)
        model = fit_regressor(RegressorSpec(n_trees=4), X, y)
        clone = model_from_dict(model.to_dict())
        assert np.array_equal(model.predict(X), clone.predict(X))

    def test_linear_round_trip(self):
        X = np.array([[0.0], [1.0], [2.0]])
        model = fit_regressor(RegressorSpec(kind="linear"), X, np.array([0.0, 1.0, 2.0]))
        clone = model_from_dict(model.to_dict())
        assert np.array_equal(model.predict(X), clone.predict(X))

    def test_logistic_round_trip(self):
        rng = np.random.default_rng(10)
        X = rng.normal(size=(50, 2))
        labels = (X[:, 0] > 0).astype(int)
        model = fit_classifier(RegressorSpec(kind="linear"), X, labels, n_classes=2)
        clone = model_from_dict(model.to_dict())
        assert np.array_equal(model.predict_proba(X), clone.predict_proba(X))
