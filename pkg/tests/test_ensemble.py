import numpy as np
import pytest

from suncast.cart import CartParams, fit_tree
from suncast.ensemble import (
    BoostParams,
    EnsembleModel,
    ForestParams,
    fit_boosted,
    fit_forest,
    fit_linear,
    predict,
)
from suncast.errors import ValidationError


def additive_data(seed, n=200, p=4, noise=0.1):
    rng = np.random.default_rng(seed)
    X = rng.uniform(-2, 2, size=(n, p))
    y = np.sin(X[:, 0]) + 0.5 * X[:, 1] ** 2 + X[:, 2] + rng.normal(0, noise, n)
    return X, y


class TestForest:
    def test_degenerate_bagging_equals_single_tree(self):
        X, y = additive_data(0, n=80)
        # no bootstrap + all features per split: every tree is the same CART
        params = ForestParams(n_trees=7, mtry=4, min_n=5, seed=1, bootstrap=False)
        forest = fit_forest(X, y, params)
        single = fit_tree(X, y, CartParams(alpha=0.0, max_depth=10**6, min_n=5))
        np.testing.assert_allclose(forest.predict(X), single.predict(X), atol=1e-12)

    def test_constant_target(self):
        X, _ = additive_data(1, n=50)
        y = np.full(50, 2.5)
        forest = fit_forest(X, y, ForestParams(n_trees=10, mtry=2, seed=3))
        np.testing.assert_allclose(forest.predict(X), 2.5)

    def test_forest_beats_single_tree_on_holdout(self):
        X, y = additive_data(2, n=400)
        X_tr, y_tr = X[:200], y[:200]
        X_te, y_te = X[200:], y[200:]
        forest = fit_forest(X_tr, y_tr, ForestParams(n_trees=60, mtry=2, min_n=5, seed=4))
        tree = fit_tree(X_tr, y_tr, CartParams(alpha=0.0, max_depth=10**6, min_n=5))
        mse_f = np.mean((forest.predict(X_te) - y_te) ** 2)
        mse_t = np.mean((tree.predict(X_te) - y_te) ** 2)
        assert mse_f < mse_t

    def test_prediction_bounded_by_trees(self):
        X, y = additive_data(3, n=120)
        forest = fit_forest(X, y, ForestParams(n_trees=15, mtry=2, min_n=10, seed=5))
        per_tree = np.stack([t.predict(X) for t in forest.trees])
        pred = forest.predict(X)
        assert (pred >= per_tree.min(axis=0) - 1e-12).all()
        assert (pred <= per_tree.max(axis=0) + 1e-12).all()

    def test_determinism(self):
        X, y = additive_data(4, n=100)
        p = ForestParams(n_trees=12, mtry=3, min_n=5, seed=11)
        a = fit_forest(X, y, p).predict(X)
        b = fit_forest(X, y, p).predict(X)
        np.testing.assert_array_equal(a, b)

    def test_mtry_validation(self):
        X, y = additive_data(5, n=30)
        with pytest.raises(ValidationError):
            fit_forest(X, y, ForestParams(n_trees=2, mtry=9))


class TestBoosted:
    def test_single_tree_reduces_to_cart(self):
        X, y = additive_data(6, n=80)
        boost = fit_boosted(
            X,
            y,
            BoostParams(
                n_trees=1, eta=1.0, gamma=0.0, max_depth=10**6, min_n=4,
                mtry=None, subsample=1.0, lam=0.0, seed=0,
            ),
        )
        cart = fit_tree(X, y - y.mean(), CartParams(alpha=0.0, max_depth=10**6, min_n=4))
        np.testing.assert_allclose(
            boost.predict(X), y.mean() + cart.predict(X), atol=1e-10
        )

    def test_infinite_gamma_gives_mean(self):
        X, y = additive_data(7, n=60)
        boost = fit_boosted(
            X, y, BoostParams(n_trees=10, eta=0.5, gamma=1e12, subsample=1.0, seed=1)
        )
        assert all(t.n_nodes == 1 for t in boost.trees)
        np.testing.assert_allclose(boost.predict(X), y.mean(), atol=1e-9)

    def test_training_loss_non_increasing_full_sample(self):
        X, y = additive_data(8, n=150)
        params = BoostParams(n_trees=40, eta=0.3, max_depth=3, min_n=4, subsample=1.0, seed=2)
        boost = fit_boosted(X, y, params)
        pred = np.full(len(y), boost.base_score)
        losses = [float(np.sum((y - pred) ** 2))]
        for wk, tree in zip(boost.tree_weights, boost.trees):
            pred = pred + wk * tree.predict(X)
            losses.append(float(np.sum((y - pred) ** 2)))
        assert all(b <= a + 1e-9 for a, b in zip(losses, losses[1:]))

    def test_empty_ensemble_predicts_base(self):
        model = EnsembleModel(
            kind="boosted", n_features=3, trees=[], tree_weights=np.empty(0), base_score=1.5
        )
        np.testing.assert_allclose(model.predict(np.zeros((4, 3))), 1.5)

    def test_determinism(self):
        X, y = additive_data(9, n=100)
        p = BoostParams(n_trees=15, eta=0.2, max_depth=4, min_n=3, mtry=2, subsample=0.7, seed=7)
        a = fit_boosted(X, y, p).predict(X)
        b = fit_boosted(X, y, p).predict(X)
        np.testing.assert_array_equal(a, b)

    def test_hand_summed_serialized_trees(self):
        X, y = additive_data(10, n=60)
        boost = fit_boosted(X, y, BoostParams(n_trees=8, eta=0.25, max_depth=3, seed=3))
        d = boost.to_dict()
        back = EnsembleModel.from_dict(d)
        rows = X[:5]
        manual = np.full(5, d["base_score"])
        for wk, tree in zip(back.tree_weights, back.trees):
            manual += wk * tree.predict(rows)
        np.testing.assert_allclose(boost.predict(rows), manual, atol=1e-12)

    def test_param_validation(self):
        with pytest.raises(ValidationError):
            BoostParams(eta=0.0)
        with pytest.raises(ValidationError):
            BoostParams(subsample=1.2)
        with pytest.raises(ValidationError):
            BoostParams(gamma=-0.1)


class TestLinear:
    def test_exact_recovery(self):
        rng = np.random.default_rng(11)
        X = rng.normal(size=(100, 3))
        y = 2.0 + X @ np.array([1.0, -2.0, 0.5])
        model = fit_linear(X, y)
        np.testing.assert_allclose(model.predict(X), y, atol=1e-8)

    def test_duplicate_column_pseudo_inverse(self):
        rng = np.random.default_rng(12)
        X = rng.normal(size=(60, 2))
        y = X[:, 0] - X[:, 1] + rng.normal(0, 0.01, 60)
        X_dup = np.column_stack([X, X[:, 0]])
        with pytest.warns(UserWarning, match="rank"):
            dup = fit_linear(X_dup, y)
        plain = fit_linear(X, y)
        np.testing.assert_allclose(
            dup.predict(X_dup), plain.predict(X), atol=1e-8
        )

    def test_intercept_only(self):
        rng = np.random.default_rng(13)
        y = rng.normal(size=40)
        X = np.zeros((40, 1))
        with pytest.warns(UserWarning):
            model = fit_linear(X, y)
        np.testing.assert_allclose(model.predict(X), y.mean(), atol=1e-10)

    def test_row_permutation_invariance(self):
        rng = np.random.default_rng(14)
        X = rng.normal(size=(80, 3))
        y = X @ np.array([1.0, 2.0, 3.0]) + rng.normal(0, 0.1, 80)
        perm = rng.permutation(80)
        a = fit_linear(X, y)
        b = fit_linear(X[perm], y[perm])
        np.testing.assert_allclose(a.predict(X), b.predict(X), atol=1e-9)

    def test_serialization_round_trip(self):
        rng = np.random.default_rng(15)
        X = rng.normal(size=(30, 2))
        y = X[:, 0] * 2
        model = fit_linear(X, y)
        back = EnsembleModel.from_dict(model.to_dict())
        np.testing.assert_allclose(back.predict(X), model.predict(X))


class TestPredictDispatch:
    def test_forest_of_identical_trees_equals_one(self):
        X, y = additive_data(16, n=50)
        forest = fit_forest(X, y, ForestParams(n_trees=5, mtry=4, min_n=5, bootstrap=False))
        np.testing.assert_allclose(
            predict(forest, X), forest.trees[0].predict(X), atol=1e-12
        )

    def test_schema_mismatch(self):
        X, y = additive_data(17, n=30)
        model = fit_linear(X, y)
        with pytest.raises(ValidationError):
            predict(model, np.zeros((2, 9)))
