import numpy as np
import pytest

from evidence_policy._random import make_rng
from evidence_policy.trees import fit_forest, fit_tree, resolve_max_features, weighted_gini


class TestFitTree:
    def test_step_function(self):
        x = np.linspace(0, 1, 100)
        y = np.where(x < 0.42, -1.0, 3.0)
        t = fit_tree(x, y, max_depth=3, min_leaf=1)
        np.testing.assert_allclose(t.predict(x), y)

    def test_weighted_leaf_means(self):
        x = np.array([0.0, 0.0, 1.0, 1.0])
        y = np.array([1.0, 3.0, 10.0, 20.0])
        w = np.array([3.0, 1.0, 1.0, 4.0])
        t = fit_tree(x, y, w, min_leaf=1)
        np.testing.assert_allclose(t.predict(np.array([0.0, 1.0])), [1.5, 18.0])

    def test_no_split_without_gain(self):
        t = fit_tree(np.arange(10.0), np.ones(10), min_leaf=1)
        assert t.node_count == 1 and t.predict(np.array([3.0]))[0] == 1.0

    def test_tie_lowest_feature(self):
        x = np.repeat([[0.0], [1.0]], 5, axis=0)
        X = np.hstack([x, x])
        t = fit_tree(X, x[:, 0], min_leaf=1)
        assert t.feature[0] == 0

    def test_min_leaf(self):
        x = np.arange(10.0)
        y = (x == 9).astype(float)
        t = fit_tree(x, y, min_leaf=3)
        leaves = t.apply(x[:, None])
        assert min(np.bincount(leaves)[np.unique(leaves)]) >= 3

    def test_threshold_routing(self):
        t = fit_tree(np.array([0.0, 1.0]), np.array([0.0, 1.0]), min_leaf=1)
        assert t.threshold[0] == 1.0 and t.predict(np.array([1.0]))[0] == 1.0

    def test_depth_limit(self):
        x = np.linspace(0, 1, 64)
        t = fit_tree(x, np.sin(20 * x), max_depth=2, min_leaf=1)
        assert t.depth() <= 2

    def test_negative_weights(self):
        with pytest.raises(ValueError):
            fit_tree(np.zeros(3), np.zeros(3), -np.ones(3))

    def test_width_check(self):
        t = fit_tree(np.zeros((4, 2)), np.zeros(4))
        with pytest.raises(ValueError):
            t.predict(np.zeros((1, 3)))


class TestForest:
    def test_deterministic(self):
        rng = np.random.default_rng(0)
        X, y = rng.uniform(size=(200, 3)), rng.normal(size=200)
        a = fit_forest(X, y, n_trees=5, rng=make_rng(1)).predict(X)
        b = fit_forest(X, y, n_trees=5, rng=make_rng(1)).predict(X)
        assert np.array_equal(a, b)

    def test_mean_of_trees(self):
        rng = np.random.default_rng(0)
        X, y = rng.uniform(size=(100, 2)), rng.normal(size=100)
        f = fit_forest(X, y, n_trees=4, rng=make_rng(2))
        np.testing.assert_allclose(f.predict(X), np.mean([t.predict(X) for t in f.trees], axis=0))

    def test_max_features(self):
        assert resolve_max_features("sqrt", 44) == 6
        assert resolve_max_features(None, 5) == 5
        assert resolve_max_features(0.5, 10) == 5
        assert resolve_max_features(20, 3) == 3


class TestGini:
    def test_hand_instance(self):
        # positive weight 3 + 1 = 4, negative weight 2 + 2 = 4: 1 - (0.5^2 + 0.5^2)
        assert weighted_gini([1, 1, 0, 0], [3.0, 1.0, 2.0, 2.0]) == pytest.approx(0.5)
        # shares 6/8 and 2/8
        assert weighted_gini([1, 1, 0, 1], [3.0, 1.0, 2.0, 2.0]) == pytest.approx(1 - (0.75**2 + 0.25**2))

    def test_pure(self):
        assert weighted_gini([1, 1], [1.0, 5.0]) == 0.0
