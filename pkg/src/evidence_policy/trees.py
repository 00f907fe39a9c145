"""Weighted CART trees and bagged forests.

These are plain greedy least-squares trees used as nuisance models (the
centering regression, the R-learner stages) and as the weighted classifier
benchmark.  For 0/1 labels the weighted Gini decrease equals the weighted
variance decrease, so one split kernel serves both.

Routing convention everywhere in the package: ``x[f] < threshold`` goes
left, otherwise right.  Split ties go to the lowest feature index, then the
lowest threshold.
"""
from dataclasses import dataclass

import numpy as np

from . import kernels


@dataclass(frozen=True)
class ArrayTree:
    """Binary tree stored as parallel arrays; ``left[i] == -1`` marks a leaf."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    n_features: int

    @property
    def node_count(self):
        return self.feature.shape[0]

    @property
    def is_leaf(self):
        return self.left < 0

    def apply(self, X):
        """Leaf node id for each row."""
        X = _check_width(X, self.n_features)
        return kernels.route(X, self.feature, self.threshold, self.left, self.right)

    def predict(self, X):
        return self.value[self.apply(X)]

    def depth(self):
        d = np.zeros(self.node_count, dtype=int)
        for i in range(self.node_count):
            if self.left[i] >= 0:
                d[self.left[i]] = d[self.right[i]] = d[i] + 1
        return int(d.max())


def _check_width(X, p):
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.shape[1] != p:
        raise ValueError(f"expected {p} covariate columns, got {X.shape[1]}")
    return np.ascontiguousarray(X)


def weighted_gini(labels, weights):
    """Weighted Gini impurity ``1 - sum_k share_k**2`` of a label vector."""
    labels = np.asarray(labels)
    weights = np.asarray(weights, dtype=float)
    total = weights.sum()
    if total <= 0:
        return 0.0
    shares = np.array([weights[labels == k].sum() for k in np.unique(labels)]) / total
    return float(1.0 - np.sum(shares**2))


def fit_tree(X, y, sample_weight=None, *, max_depth=5, min_leaf=5, max_features=None, rng=None):
    """Grow a weighted least-squares regression tree.

    Leaves predict the weighted mean of ``y``.  A node is split only when the
    best split strictly reduces the weighted squared error.  ``max_features``
    (an int) draws that many candidate features per node without
    replacement, which requires ``rng``.
    """
    X = np.ascontiguousarray(np.asarray(X, dtype=float))
    if X.ndim == 1:
        X = X[:, None]
    y = np.asarray(y, dtype=float)
    n, p = X.shape
    w = np.ones(n) if sample_weight is None else np.asarray(sample_weight, dtype=float)
    if np.any(w < 0):
        raise ValueError("sample weights must be non-negative")
    min_leaf = max(int(min_leaf), 1)
    if max_features is not None and max_features < p and rng is None:
        raise ValueError("feature subsampling needs an rng")

    feature, threshold, left, right, value = [], [], [], [], []

    def new_node(rows):
        ws = w[rows].sum()
        value.append(float(np.dot(w[rows], y[rows]) / ws) if ws > 0 else float(np.mean(y[rows])))
        feature.append(-1)
        threshold.append(np.nan)
        left.append(-1)
        right.append(-1)
        return len(value) - 1

    root = new_node(np.arange(n))
    stack = [(root, np.arange(n), 0)]
    while stack:
        node, rows, depth = stack.pop()
        m = rows.shape[0]
        if depth >= max_depth or m < 2 * min_leaf:
            continue
        wr = w[rows]
        wsum = wr.sum()
        if wsum <= 0:
            continue
        wy = wr * y[rows]
        parent = wy.sum() ** 2 / wsum
        feats = np.arange(p)
        if max_features is not None and max_features < p:
            feats = np.sort(rng.choice(p, size=max_features, replace=False))
        best = (parent + 1e-12 * max(abs(parent), 1.0), -1, -1, None)
        for j in feats:
            order = np.argsort(X[rows, j], kind="stable")
            xs = X[rows[order], j]
            pos, score = kernels.best_weighted_split(xs, wy[order], wr[order], min_leaf)
            if pos >= 0 and score > best[0]:
                best = (score, j, pos, order)
        _, j, pos, order = best
        if j < 0:
            continue
        xs = X[rows[order], j]
        feature[node] = int(j)
        threshold[node] = float(xs[pos])
        lrows, rrows = rows[order[:pos]], rows[order[pos:]]
        lid = new_node(lrows)
        rid = new_node(rrows)
        left[node], right[node] = lid, rid
        # pop order: left subtree first
        stack.append((rid, rrows, depth + 1))
        stack.append((lid, lrows, depth + 1))

    return ArrayTree(
        np.asarray(feature, dtype=np.int64),
        np.asarray(threshold, dtype=float),
        np.asarray(left, dtype=np.int64),
        np.asarray(right, dtype=np.int64),
        np.asarray(value, dtype=float),
        p,
    )


def resolve_max_features(max_features, p):
    if max_features is None:
        return p
    if max_features == "sqrt":
        return max(1, int(np.sqrt(p)))
    if isinstance(max_features, float):
        return max(1, int(max_features * p))
    return min(int(max_features), p)


@dataclass(frozen=True)
class Forest:
    trees: tuple
    n_features: int

    def predict(self, X):
        X = _check_width(X, self.n_features)
        return np.mean([t.predict(X) for t in self.trees], axis=0)


def fit_forest(
    X,
    y,
    sample_weight=None,
    *,
    n_trees=100,
    max_depth=5,
    min_leaf=5,
    max_features="sqrt",
    bootstrap=True,
    rng,
):
    """Bagged regression trees with per-node feature subsampling."""
    X = np.ascontiguousarray(np.asarray(X, dtype=float))
    if X.ndim == 1:
        X = X[:, None]
    n, p = X.shape
    y = np.asarray(y, dtype=float)
    w = np.ones(n) if sample_weight is None else np.asarray(sample_weight, dtype=float)
    mf = resolve_max_features(max_features, p)
    trees = []
    for _ in range(n_trees):
        rows = rng.integers(0, n, size=n) if bootstrap else np.arange(n)
        trees.append(
            fit_tree(
                X[rows],
                y[rows],
                w[rows],
                max_depth=max_depth,
                min_leaf=min_leaf,
                max_features=mf,
                rng=rng,
            )
        )
    return Forest(tuple(trees), p)
