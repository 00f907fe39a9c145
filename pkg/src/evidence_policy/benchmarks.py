"""Competing policy learners and the method registry used by the experiment runner."""
import enum
from dataclasses import dataclass

import numpy as np

from ._random import make_rng
from .centering import fit_centering
from .model_based import fit_model_based_policy
from .policies import ConstantPolicy
from .ratio_opt import CellStatistics, bisection_solve
from .scoring import ipw_sign, pseudo_outcomes, resolve_propensity
from .tree_policy import TreeParams, fit_evidence_tree
from .trees import fit_forest, fit_tree


class BenchmarkKind(str, enum.Enum):
    ALL = "all"
    CLASSIFIER = "classifier"
    CLASSIFIER_RES = "classifier_res"
    CATE = "cate"
    CATE_CONST = "cate_const"
    EVIDENCE = "evidence"
    EVIDENCE_RES = "evidence_res"
    POLICY_SUBMOD = "policy_submod"
    SUBMOD = "submod"


# methods whose centering model is fit on a fold disjoint from the learning fold
HONEST_METHODS = frozenset(
    {
        BenchmarkKind.CLASSIFIER_RES,
        BenchmarkKind.EVIDENCE_RES,
        BenchmarkKind.POLICY_SUBMOD,
        BenchmarkKind.SUBMOD,
    }
)


@dataclass(frozen=True)
class ThresholdTreePolicy:
    """Treat where a fitted tree's prediction passes a cutoff.

    ``strict=True`` treats ``prediction > cutoff``, otherwise ``>=``.
    """

    tree: object
    cutoff: float = 0.0
    strict: bool = False

    @property
    def is_null(self):
        leaves = self.tree.value[self.tree.is_leaf]
        hit = leaves > self.cutoff if self.strict else leaves >= self.cutoff
        return not np.any(hit)

    def apply(self, covariates):
        pred = self.tree.predict(covariates)
        hit = pred > self.cutoff if self.strict else pred >= self.cutoff
        return hit.astype(float)


@dataclass(frozen=True)
class LeafSubsetPolicy:
    """Treats rows landing in a chosen subset of a tree's leaves."""

    tree: object
    treated_leaves: frozenset

    @property
    def is_null(self):
        return not self.treated_leaves

    def apply(self, covariates):
        leaf = self.tree.leaf_of(covariates)
        if not self.treated_leaves:
            return np.zeros(leaf.shape[0])
        return np.isin(leaf, np.fromiter(self.treated_leaves, dtype=np.int64)).astype(float)


def fit_all(data):
    return ConstantPolicy(1.0)


def classifier_targets(data, centering=None):
    """Signed pseudo-outcomes ``mu_i`` with empirical propensity.

    ``centering=None`` centres at the sample mean of ``y``.
    """
    p = resolve_propensity(data.treatment, "empirical")
    if centering is None:
        c = np.mean(data.outcome)
    else:
        c = centering.predict(data.covariates)
    return (data.outcome - c) * ipw_sign(data.treatment, p)


def fit_classifier(data, centering=None, params=None):
    """Weighted classification tree on labels ``sign(mu)`` with weights ``|mu|``.

    Leaves are treated when the positive weight exceeds the negative weight,
    i.e. when the leaf sum of ``mu`` is positive.
    """
    params = params or TreeParams()
    if data.n < 2:
        raise ValueError("classifier needs at least two rows")
    mu = classifier_targets(data, centering)
    labels = (mu > 0).astype(float)
    weights = np.abs(mu)
    if np.all(labels == 1):
        return ConstantPolicy(1.0)
    if np.all(labels[weights > 0] == 0):
        return ConstantPolicy(0.0)
    tree = fit_tree(
        data.covariates,
        labels,
        weights,
        max_depth=params.max_depth,
        min_leaf=params.min_leaf,
    )
    return ThresholdTreePolicy(tree, 0.5, strict=True)


@dataclass(frozen=True)
class ForestParams:
    n_trees: int = 100
    max_depth: int = 5
    min_leaf: int = 5
    max_features: object = "sqrt"


def _crossfit(X, target, folds, params, rng):
    out = np.empty(X.shape[0])
    k = int(folds.max()) + 1
    for f in range(k):
        test = folds == f
        train = ~test if k > 1 else test
        model = fit_forest(
            X[train],
            target[train],
            n_trees=params.n_trees,
            max_depth=params.max_depth,
            min_leaf=params.min_leaf,
            max_features=params.max_features,
            rng=rng,
        )
        out[test] = model.predict(X[test])
    return out


def r_learner_residuals(data, use_constant_propensity, seed, n_folds=2, forest=None):
    """Cross-fitted residuals ``(Y - m(X), W - e(X))``."""
    forest = forest or ForestParams()
    rng = make_rng(seed, "r_learner")
    X = data.covariates
    folds = rng.permutation(np.arange(data.n) % n_folds)
    y_res = data.outcome - _crossfit(X, data.outcome, folds, forest, rng)
    w = data.treatment.astype(float)
    if use_constant_propensity:
        w_res = w - w.mean()
    else:
        w_res = w - _crossfit(X, w, folds, forest, rng)
    return y_res, w_res


def fit_cate(data, use_constant_propensity=False, params=None, seed=0, n_folds=2, forest=None):
    """R-learner effect tree; treats where the estimated effect is non-negative.

    The final stage is a weighted least-squares tree on labels
    ``y_res / w_res`` with weights ``w_res**2``, which minimises
    ``sum (y_res - tau(x) w_res)**2`` over leaf-constant ``tau``.
    """
    params = params or TreeParams()
    if data.n < 4:
        raise ValueError("cate needs at least four rows")
    y_res, w_res = r_learner_residuals(data, use_constant_propensity, seed, n_folds, forest)
    wts = w_res**2
    if not np.any(wts > 0):
        raise ValueError("treatment residuals are all zero; design is degenerate")
    safe = np.where(wts > 0, w_res, 1.0)
    labels = np.where(wts > 0, y_res / safe, 0.0)
    tree = fit_tree(
        data.covariates, labels, wts, max_depth=params.max_depth, min_leaf=params.min_leaf
    )
    return ThresholdTreePolicy(tree, 0.0, strict=False)


def leaf_effect(y_res, w_res):
    """Leaf-constant minimiser of ``sum (y_res - tau w_res)**2``."""
    return float(np.dot(y_res, w_res) / np.dot(w_res, w_res))


def fit_evidence(data, centering=None, params=None):
    """Evidence tree on pseudo-outcomes with empirical propensity (``centering=None`` -> c = 0)."""
    table = pseudo_outcomes(data, centering, "empirical")
    return fit_evidence_tree(table, data.covariates, params)


def fit_policy_submod(data, centering, params=None, epsilon=1e-3):
    """Evidence tree leaves re-assigned by ratio optimisation."""
    table = pseudo_outcomes(data, centering, "empirical")
    tree = fit_evidence_tree(table, data.covariates, params)
    leaf = tree.leaf_of(data.covariates)
    stats = CellStatistics.from_pseudo(leaf, table.pseudo)
    sol = bisection_solve(stats, epsilon)
    return LeafSubsetPolicy(tree, frozenset(int(c) for c in sol.selected))


def fit_submod(data, centering, sparsity=2, epsilon=1e-3):
    return fit_model_based_policy(data, centering, sparsity, epsilon).policy


def fit_method(kind, learn, centering=None, *, params=None, seed=0, forest=None, sparsity=2, epsilon=1e-3):
    """Fit ``kind`` on ``learn``.

    ``centering`` is the honest centering model for methods that use one;
    it is ignored by the others.
    """
    kind = BenchmarkKind(kind)
    params = params or TreeParams(seed=seed)
    if kind is BenchmarkKind.ALL:
        return fit_all(learn)
    if kind is BenchmarkKind.CLASSIFIER:
        return fit_classifier(learn, None, params)
    if kind is BenchmarkKind.CLASSIFIER_RES:
        return fit_classifier(learn, _require(centering, kind), params)
    if kind is BenchmarkKind.CATE:
        return fit_cate(learn, False, params, seed, forest=forest)
    if kind is BenchmarkKind.CATE_CONST:
        return fit_cate(learn, True, params, seed, forest=forest)
    if kind is BenchmarkKind.EVIDENCE:
        return fit_evidence(learn, None, params)
    if kind is BenchmarkKind.EVIDENCE_RES:
        return fit_evidence(learn, _require(centering, kind), params)
    if kind is BenchmarkKind.POLICY_SUBMOD:
        return fit_policy_submod(learn, _require(centering, kind), params, epsilon)
    return fit_submod(learn, _require(centering, kind), sparsity, epsilon)


def _require(centering, kind):
    if centering is None:
        raise ValueError(f"method {kind.value} needs a centering model fit on a separate fold")
    return centering


def fit_honest_centering(fold, seed, forest=None, kind="regression_forest"):
    forest = forest or ForestParams()
    return fit_centering(
        fold,
        kind,
        None,
        max_depth=forest.max_depth,
        min_leaf=forest.min_leaf,
        n_trees=forest.n_trees,
        max_features=forest.max_features,
        seed=seed,
    )
