"""Model-based policy learning on a sparse cell partition.

Two level-split regression trees of depth ``r`` are grown on binarised
covariates, one on the pseudo-outcomes and one on their squares.  Every
level uses a single feature for all of its nodes, chosen by the largest
increase of ``sum_leaves n_l * mean_l**2`` (the empirical ``E[E[g|X_S]^2]``
gain).  Cells are the intersections of the two trees' leaves, and the set
of treated cells maximises ``w(S) / sqrt(v(S))`` via :mod:`ratio_opt`.
"""
import json
from dataclasses import dataclass

import numpy as np

from .ratio_opt import ENUMERATION_LIMIT, CellStatistics, bisection_solve
from .scoring import pseudo_outcomes

FORMAT_VERSION = 1


def binarization_thresholds(covariates):
    """Per-feature cut points: 0.5 for columns already in {0, 1}, else the median."""
    X = np.asarray(covariates, dtype=float)
    out = np.empty(X.shape[1])
    for j in range(X.shape[1]):
        col = X[:, j]
        out[j] = 0.5 if np.all((col == 0) | (col == 1)) else float(np.median(col))
    return out


def binarize(covariates, thresholds):
    X = np.asarray(covariates, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.shape[1] != thresholds.shape[0]:
        raise ValueError(f"expected {thresholds.shape[0]} features, got {X.shape[1]}")
    return (X > thresholds).astype(np.int8)


@dataclass(frozen=True, eq=False)
class LevelSplitTree:
    """``features[d]`` splits every node at depth ``d``; leaf code bit ``d`` is that feature."""

    features: tuple
    leaf_values: np.ndarray
    stopped_early: bool = False

    @property
    def depth(self):
        return len(self.features)

    def leaf_code(self, B):
        code = np.zeros(B.shape[0], dtype=np.int64)
        for d, j in enumerate(self.features):
            code |= B[:, j].astype(np.int64) << d
        return code

    def predict(self, B):
        return self.leaf_values[self.leaf_code(B)]


def _level_gain(labels, code, col, n_codes):
    """Increase of sum_l n_l mean_l**2 when every leaf is split on ``col``."""
    child = code * 2 + col
    cnt = np.bincount(child, minlength=2 * n_codes)
    tot = np.bincount(child, weights=labels, minlength=2 * n_codes)
    pc = cnt[0::2] + cnt[1::2]
    pt = tot[0::2] + tot[1::2]
    with np.errstate(divide="ignore", invalid="ignore"):
        after = np.where(cnt > 0, tot * tot / np.where(cnt > 0, cnt, 1), 0.0).sum()
        before = np.where(pc > 0, pt * pt / np.where(pc > 0, pc, 1), 0.0).sum()
    return after - before


def fit_level_split_tree(labels, binary_covariates, depth):
    """Greedy level-split tree with the variance-reduction (Breiman) criterion.

    Ties go to the lowest feature index.  Asking for more levels than
    features stops early and sets ``stopped_early``.
    """
    y = np.asarray(labels, dtype=float)
    B = np.asarray(binary_covariates)
    if B.ndim == 1:
        B = B[:, None]
    if depth < 0:
        raise ValueError("depth must be non-negative")
    if not np.all(np.isfinite(y)):
        raise ValueError("labels must be finite")
    n, p = B.shape
    used = []
    code = np.zeros(n, dtype=np.int64)
    # leaf means per level; empty leaves inherit the parent's mean
    values = np.array([y.mean() if n else 0.0])
    scale = float(np.dot(y, y)) + 1.0
    for d in range(min(depth, p)):
        n_codes = 1 << d
        best_j, best_gain = -1, -np.inf
        for j in range(p):
            if j in used:
                continue
            g = _level_gain(y, code, B[:, j].astype(np.int64), n_codes)
            if g > best_gain + 1e-12 * scale:
                best_j, best_gain = j, g
        used.append(best_j)
        code = code | (B[:, best_j].astype(np.int64) << d)
        cnt = np.bincount(code, minlength=2 * n_codes)
        tot = np.bincount(code, weights=y, minlength=2 * n_codes)
        parent = np.concatenate([values, values])
        values = np.where(cnt > 0, tot / np.where(cnt > 0, cnt, 1), parent)
    return LevelSplitTree(tuple(used), values, stopped_early=depth > p)


@dataclass(frozen=True, eq=False)
class ModelBasedPolicy:
    """Treats the rows whose (effect-leaf, second-moment-leaf) cell was selected.

    Cells never seen in training are not treated.
    """

    thresholds: np.ndarray
    effect_tree: LevelSplitTree
    moment_tree: LevelSplitTree
    selected_cells: frozenset
    cell_ids: tuple = ()

    @property
    def is_null(self):
        return not self.selected_cells

    def cells(self, covariates):
        B = binarize(covariates, self.thresholds)
        shift = self.moment_tree.depth
        return (self.effect_tree.leaf_code(B) << shift) | self.moment_tree.leaf_code(B)

    def apply(self, covariates):
        cells = self.cells(covariates)
        if not self.selected_cells:
            return np.zeros(cells.shape[0])
        return np.isin(cells, np.fromiter(self.selected_cells, dtype=np.int64)).astype(float)

    def to_dict(self):
        return {
            "format_version": FORMAT_VERSION,
            "thresholds": [float(t) for t in self.thresholds],
            "effect_tree": {
                "level_features": list(map(int, self.effect_tree.features)),
                "leaf_values": self.effect_tree.leaf_values.tolist(),
            },
            "moment_tree": {
                "level_features": list(map(int, self.moment_tree.features)),
                "leaf_values": self.moment_tree.leaf_values.tolist(),
            },
            "cell_ids": list(map(int, self.cell_ids)),
            "selected_cells": sorted(int(c) for c in self.selected_cells),
        }

    def to_json(self, **kwargs):
        return json.dumps(self.to_dict(), **kwargs)

    @classmethod
    def from_dict(cls, d):
        def tree(t):
            return LevelSplitTree(tuple(t["level_features"]), np.asarray(t["leaf_values"], float))

        return cls(
            np.asarray(d["thresholds"], dtype=float),
            tree(d["effect_tree"]),
            tree(d["moment_tree"]),
            frozenset(d["selected_cells"]),
            tuple(d.get("cell_ids", ())),
        )

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True)
class ModelBasedFit:
    policy: ModelBasedPolicy
    solution: object
    statistics: CellStatistics

    @property
    def null_policy(self):
        return self.policy.is_null


def fit_model_based_policy(
    data,
    centering,
    sparsity=2,
    epsilon=1e-3,
    propensity="empirical",
    enumeration_limit=ENUMERATION_LIMIT,
):
    """Learn a cell-indicator policy; ``centering`` must come from a disjoint fold."""
    table = pseudo_outcomes(data, centering, propensity)
    thresholds = binarization_thresholds(data.covariates)
    B = binarize(data.covariates, thresholds)
    effect = fit_level_split_tree(table.pseudo, B, sparsity)
    moment = fit_level_split_tree(table.pseudo_sq, B, sparsity)
    proto = ModelBasedPolicy(thresholds, effect, moment, frozenset())
    cells = proto.cells(data.covariates)
    stats = CellStatistics.from_pseudo(cells, table.pseudo)
    sol = bisection_solve(stats, epsilon, enumeration_limit)
    policy = ModelBasedPolicy(thresholds, effect, moment, frozenset(sol.selected), stats.cell_ids)
    return ModelBasedFit(policy, sol, stats)
