"""Greedy policy trees.

:func:`fit_evidence_tree` grows a binary tree whose leaves carry a 0/1
assignment, accepting a split only when the *global* t-statistic of the
whole training assignment improves by at least ``min_score_increase``.
Nodes are processed breadth-first; inside a node every feature (ascending)
and every sampled threshold is tried with the left child treated and then
the right child treated.  The running best is updated immediately, so a
later candidate has to beat the earlier accepted ones.

:func:`fit_relaxed_tree` instead maximises ``sum_l t_l**2`` over leaves,
where ``t_l`` is the leaf mean of the pseudo-outcomes over its standard
error, and assigns leaf weights proportional to ``mean / se**2``.
"""
import json
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from ._random import make_rng
from .scoring import DegenerateStatisticError, t_statistic

FORMAT_VERSION = 1


@dataclass(frozen=True)
class TreeParams:
    min_score_increase: float = 1e-6
    max_depth: int = 4
    min_leaf: int = 20
    mtry: int = 10
    seed: int = 0
    variance_floor: float = 1e-12


@dataclass(frozen=True, eq=False)
class PolicyTree:
    """Array-encoded tree; internal node ``i`` sends ``x[feature[i]] < threshold[i]`` left.

    ``assignment`` holds each leaf's weight (0/1 for evidence trees, [0, 1]
    for relaxed trees); internal nodes keep the value they had as leaves.
    """

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    assignment: np.ndarray
    n_features: int
    final_t_statistic: float = float("nan")
    accepted_scores: tuple = ()
    degenerate_root: bool = False
    kind: str = "evidence"
    leaf_stats: dict = field(default_factory=dict)
    criterion: float = float("nan")

    @property
    def node_count(self):
        return self.feature.shape[0]

    @property
    def leaves(self):
        return np.flatnonzero(self.left < 0)

    @property
    def depth(self):
        d = np.zeros(self.node_count, dtype=int)
        for i in range(self.node_count):
            if self.left[i] >= 0:
                d[self.left[i]] = d[self.right[i]] = d[i] + 1
        return int(d.max())

    @property
    def is_null(self):
        return not np.any(self.assignment[self.leaves] > 0)

    def leaf_of(self, covariates):
        X = np.asarray(covariates, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        if X.shape[1] != self.n_features:
            raise ValueError(f"policy tree expects {self.n_features} features, got {X.shape[1]}")
        return kernels.route(
            np.ascontiguousarray(X), self.feature, self.threshold, self.left, self.right
        )

    def apply(self, covariates):
        return self.assignment[self.leaf_of(covariates)].astype(float)

    def to_dict(self):
        nodes = []
        for i in range(self.node_count):
            leaf = bool(self.left[i] < 0)
            nodes.append(
                {
                    "id": i,
                    "feature_index": None if leaf else int(self.feature[i]),
                    "threshold": None if leaf else float(self.threshold[i]),
                    "left_child": None if leaf else int(self.left[i]),
                    "right_child": None if leaf else int(self.right[i]),
                    "assignment": float(self.assignment[i]),
                }
            )
        return {
            "format_version": FORMAT_VERSION,
            "kind": self.kind,
            "n_features": self.n_features,
            "root": 0,
            "depth": self.depth,
            "final_t_statistic": _json_float(self.final_t_statistic),
            "nodes": nodes,
        }

    def to_json(self, **kwargs):
        return json.dumps(self.to_dict(), **kwargs)

    @classmethod
    def from_dict(cls, d):
        nodes = sorted(d["nodes"], key=lambda r: r["id"])
        m = len(nodes)
        feature = np.full(m, -1, dtype=np.int64)
        threshold = np.full(m, np.nan)
        left = np.full(m, -1, dtype=np.int64)
        right = np.full(m, -1, dtype=np.int64)
        assign = np.zeros(m)
        for r in nodes:
            i = r["id"]
            assign[i] = r["assignment"]
            if r["left_child"] is not None:
                feature[i] = r["feature_index"]
                threshold[i] = r["threshold"]
                left[i] = r["left_child"]
                right[i] = r["right_child"]
        fts = d.get("final_t_statistic")
        return cls(
            feature,
            threshold,
            left,
            right,
            assign,
            int(d["n_features"]),
            float("nan") if fts is None else float(fts),
            kind=d.get("kind", "evidence"),
        )

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


def _json_float(x):
    return None if x is None or not np.isfinite(x) else float(x)


class _Builder:
    def __init__(self):
        self.feature, self.threshold, self.left, self.right, self.assign = [], [], [], [], []

    def add(self, assignment):
        self.feature.append(-1)
        self.threshold.append(np.nan)
        self.left.append(-1)
        self.right.append(-1)
        self.assign.append(assignment)
        return len(self.assign) - 1

    def arrays(self):
        return (
            np.asarray(self.feature, dtype=np.int64),
            np.asarray(self.threshold, dtype=float),
            np.asarray(self.left, dtype=np.int64),
            np.asarray(self.right, dtype=np.int64),
            np.asarray(self.assign, dtype=float),
        )


def _sample_thresholds(values, mtry, rng):
    uniq = np.unique(values)
    if mtry is None or mtry >= uniq.shape[0]:
        return rng.permutation(uniq) if mtry is not None else uniq
    return rng.choice(uniq, size=mtry, replace=False)


def _root_statistic(pseudo):
    """Root t-statistic with every row treated; +-inf when the spread is zero."""
    try:
        return t_statistic(pseudo, np.ones(len(pseudo))).t_statistic, False
    except DegenerateStatisticError:
        mean = float(np.mean(pseudo.pseudo))
        return (np.inf if mean > 0 else (-np.inf if mean < 0 else 0.0)), True


def fit_evidence_tree(pseudo, covariates, params=None):
    """Greedy tree maximising the training t-statistic of a 0/1 assignment."""
    params = params or TreeParams()
    X = np.asarray(covariates, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    y = np.asarray(pseudo.pseudo, dtype=float)
    y2 = np.asarray(pseudo.pseudo_sq, dtype=float)
    n, p = X.shape
    if y.shape[0] != n:
        raise ValueError("pseudo-outcomes and covariates differ in length")
    rng = make_rng(params.seed, "evidence_tree")

    z0, degenerate = _root_statistic(pseudo)
    root_assign = 1.0 if z0 >= 0 else 0.0
    a = np.full(n, root_assign)
    z_star = z0 if z0 >= 0 else 0.0
    b = _Builder()
    b.add(root_assign)
    history = []

    if n >= 2 * params.min_leaf:
        queue = deque([(0, np.arange(n), 0)])
        while queue:
            node, rows, depth = queue.popleft()
            if depth >= params.max_depth:
                continue
            in_node = a[rows]
            s1_out = float(np.dot(a, y) - np.dot(in_node, y[rows]))
            s2_out = float(np.dot(a, y2) - np.dot(in_node, y2[rows]))
            split = None
            for j in range(p):
                xj = X[rows, j]
                order = np.argsort(xj, kind="stable")
                xs = np.ascontiguousarray(xj[order])
                c1 = np.concatenate([[0.0], np.cumsum(y[rows][order])])
                c2 = np.concatenate([[0.0], np.cumsum(y2[rows][order])])
                thr = _sample_thresholds(xj, params.mtry, rng).astype(float)
                z_star, k, c, acc = kernels.scan_thresholds(
                    xs, c1, c2, thr, s1_out, s2_out, n, params.min_leaf, z_star,
                    params.min_score_increase,
                )
                if k >= 0:
                    split = (j, float(thr[k]), int(c))
                    history.extend(float(z) for z in acc)
            if split is None:
                continue
            j, theta, c = split
            go_left = X[rows, j] < theta
            lrows, rrows = rows[go_left], rows[~go_left]
            lw, rw = (1.0, 0.0) if c == 0 else (0.0, 1.0)
            a[lrows] = lw
            a[rrows] = rw
            lid = b.add(lw)
            rid = b.add(rw)
            b.feature[node], b.threshold[node] = j, theta
            b.left[node], b.right[node] = lid, rid
            queue.append((lid, lrows, depth + 1))
            queue.append((rid, rrows, depth + 1))

    feature, threshold, left, right, assign = b.arrays()
    try:
        final = t_statistic(pseudo, a).t_statistic
    except DegenerateStatisticError:
        final = z0 if not np.any(a != root_assign) else float("nan")
    return PolicyTree(
        feature,
        threshold,
        left,
        right,
        assign,
        p,
        float(final),
        tuple(history),
        degenerate,
        "evidence",
    )


def leaf_t2(values, floor):
    """Squared leaf t-statistic ``mean**2 / (var / m)`` and whether the floor applied."""
    m = values.shape[0]
    s1, s2 = float(values.sum()), float(np.dot(values, values))
    t2, floored = kernels._leaf_t2(s1, s2, m, floor)
    return t2, floored


def relaxed_criterion(tree, pseudo, covariates, floor=1e-12):
    """``sum_l t_l**2`` of the partition induced by ``tree``, recomputed from scratch."""
    leaf = tree.leaf_of(covariates)
    y = np.asarray(pseudo.pseudo, dtype=float)
    return float(sum(leaf_t2(y[leaf == l], floor)[0] for l in np.unique(leaf)))


def fit_relaxed_tree(pseudo, covariates, params=None):
    """Greedy tree maximising ``sum_l t_l**2``; leaf weights ``max(mean, 0) / se**2`` scaled to max 1.

    ``params.mtry=None`` scans every threshold.
    """
    params = params or TreeParams()
    X = np.asarray(covariates, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    y = np.asarray(pseudo.pseudo, dtype=float)
    y2 = y * y
    n, p = X.shape
    if y.shape[0] != n:
        raise ValueError("pseudo-outcomes and covariates differ in length")
    rng = make_rng(params.seed, "relaxed_tree")
    floor = params.variance_floor
    b = _Builder()
    b.add(0.0)
    if n >= 2 * params.min_leaf:
        queue = deque([(0, np.arange(n), 0)])
        while queue:
            node, rows, depth = queue.popleft()
            if depth >= params.max_depth:
                continue
            parent, _ = leaf_t2(y[rows], floor)
            need = parent + params.min_score_increase
            best_score, best_split = -np.inf, None
            m = rows.shape[0]
            for j in range(p):
                xj = X[rows, j]
                order = np.argsort(xj, kind="stable")
                xs = xj[order]
                c1 = np.concatenate([[0.0], np.cumsum(y[rows][order])])
                c2 = np.concatenate([[0.0], np.cumsum(y2[rows][order])])
                thr = _sample_thresholds(xj, params.mtry, rng).astype(float)
                if params.mtry is not None:
                    thr = np.sort(thr)
                pos = np.searchsorted(xs, thr)
                ok = (pos > params.min_leaf) & (m - pos > params.min_leaf)
                pos, thr = pos[ok], thr[ok]
                if pos.size == 0:
                    continue
                scores = kernels.t2_split_scores(c1, c2, pos.astype(np.int64), m, floor)
                k = int(np.argmax(scores))
                if scores[k] >= need and scores[k] > best_score:
                    best_score, best_split = float(scores[k]), (j, float(thr[k]))
            if best_split is None:
                continue
            j, theta = best_split
            go_left = X[rows, j] < theta
            lrows, rrows = rows[go_left], rows[~go_left]
            lid = b.add(0.0)
            rid = b.add(0.0)
            b.feature[node], b.threshold[node] = j, theta
            b.left[node], b.right[node] = lid, rid
            queue.append((lid, lrows, depth + 1))
            queue.append((rid, rrows, depth + 1))

    feature, threshold, left, right, _ = b.arrays()
    tree = PolicyTree(feature, threshold, left, right, np.zeros(feature.shape[0]), p, kind="relaxed")
    leaf = tree.leaf_of(X)
    raw = np.zeros(feature.shape[0])
    stats = {}
    for l in np.flatnonzero(left < 0):
        vals = y[leaf == l]
        m = vals.shape[0]
        mean = float(vals.mean()) if m else 0.0
        se2 = float(vals.var(ddof=1) / m) if m >= 2 else 0.0
        floored = se2 < floor
        se2 = max(se2, floor)
        raw[l] = max(mean, 0.0) / se2
        stats[int(l)] = {"n": m, "tau_hat": mean, "se2": se2, "floored": floored}
    top = raw.max()
    weights = raw / top if top > 0 else raw
    criterion = relaxed_criterion(tree, pseudo, X, floor) if n else 0.0
    return PolicyTree(
        feature,
        threshold,
        left,
        right,
        weights,
        p,
        kind="relaxed",
        criterion=criterion,
        leaf_stats=stats,
    )


def apply_policy(tree, covariates):
    return tree.apply(covariates)
