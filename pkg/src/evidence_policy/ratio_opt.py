"""Subset selection maximising ``w(S) / sqrt(v(S))`` over a finite set of cells.

``w`` and ``v`` are additive set functions (per-cell sums of pseudo-outcomes
and of their squares, both divided by ``n``).  :func:`bisection_solve`
brackets the optimal ratio and, at each midpoint ``lam``, minimises the
submodular function ``sqrt(v(S)) - lam * w(S)`` without constraints.
"""
import math
from dataclasses import dataclass

import numpy as np

ENUMERATION_LIMIT = 20


@dataclass(frozen=True, eq=False)
class CellStatistics:
    cell_ids: tuple
    w: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.w, dtype=float)
        v = np.asarray(self.v, dtype=float)
        ids = tuple(self.cell_ids)
        if w.shape != v.shape or w.shape != (len(ids),):
            raise ValueError("cell_ids, w and v must have equal length")
        if np.any(v < 0):
            raise ValueError("second-moment sums v must be non-negative")
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "v", v)
        object.__setattr__(self, "cell_ids", ids)

    @classmethod
    def from_pseudo(cls, cells, pseudo, n=None):
        """Per-cell ``(1/n) sum pseudo`` and ``(1/n) sum pseudo**2``."""
        cells = np.asarray(cells)
        y = np.asarray(pseudo, dtype=float)
        n = y.shape[0] if n is None else n
        ids, inv = np.unique(cells, return_inverse=True)
        w = np.bincount(inv, weights=y, minlength=ids.shape[0]) / n
        v = np.bincount(inv, weights=y * y, minlength=ids.shape[0]) / n
        return cls(tuple(ids.tolist()), w, v)

    def ratio(self, idx):
        idx = list(idx)
        if not idx:
            return 0.0
        wv = self.w[idx].sum()
        vv = self.v[idx].sum()
        if vv == 0:
            return math.inf if wv > 0 else 0.0
        return float(wv / math.sqrt(vv))


@dataclass(frozen=True)
class RatioSolution:
    selected: tuple
    objective: float
    iterations: int = 0
    lambda_final: float = float("nan")
    status: str = "ok"

    @property
    def is_null(self):
        return not self.selected


NO_POSITIVE_CELL = "no_positive_cell"


def _subset_sums(vals):
    """Sums over all ``2**k`` subsets; bit ``i`` of the index selects item ``i``."""
    out = np.zeros(1)
    for x in vals:
        out = np.concatenate([out, out + x])
    return out


def _mask_members(mask, k):
    return [i for i in range(k) if (mask >> i) & 1]


def _lex_key(mask, k):
    return tuple(_mask_members(mask, k))


class _Enumerator:
    """Exact minimiser of ``sqrt(v(S)) - lam w(S)`` by full enumeration."""

    def __init__(self, w, v):
        self.k = w.shape[0]
        self.sw = _subset_sums(w)
        self.sqv = np.sqrt(_subset_sums(v))

    def argmin(self, lam):
        g = self.sqv - lam * self.sw
        best = g.min()
        ties = np.flatnonzero(g == best)
        if ties.shape[0] == 1:
            mask = int(ties[0])
        else:
            mask = min((int(t) for t in ties), key=lambda t: _lex_key(t, self.k))
        return _mask_members(mask, self.k)


class _PrefixMinimizer:
    """Minimiser restricted to prefixes of the cells sorted by ``w / v``.

    Used beyond the enumeration budget.
    """

    def __init__(self, w, v):
        self.order = _ratio_order(w, v)
        self.cw = np.concatenate([[0.0], np.cumsum(w[self.order])])
        self.sqv = np.sqrt(np.concatenate([[0.0], np.cumsum(v[self.order])]))

    def argmin(self, lam):
        g = self.sqv - lam * self.cw
        j = int(np.argmin(g))
        return sorted(self.order[:j].tolist())


def _ratio_order(w, v):
    with np.errstate(divide="ignore"):
        r = np.where(v > 0, w / np.where(v > 0, v, 1.0), np.inf)
    return np.argsort(-r, kind="stable")


def _positive_part(stats):
    q = np.flatnonzero(stats.w > 0)
    forced = q[stats.v[q] == 0]
    free = q[stats.v[q] > 0]
    return forced, free


def _minimizer(w, v, limit):
    return _Enumerator(w, v) if w.shape[0] <= limit else _PrefixMinimizer(w, v)


def inner_minimize(stats, lam, enumeration_limit=ENUMERATION_LIMIT):
    """Exact ``argmin_{S within Q} sqrt(v(S)) - lam * w(S)``; returns cell ids.

    ``Q`` is the set of cells with ``w > 0``.  Ties go to the
    lexicographically smallest set of positions.
    """
    if lam <= 0:
        raise ValueError("lambda must be positive")
    q = np.flatnonzero(stats.w > 0)
    picked = _minimizer(stats.w[q], stats.v[q], enumeration_limit).argmin(lam)
    return tuple(stats.cell_ids[q[i]] for i in picked)


def bisection_solve(stats, epsilon=1e-3, enumeration_limit=ENUMERATION_LIMIT):
    """(1+epsilon)-approximate maximiser of ``w(S) / sqrt(v(S))``.

    Cells with ``w <= 0`` are dropped; cells with ``w > 0`` and ``v == 0`` are
    always included.  With no positive cell the solution is empty and has
    ``status == "no_positive_cell"``.
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    forced, free = _positive_part(stats)
    if forced.size == 0 and free.size == 0:
        return RatioSolution((), 0.0, 0, float("nan"), NO_POSITIVE_CELL)
    if free.size == 0:
        sel = sorted(forced.tolist())
        return RatioSolution(tuple(stats.cell_ids[i] for i in sel), stats.ratio(sel), 0)

    w, v = stats.w[free], stats.v[free]
    oracle = _minimizer(w, v, enumeration_limit)
    wq = w.sum()
    lam_max = (1.0 + epsilon) * math.sqrt(v.sum()) / wq
    lam_min = math.sqrt(v.min()) / wq
    iterations = 0
    while lam_max >= (1.0 + epsilon) * lam_min:
        lam = 0.5 * (lam_max + lam_min)
        s = oracle.argmin(lam)
        iterations += 1
        if not s or math.sqrt(v[s].sum()) / w[s].sum() >= lam:
            lam_min = lam
        else:
            lam_max = lam
    s = oracle.argmin(lam_max)
    sel = sorted(forced.tolist() + free[s].tolist())
    return RatioSolution(
        tuple(stats.cell_ids[i] for i in sel), stats.ratio(sel), iterations, lam_max
    )


def ratio_prefix_fast_path(stats):
    """Best prefix of the positive cells ordered by ``w / v`` (descending)."""
    q = np.flatnonzero(stats.w > 0)
    if q.size == 0:
        return RatioSolution((), 0.0, 0, float("nan"), NO_POSITIVE_CELL)
    order = q[_ratio_order(stats.w[q], stats.v[q])]
    cw = np.cumsum(stats.w[order])
    cv = np.cumsum(stats.v[order])
    with np.errstate(divide="ignore"):
        vals = np.where(cv > 0, cw / np.sqrt(np.where(cv > 0, cv, 1.0)), np.inf)
    j = int(np.argmax(vals))
    sel = sorted(order[: j + 1].tolist())
    return RatioSolution(tuple(stats.cell_ids[i] for i in sel), stats.ratio(sel), 0)


def iteration_bound(stats, epsilon):
    """Upper bound on bisection steps: log2 of the initial-to-final window ratio, plus one."""
    _, free = _positive_part(stats)
    v = stats.v[free]
    if v.size == 0:
        return 0
    return int(
        math.ceil(math.log2((1.0 + epsilon) / epsilon) + 0.5 * math.log2(v.sum() / v.min())) + 1
    )
