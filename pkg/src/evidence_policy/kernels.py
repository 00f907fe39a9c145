"""Numeric inner loops shared by the tree learners.

Each kernel exists twice: a loop version compiled by numba and a vectorised
numpy version.  Both take the same arguments, walk candidates in the same
order and return identical results; ``tests/test_kernels.py`` checks parity.
The public names at the bottom of the module point at whichever variant is
active (see :mod:`evidence_policy._accel`).
"""
import math

import numpy as np

from ._accel import USE_NUMBA, jit

# Relative floor below which a variance counts as zero.
VAR_RTOL = 1e-12


# ---------------------------------------------------------------------------
# weighted least-squares split (CART regression / binary Gini)
# ---------------------------------------------------------------------------


def _best_weighted_split_loop(xs, wy, w, min_leaf):
    m = xs.shape[0]
    tot_wy = 0.0
    tot_w = 0.0
    for i in range(m):
        tot_wy += wy[i]
        tot_w += w[i]
    best_pos = -1
    best_score = -np.inf
    lw = 0.0
    lwy = 0.0
    for i in range(1, m):
        lw += w[i - 1]
        lwy += wy[i - 1]
        if i < min_leaf or m - i < min_leaf:
            continue
        if not xs[i] > xs[i - 1]:
            continue
        rw = tot_w - lw
        if lw <= 1e-12 * tot_w or rw <= 1e-12 * tot_w:
            continue
        rwy = tot_wy - lwy
        score = lwy * lwy / lw + rwy * rwy / rw
        if score > best_score:
            best_score = score
            best_pos = i
    return best_pos, best_score


def _best_weighted_split_numpy(xs, wy, w, min_leaf):
    m = xs.shape[0]
    if m < 2:
        return -1, -np.inf
    cw = np.cumsum(w)
    cwy = np.cumsum(wy)
    tot_w = cw[-1]
    tot_wy = cwy[-1]
    pos = np.arange(1, m)
    lw = cw[:-1]
    lwy = cwy[:-1]
    rw = tot_w - lw
    rwy = tot_wy - lwy
    valid = (pos >= min_leaf) & (m - pos >= min_leaf) & (xs[1:] > xs[:-1])
    valid &= (lw > 1e-12 * tot_w) & (rw > 1e-12 * tot_w)
    if not valid.any():
        return -1, -np.inf
    with np.errstate(divide="ignore", invalid="ignore"):
        score = np.where(valid, lwy * lwy / lw + rwy * rwy / rw, -np.inf)
    k = int(np.argmax(score))
    return int(pos[k]), float(score[k])


# ---------------------------------------------------------------------------
# global t-statistic scan over candidate thresholds (policy tree)
# ---------------------------------------------------------------------------


def _tstat_from_sums(s1, s2, n):
    """Return sqrt(n) * mean / sd (n-1 denominator), or nan when degenerate."""
    mean = s1 / n
    var = (s2 - s1 * mean) / (n - 1)
    if s2 <= 0.0 or var <= VAR_RTOL * s2 / (n - 1):
        return np.nan
    return mean / math.sqrt(var / n)


_tstat_nb = jit(_tstat_from_sums)


def _scan_thresholds_loop(xs, c1, c2, thresholds, s1_out, s2_out, n, min_leaf, z_star, eps):
    m = xs.shape[0]
    k = thresholds.shape[0]
    accepted = np.empty(2 * k)
    n_acc = 0
    best_k = -1
    best_c = -1
    for t in range(k):
        theta = thresholds[t]
        n_left = np.searchsorted(xs, theta)
        n_right = m - n_left
        if n_left <= min_leaf or n_right <= min_leaf:
            continue
        for c in range(2):
            if c == 0:
                s1 = s1_out + c1[n_left]
                s2 = s2_out + c2[n_left]
            else:
                s1 = s1_out + (c1[m] - c1[n_left])
                s2 = s2_out + (c2[m] - c2[n_left])
            z = _tstat_nb(s1, s2, n)
            if z == z and z >= z_star + eps:
                z_star = z
                best_k = t
                best_c = c
                accepted[n_acc] = z
                n_acc += 1
    return z_star, best_k, best_c, accepted[:n_acc]


def _scan_thresholds_numpy(xs, c1, c2, thresholds, s1_out, s2_out, n, min_leaf, z_star, eps):
    m = xs.shape[0]
    n_left = np.searchsorted(xs, thresholds)
    n_right = m - n_left
    ok = (n_left > min_leaf) & (n_right > min_leaf)
    # rows: threshold, cols: (left treated, right treated)
    s1 = np.stack([s1_out + c1[n_left], s1_out + (c1[m] - c1[n_left])], axis=1)
    s2 = np.stack([s2_out + c2[n_left], s2_out + (c2[m] - c2[n_left])], axis=1)
    mean = s1 / n
    var = (s2 - s1 * mean) / (n - 1)
    with np.errstate(divide="ignore", invalid="ignore"):
        z = mean / np.sqrt(var / n)
    degenerate = (s2 <= 0.0) | (var <= VAR_RTOL * s2 / (n - 1))
    z = np.where(degenerate | ~ok[:, None], np.nan, z)
    accepted = []
    best_k = -1
    best_c = -1
    for t, c in zip(*np.nonzero(~np.isnan(z))):
        if z[t, c] >= z_star + eps:
            z_star = float(z[t, c])
            best_k = int(t)
            best_c = int(c)
            accepted.append(z_star)
    return z_star, best_k, best_c, np.asarray(accepted, dtype=float)


# ---------------------------------------------------------------------------
# sum of squared leaf t-statistics (relaxed tree)
# ---------------------------------------------------------------------------


def _leaf_t2(s1, s2, m, floor):
    if m < 2:
        return 0.0, True
    mean = s1 / m
    var = (s2 - s1 * mean) / (m - 1)
    se2 = var / m
    floored = False
    if se2 < floor:
        se2 = floor
        floored = True
    return mean * mean / se2, floored


_leaf_t2_nb = jit(_leaf_t2)


def _t2_split_scores_loop(c1, c2, positions, m, floor):
    k = positions.shape[0]
    out = np.empty(k)
    for j in range(k):
        i = positions[j]
        left, _ = _leaf_t2_nb(c1[i], c2[i], i, floor)
        right, _ = _leaf_t2_nb(c1[m] - c1[i], c2[m] - c2[i], m - i, floor)
        out[j] = left + right
    return out


def _t2_side_numpy(s1, s2, cnt, floor):
    cnt = cnt.astype(float)
    with np.errstate(divide="ignore", invalid="ignore"):
        mean = s1 / cnt
        var = (s2 - s1 * mean) / (cnt - 1)
        se2 = np.maximum(var / cnt, floor)
        t2 = mean * mean / se2
    return np.where(cnt < 2, 0.0, t2)


def _t2_split_scores_numpy(c1, c2, positions, m, floor):
    left = _t2_side_numpy(c1[positions], c2[positions], positions, floor)
    right = _t2_side_numpy(c1[m] - c1[positions], c2[m] - c2[positions], m - positions, floor)
    return left + right


# ---------------------------------------------------------------------------
# routing rows through an array-encoded binary tree
# ---------------------------------------------------------------------------


def _route_loop(X, feature, threshold, left, right):
    n = X.shape[0]
    out = np.empty(n, dtype=np.int64)
    for i in range(n):
        node = 0
        while left[node] >= 0:
            if X[i, feature[node]] < threshold[node]:
                node = left[node]
            else:
                node = right[node]
        out[i] = node
    return out


def _route_numpy(X, feature, threshold, left, right):
    node = np.zeros(X.shape[0], dtype=np.int64)
    active = left[node] >= 0
    while active.any():
        idx = np.flatnonzero(active)
        cur = node[idx]
        go_left = X[idx, feature[cur]] < threshold[cur]
        node[idx] = np.where(go_left, left[cur], right[cur])
        active = left[node] >= 0
    return node


# ---------------------------------------------------------------------------

NUMBA_KERNELS = {
    "best_weighted_split": jit(_best_weighted_split_loop),
    "scan_thresholds": jit(_scan_thresholds_loop),
    "t2_split_scores": jit(_t2_split_scores_loop),
    "route": jit(_route_loop),
}

NUMPY_KERNELS = {
    "best_weighted_split": _best_weighted_split_numpy,
    "scan_thresholds": _scan_thresholds_numpy,
    "t2_split_scores": _t2_split_scores_numpy,
    "route": _route_numpy,
}

_ACTIVE = NUMBA_KERNELS if USE_NUMBA else NUMPY_KERNELS

best_weighted_split = _ACTIVE["best_weighted_split"]
scan_thresholds = _ACTIVE["scan_thresholds"]
t2_split_scores = _ACTIVE["t2_split_scores"]
route = _ACTIVE["route"]


def backend():
    return "numba" if USE_NUMBA else "numpy"
