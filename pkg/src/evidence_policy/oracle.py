"""Closed-form power calculations for cell-level (discrete covariate) designs.

Specs carry the per-cell effect ``tau`` directly.  Functions multiply by
``sqrt(N)`` themselves, so ``tau`` should already be on the local-to-zero
scale (``tau = mu / sqrt(N)``); do not pre-scale it.
"""
from dataclasses import dataclass

import numpy as np

from .normal import critical_value, norm_cdf
from .policies import as_mask


@dataclass(frozen=True, eq=False)
class OracleSpec:
    masses: np.ndarray
    tau: np.ndarray
    sigma_sq: np.ndarray
    holdout_size: int
    alpha: float = 0.05

    def __post_init__(self):
        m = np.atleast_1d(np.asarray(self.masses, dtype=float))
        t = np.atleast_1d(np.asarray(self.tau, dtype=float))
        s = np.atleast_1d(np.asarray(self.sigma_sq, dtype=float))
        if not (m.shape == t.shape == s.shape) or m.ndim != 1 or m.size == 0:
            raise ValueError("masses, tau and sigma_sq must be equal-length 1-D arrays")
        if np.any(m < 0) or not np.isclose(m.sum(), 1.0, rtol=0, atol=1e-9):
            raise ValueError("masses must be non-negative and sum to 1")
        if np.any(s <= 0):
            raise ValueError("sigma_sq must be positive")
        if self.holdout_size < 1:
            raise ValueError("holdout_size must be positive")
        critical_value(self.alpha)
        object.__setattr__(self, "masses", m)
        object.__setattr__(self, "tau", t)
        object.__setattr__(self, "sigma_sq", s)

    @property
    def cell_count(self):
        return self.masses.shape[0]

    @property
    def z(self):
        return critical_value(self.alpha)


@dataclass(frozen=True)
class OracleValue:
    t: float
    zero_assignment: bool = False

    def __float__(self):
        return self.t


def _assignment(spec, a):
    a = np.asarray(a, dtype=float)
    if a.shape != spec.masses.shape:
        raise ValueError(f"assignment needs {spec.cell_count} cell weights")
    if np.any(a < 0) or np.any(a > 1):
        raise ValueError("assignment weights must lie in [0, 1]")
    return a


def _t(spec, a):
    den = float(np.sum(spec.masses * a * a * spec.sigma_sq))
    if den == 0.0:
        return OracleValue(0.0, True)
    num = float(np.sum(spec.masses * a * spec.tau))
    return OracleValue(float(np.sqrt(spec.holdout_size) * num / np.sqrt(den)))


def oracle_t_value(spec, assignment):
    """Like :func:`oracle_t` but returns an :class:`OracleValue` carrying the zero flag."""
    return _t(spec, _assignment(spec, assignment))


def oracle_t(spec, assignment):
    """``sqrt(N) sum m a tau / sqrt(sum m a^2 sigma^2)``; 0 for the all-zero assignment."""
    return oracle_t_value(spec, assignment).t


def oracle_power(spec, assignment):
    return float(norm_cdf(oracle_t(spec, assignment) - spec.z))


@dataclass(frozen=True, eq=False)
class RelaxedOraclePolicy:
    weights: np.ndarray
    power: float
    null_policy: bool = False


def relaxed_optimum(spec):
    """Weights ``tau_+ / sigma^2`` (unnormalised) and their power.

    With no positive cell the zero policy is returned with ``power = alpha``.
    """
    tp = np.maximum(spec.tau, 0.0)
    weights = tp / spec.sigma_sq
    if not np.any(weights > 0):
        return RelaxedOraclePolicy(np.zeros_like(weights), float(spec.alpha), True)
    t = np.sqrt(spec.holdout_size * np.sum(spec.masses * tp * tp / spec.sigma_sq))
    return RelaxedOraclePolicy(weights, float(norm_cdf(t - spec.z)))


def scaled_weights(weights):
    """Rescale relaxed weights into [0, 1] so the largest is 1."""
    w = np.asarray(weights, dtype=float)
    top = w.max() if w.size else 0.0
    return w / top if top > 0 else w.copy()


def lift(spec, assignment):
    """``u(a) = sum m a tau`` on the local-to-zero scale of ``spec.tau``."""
    a = _assignment(spec, assignment)
    return float(np.sum(spec.masses * a * spec.tau))


def constrained_objective(spec, assignment):
    """``u(a) * Phi(t(a) - z)``; evaluation only."""
    a = _assignment(spec, assignment)
    value = _t(spec, a)
    if value.zero_assignment:
        return 0.0
    return lift(spec, a) * float(norm_cdf(value.t - spec.z))


def best_binary_assignment(spec):
    """Exhaustive argmax of ``oracle_t`` over non-empty binary assignments (small specs only)."""
    k = spec.cell_count
    if k > 20:
        raise ValueError("exhaustive search is limited to 20 cells")
    best, best_t = None, -np.inf
    for mask in range(1, 1 << k):
        a = np.array([(mask >> i) & 1 for i in range(k)], dtype=float)
        t = oracle_t(spec, a)
        if t > best_t:
            best, best_t = a, t
    return best, best_t


def relabel_reference(data, reference):
    """Flip ``W`` where the reference policy ``b`` assigns treatment.

    Testing a policy on the relabelled data compares it against ``b``
    rather than against treating nobody.  Outcomes are unchanged.
    """
    b = as_mask(reference, data.covariates)
    if not np.all((b == 0) | (b == 1)):
        raise ValueError("reference policy must be binary")
    w = np.abs(data.treatment - b.astype(np.int64))
    return data.with_treatment(w)
