"""Pseudo-outcomes, policy-value estimators and the one-sided hold-out test."""
from dataclasses import dataclass

import numpy as np

from .centering import predict_centering
from .normal import critical_value, norm_sf
from .policies import as_mask


class DegenerateStatisticError(ArithmeticError):
    """The masked pseudo-outcomes have zero standard deviation."""


@dataclass(frozen=True, eq=False)
class PseudoOutcomeTable:
    pseudo: np.ndarray
    pseudo_sq: np.ndarray
    treat_probability_used: float

    def __len__(self):
        return self.pseudo.shape[0]

    @classmethod
    def from_values(cls, pseudo, treat_probability=float("nan")):
        pseudo = np.array(pseudo, dtype=float)
        sq = pseudo * pseudo
        pseudo.setflags(write=False)
        sq.setflags(write=False)
        return cls(pseudo, sq, float(treat_probability))


@dataclass(frozen=True)
class TestResult:
    t_statistic: float
    p_value: float
    n_effective: int
    estimate: float
    std_error: float
    alpha: float = None
    null_policy: bool = False
    degenerate: bool = False

    __test__ = False  # not a pytest class

    @property
    def passed(self):
        if self.alpha is None:
            return None
        return self.p_value <= self.alpha


def resolve_propensity(treatment, propensity):
    """``"empirical"`` -> sample treated fraction; a number is used as given."""
    if isinstance(propensity, str):
        if propensity != "empirical":
            raise ValueError(f"unknown propensity spec {propensity!r}")
        w = np.asarray(treatment)
        if w.min() == w.max():
            raise ValueError("empirical propensity needs both treated and control rows")
        return float(np.mean(w))
    p = float(propensity)
    if not 0.0 < p < 1.0:
        raise ValueError(f"propensity must lie in (0, 1), got {p}")
    return p


def ipw_sign(treatment, p):
    w = np.asarray(treatment, dtype=float)
    return w / p - (1.0 - w) / (1.0 - p)


def pseudo_outcomes(data, centering=None, propensity="empirical"):
    """``(Y - c(X)) * (W/p - (1-W)/(1-p))`` for every row.

    ``centering=None`` means ``c = 0``.
    """
    p = resolve_propensity(data.treatment, propensity)
    c = 0.0 if centering is None else predict_centering(centering, data.covariates)
    return PseudoOutcomeTable.from_values((data.outcome - c) * ipw_sign(data.treatment, p), p)


def value_ips(data, policy, propensity="empirical"):
    p = resolve_propensity(data.treatment, propensity)
    a = as_mask(policy, data.covariates)
    return float(np.mean(a * data.outcome * ipw_sign(data.treatment, p)))


def value_centered(data, policy, centering, propensity="empirical"):
    a = as_mask(policy, data.covariates)
    return float(np.mean(a * pseudo_outcomes(data, centering, propensity).pseudo))


def value_dr(data, policy, outcome_model, propensity="empirical"):
    """Doubly-robust value with outcome regression ``outcome_model(X, w)``."""
    p = resolve_propensity(data.treatment, propensity)
    X = data.covariates
    a = as_mask(policy, X)
    g1 = np.asarray(outcome_model(X, 1), dtype=float)
    g0 = np.asarray(outcome_model(X, 0), dtype=float)
    if g1.shape != (data.n,) or g0.shape != (data.n,):
        raise ValueError("outcome model must return one prediction per row for each arm")
    gw = np.where(data.treatment == 1, g1, g0)
    resid = (data.outcome - gw) * ipw_sign(data.treatment, p)
    return float(np.mean(a * (g1 - g0)) + np.mean(a * resid))


def _weights(pseudo, policy_mask):
    a = np.asarray(policy_mask, dtype=float)
    if a.shape != pseudo.pseudo.shape:
        raise ValueError("policy mask length differs from pseudo-outcome table")
    return a


def t_statistic(pseudo, policy_mask, alpha=None):
    """One-sided t-test of ``rho_i = a_i * pseudo_i``.

    ``t = sqrt(n) * mean(rho) / sd(rho)`` with the ``n - 1`` denominator,
    i.e. ``mean / sqrt(sum((rho - mean)**2) / (n (n - 1)))``.
    """
    a = _weights(pseudo, policy_mask)
    n = a.shape[0]
    if n < 2:
        raise ValueError("t-statistic needs at least two rows")
    rho = a * pseudo.pseudo
    mean = float(np.mean(rho))
    sd = float(np.std(rho, ddof=1))
    if not sd > 0.0 or sd <= 1e-12 * float(np.sqrt(np.mean(rho * rho))):
        raise DegenerateStatisticError("masked pseudo-outcomes have zero spread")
    se = sd / np.sqrt(n)
    t = mean / se
    return TestResult(
        t_statistic=t,
        p_value=float(norm_sf(t)),
        n_effective=int(np.count_nonzero(a)),
        estimate=mean,
        std_error=se,
        alpha=alpha,
    )


def normalized_objective(pseudo, policy_mask):
    """``mean(rho) / sqrt(mean(rho**2))``, the scale-free form of the t-statistic."""
    a = _weights(pseudo, policy_mask)
    rho = a * pseudo.pseudo
    num = float(np.mean(rho))
    den = float(np.sqrt(np.mean(rho * rho)))
    if den == 0.0:
        assert num == 0.0, "non-zero mean with zero second moment"
        return 0.0
    return num / den


def holdout_test(policy, centering, holdout, alpha=0.05, propensity="empirical"):
    """Evaluate a trained policy on hold-out rows.

    ``centering`` must have been fit on training data only.  A policy that
    treats nobody in the hold-out sample gets ``p = 1`` and
    ``null_policy=True``; a zero-spread statistic gets ``p`` of 0 or 1 by the
    sign of the estimate and ``degenerate=True``.
    """
    critical_value(alpha)  # validates alpha
    a = as_mask(policy, holdout.covariates)
    if not np.any(a > 0):
        return TestResult(-np.inf, 1.0, 0, 0.0, 0.0, alpha=alpha, null_policy=True)
    table = pseudo_outcomes(holdout, centering, propensity)
    try:
        return t_statistic(table, a, alpha=alpha)
    except DegenerateStatisticError:
        est = float(np.mean(a * table.pseudo))
        t = np.inf if est > 0 else -np.inf
        return TestResult(
            t, 0.0 if est > 0 else 1.0, int(np.count_nonzero(a)), est, 0.0, alpha, False, True
        )
