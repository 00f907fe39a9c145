import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import norm

from evidence_policy.centering import fit_centering
from evidence_policy.dataset import CellDGPConfig, TrialDataset, generate_cell_dgp
from evidence_policy.policies import ConstantPolicy
from evidence_policy.scoring import (
    DegenerateStatisticError,
    PseudoOutcomeTable,
    holdout_test,
    normalized_objective,
    pseudo_outcomes,
    t_statistic,
    value_centered,
    value_dr,
    value_ips,
)


def table(rho):
    return PseudoOutcomeTable.from_values(rho)


class TestPseudoOutcomes:
    def test_hand_values(self):
        d = TrialDataset([0.0, 0.0], [1, 0], [3.0, 3.0])
        assert pseudo_outcomes(d, None, 0.5).pseudo.tolist() == [6.0, -6.0]

    def test_centered_to_zero(self):
        d = TrialDataset(np.arange(4.0), [1, 0, 1, 0], np.arange(4.0) * 2)
        assert np.all(pseudo_outcomes(d, lambda X: X[:, 0] * 2).pseudo == 0)

    def test_square_column_exact(self):
        d = TrialDataset(np.arange(5.0), [1, 0, 1, 0, 1], np.random.default_rng(0).normal(size=5))
        t = pseudo_outcomes(d)
        assert np.array_equal(t.pseudo_sq, t.pseudo**2)
        assert t.treat_probability_used == 0.6

    def test_single_arm_empirical_fails(self):
        with pytest.raises(ValueError):
            pseudo_outcomes(TrialDataset([0.0, 1.0], [1, 1], [1.0, 2.0]))

    def test_bad_known_propensity(self):
        with pytest.raises(ValueError):
            pseudo_outcomes(TrialDataset([0.0, 1.0], [1, 0], [1.0, 2.0]), None, 1.2)

    def test_conditional_mean_is_effect(self):
        cfg = CellDGPConfig((40.0, -20.0), (1.0, 2.0), 50_000)
        d = generate_cell_dgp(cfg, 1)
        ytil = pseudo_outcomes(d, lambda X: 0.7 + X[:, 0], 0.5).pseudo
        for c, tau in enumerate(cfg.cell_taus()):
            r = d.meta["cell"] == c
            se = ytil[r].std(ddof=1) / math.sqrt(r.sum())
            assert abs(ytil[r].mean() - tau) < 3 * se


class TestValues:
    def test_zero_policy(self):
        d = TrialDataset([0.0, 1.0], [1, 0], [1.0, 5.0])
        assert value_ips(d, ConstantPolicy(0.0), 0.5) == 0
        assert value_centered(d, np.zeros(2), None, 0.5) == 0
        assert value_dr(d, np.zeros(2), lambda X, w: np.ones(2), 0.5) == 0

    def test_two_row_ips(self):
        d = TrialDataset([0.0, 1.0], [1, 0], [1.0, 1.0])
        assert value_ips(d, np.ones(2), 0.5) == 0.0

    def test_ips_equals_uncentered(self):
        rng = np.random.default_rng(2)
        d = TrialDataset(rng.normal(size=30), rng.integers(0, 2, 30), rng.normal(size=30))
        a = rng.uniform(size=30)
        assert value_ips(d, a) == pytest.approx(value_centered(d, a, None), abs=1e-15)

    def test_dr_exact_model_noise_free(self):
        x = np.linspace(0, 1, 20)
        w = np.arange(20) % 2
        g = lambda X, arm: X[:, 0] * (1 + arm)
        d = TrialDataset(x, w, x * (1 + w))
        a = (x > 0.3).astype(float)
        assert value_dr(d, a, g) == pytest.approx(np.mean(a * x), abs=1e-14)

    def test_constant_shift_balanced(self):
        # balanced arms with p = 1/2: a constant shift cancels exactly
        d = TrialDataset(np.zeros(4), [1, 0, 1, 0], [3.0, 1.0, -2.0, 5.0])
        base = value_centered(d, np.ones(4), None, 0.5)
        assert value_centered(d, np.ones(4), lambda X: np.full(len(X), 7.3), 0.5) == pytest.approx(base, abs=1e-12)

    def test_dr_arm_prediction_shape(self):
        d = TrialDataset([0.0, 1.0], [1, 0], [1.0, 1.0])
        with pytest.raises(ValueError):
            value_dr(d, np.ones(2), lambda X, w: np.ones(3))

    @settings(max_examples=100, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_optimal_centering_identity(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(3, 60))
        w = rng.integers(0, 2, n)
        w[:2] = [0, 1]
        d = TrialDataset(np.arange(n, dtype=float), w, rng.normal(0, 4, n))
        g1, g0 = rng.normal(size=n), rng.normal(size=n)
        p = w.mean()
        a = rng.uniform(size=n)
        idx = lambda X: X[:, 0].astype(int)
        vc = value_centered(d, a, lambda X: ((1 - p) * g1 + p * g0)[idx(X)])
        vd = value_dr(d, a, lambda X, arm: (g1 if arm else g0)[idx(X)])
        assert abs(vc - vd) <= 1e-12


class TestTStatistic:
    def test_symmetric(self):
        r = t_statistic(table([1.0, -1.0]), np.ones(2))
        assert r.t_statistic == 0 and r.p_value == 0.5

    def test_hand_example(self):
        r = t_statistic(table([2.0, 0.0, 2.0, 0.0]), np.ones(4))
        assert r.t_statistic == pytest.approx(2 / math.sqrt(4 / 3), rel=1e-12)
        assert r.p_value == pytest.approx(0.0416, abs=5e-5)

    def test_mask_applies(self):
        r = t_statistic(table([2.0, 5.0, 2.0, 7.0]), np.array([1.0, 0.0, 1.0, 0.0]))
        assert r.estimate == 1.0 and r.n_effective == 2

    def test_degenerate(self):
        with pytest.raises(DegenerateStatisticError):
            t_statistic(table([3.0, 3.0, 3.0]), np.ones(3))

    def test_too_short(self):
        with pytest.raises(ValueError):
            t_statistic(table([1.0]), np.ones(1))

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.floats(-50, 50), min_size=3, max_size=30), st.floats(1e-3, 1e3))
    def test_scale_invariant(self, rho, c):
        rho = np.asarray(rho)
        if np.std(rho) < 1e-6 * (1 + np.abs(rho).max()):
            return
        a = t_statistic(table(rho), np.ones(len(rho))).t_statistic
        b = t_statistic(table(rho * c), np.ones(len(rho))).t_statistic
        assert a == pytest.approx(b, rel=1e-12, abs=1e-12)

    def test_p_value_decreasing(self):
        ts = [t_statistic(table([1.0, s, 0.5, -0.2]), np.ones(4)) for s in np.linspace(-1, 3, 9)]
        pts = sorted((r.t_statistic, r.p_value) for r in ts)
        assert all(p1 > p2 for (_, p1), (_, p2) in zip(pts, pts[1:]))
        assert all(r.p_value == pytest.approx(1 - norm.cdf(r.t_statistic), abs=1e-15) for r in ts)


class TestNormalizedObjective:
    def test_values(self):
        assert normalized_objective(table([1.0] * 4), np.ones(4)) == 1.0
        assert normalized_objective(table([1.0, -1.0]), np.ones(2)) == 0.0
        assert normalized_objective(table([1.0, 2.0]), np.zeros(2)) == 0.0

    def test_order_matches_t(self):
        rng = np.random.default_rng(9)
        for _ in range(200):
            y = table(rng.normal(0.3, 1.0, 12))
            a, b = rng.integers(0, 2, 12).astype(float), rng.integers(0, 2, 12).astype(float)
            try:
                za, zb = t_statistic(y, a).t_statistic, t_statistic(y, b).t_statistic
            except DegenerateStatisticError:
                continue
            if za > 0 and zb > 0 and abs(za - zb) > 1e-9:
                assert (za > zb) == (normalized_objective(y, a) > normalized_objective(y, b))


class TestHoldout:
    def test_null_policy(self):
        d = generate_cell_dgp(CellDGPConfig((1.0,), (1.0,), 20), 0)
        r = holdout_test(ConstantPolicy(0.0), None, d, 0.5)
        assert r.p_value == 1.0 and r.null_policy and r.passed is False

    def test_strong_signal(self):
        cfg = CellDGPConfig((800.0,), (0.01,), 10_000)
        d = generate_cell_dgp(cfg, 0)
        r = holdout_test(ConstantPolicy(1.0), fit_centering(d, "constant_zero"), d, 0.05)
        assert r.p_value < 1e-6 and r.passed

    def test_bad_alpha(self):
        d = generate_cell_dgp(CellDGPConfig((1.0,), (1.0,), 20), 0)
        with pytest.raises(ValueError):
            holdout_test(ConstantPolicy(1.0), None, d, 1.5)

    def test_degenerate_flagged(self):
        d = TrialDataset(np.zeros(4), [1, 0, 1, 0], [1.0, -1.0, 1.0, -1.0])
        r = holdout_test(ConstantPolicy(1.0), None, d, 0.05, 0.5)
        assert r.degenerate and r.p_value == 0.0

    def test_treat_all_matches_t_of_pseudo(self):
        d = generate_cell_dgp(CellDGPConfig((3.0, 1.0), (1.0, 2.0), 100), 4)
        r = holdout_test(ConstantPolicy(1.0), None, d)
        y = pseudo_outcomes(d).pseudo
        assert r.t_statistic == pytest.approx(math.sqrt(len(y)) * y.mean() / y.std(ddof=1), rel=1e-12)
