"""The ten acceptance criteria, each at its stated tolerance and runtime budget.

Every test prints a ``[PASS]``/``[FAIL]`` line; the lines are repeated in the
pytest terminal summary.
"""
import itertools
import math
import time

import numpy as np
import pytest
from scipy.stats import norm

from evidence_policy import (
    CellDGPConfig,
    ExperimentConfig,
    OracleSpec,
    Prop2Config,
    TrialDataset,
    bisection_solve,
    fit_centering,
    fit_model_based_policy,
    generate_cell_dgp,
    holdout_test,
    oracle_t,
    pseudo_outcomes,
    ratio_prefix_fast_path,
    relaxed_optimum,
    run_experiment,
    run_prop2_comparison,
    value_centered,
    value_dr,
)
from evidence_policy.oracle import scaled_weights
from evidence_policy.policies import CellTablePolicy
from evidence_policy.ratio_opt import CellStatistics


def brute_force_ratio(w, v):
    """max over non-empty S of w(S)/sqrt(v(S)), by listing all subsets."""
    k = w.shape[0]
    masks = np.array(list(itertools.product([0, 1], repeat=k)), dtype=float)[1:]
    sw, sv = masks @ w, masks @ v
    with np.errstate(divide="ignore", invalid="ignore"):
        r = np.where(sv > 0, sw / np.sqrt(sv), np.where(sw > 0, np.inf, 0.0))
    return float(r.max())


def random_ratio_instance(rng):
    k = int(rng.integers(1, 13))
    w = rng.normal(0.2, 1.0, size=k) * rng.choice([0.01, 1.0, 50.0])
    v = w * w * rng.uniform(0.1, 3.0, size=k) + rng.exponential(1.0, size=k) * rng.choice([1e-4, 1.0], size=k)
    return CellStatistics(tuple(range(k)), w, v)


class TestAcceptance:
    def test_c1_centered_value_equals_doubly_robust(self, acceptance_report):
        rng = np.random.default_rng(101)
        start = time.perf_counter()
        worst = 0.0
        for _ in range(1000):
            n = int(rng.integers(4, 200))
            w = rng.integers(0, 2, size=n)
            w[:2] = [0, 1]
            y = rng.normal(rng.normal(0, 3), rng.uniform(0.1, 5), size=n)
            data = TrialDataset(np.arange(n, dtype=float), w, y)
            g1 = rng.normal(0, 3, size=n)
            g0 = rng.normal(0, 3, size=n)
            mask = rng.uniform(size=n) if rng.random() < 0.5 else rng.integers(0, 2, size=n).astype(float)
            p = w.mean()
            c0 = (1 - p) * g1 + p * g0
            rows = lambda X: X[:, 0].astype(int)
            v_c0 = value_centered(data, mask, lambda X: c0[rows(X)])
            v_dr = value_dr(data, mask, lambda X, arm: (g1 if arm == 1 else g0)[rows(X)])
            worst = max(worst, abs(v_c0 - v_dr))
        elapsed = time.perf_counter() - start
        ok = worst <= 1e-12 and elapsed < 5
        acceptance_report(1, "V_c0 == V_DR", ok, f"max |diff| {worst:.2e}, {elapsed:.1f}s")
        assert ok

    def test_c2_second_moment_law(self, acceptance_report):
        start = time.perf_counter()
        rng = np.random.default_rng(202)
        n, p = 1_000_000, 0.3
        x = rng.uniform(size=n)
        w = (rng.random(n) < p).astype(int)
        m1, m0 = np.sin(2 * np.pi * x) + 2.0, x * x
        y = np.where(w == 1, m1, m0) + (1.0 + x) * rng.standard_normal(n)
        data = TrialDataset(x, w, y)
        c0 = lambda X: (1 - p) * (np.sin(2 * np.pi * X[:, 0]) + 2.0) + p * X[:, 0] ** 2
        c = lambda X: c0(X) + 1.0 + X[:, 0]
        d = pseudo_outcomes(data, c, p).pseudo_sq - pseudo_outcomes(data, c0, p).pseudo_sq
        # E[(1 + x)^2] for x ~ U[0, 1] is 7/3
        target = (7.0 / 3.0) / (p * (1 - p))
        se = d.std(ddof=1) / math.sqrt(n)
        gap = abs(d.mean() - target)
        elapsed = time.perf_counter() - start
        ok = gap <= 3 * se and elapsed < 30
        acceptance_report(
            2, "second-moment law", ok, f"MC {d.mean():.4f} vs {target:.4f}, {gap / se:.2f} SE, {elapsed:.1f}s"
        )
        assert ok

    def test_c3_bisection_guarantee_and_iterations(self, acceptance_report):
        rng = np.random.default_rng(303)
        eps = 0.01
        start = time.perf_counter()
        bad_ratio = bad_iter = 0
        for _ in range(1000):
            stats = random_ratio_instance(rng)
            opt = brute_force_ratio(stats.w, stats.v)
            sol = bisection_solve(stats, eps)
            if opt > 0:
                got = stats.ratio([stats.cell_ids.index(c) for c in sol.selected])
                bad_ratio += got < opt / (1 + eps) - 1e-12
            pos = (stats.w > 0) & (stats.v > 0)
            if pos.any():
                spread = math.sqrt(stats.v[pos].sum() / stats.v[pos].min())
                bound = math.ceil(math.log2(((1 + eps) * spread - 1) / eps)) + 1
                bad_iter += sol.iterations > bound
        elapsed = time.perf_counter() - start
        ok = bad_ratio == 0 and bad_iter == 0 and elapsed < 10
        acceptance_report(
            3,
            "bisection (1+eps) guarantee",
            ok,
            f"{bad_ratio} ratio and {bad_iter} iteration violations in 1000, {elapsed:.1f}s",
        )
        assert ok

    def test_c4_prefix_fast_path_exact(self, acceptance_report):
        rng = np.random.default_rng(404)
        worst, mismatch = 0.0, 0
        for _ in range(1000):
            stats = random_ratio_instance(rng)
            opt = brute_force_ratio(stats.w, stats.v)
            sol = ratio_prefix_fast_path(stats)
            if opt <= 0:
                mismatch += not sol.is_null
                continue
            gap = abs(sol.objective - opt)
            worst = max(worst, gap)
            mismatch += gap > 1e-12
        ok = mismatch == 0
        acceptance_report(4, "prefix fast path == brute force", ok, f"{mismatch} mismatches, max gap {worst:.1e}")
        assert ok

    def test_c5_treat_all_size(self, acceptance_report):
        config = ExperimentConfig.from_dict(
            {
                "dgp": {"kind": "three_region", "params": {"region_effects": [0, 0, 0]}},
                "methods": ["all"],
                "replications": 5000,
                "alpha": 0.05,
                "seed": 5,
                "evaluation_centering": "constant_mean",
            }
        )
        start = time.perf_counter()
        rate = run_experiment(config).rejection_rate("all")
        elapsed = time.perf_counter() - start
        ok = abs(rate - 0.05) <= 0.01 and elapsed < 120
        acceptance_report(5, "treat-all size under the null", ok, f"rejection {rate:.4f}, {elapsed:.1f}s")
        assert ok

    def test_c6_oracle_power_law(self, acceptance_report):
        start = time.perf_counter()
        reps, alpha, lines, ok = 2000, 0.05, [], True
        for s in range(10):
            rng = np.random.default_rng([606, s])
            k = int(rng.integers(2, 6))
            mu = rng.uniform(-2.0, 12.0, size=k)
            sd = rng.uniform(0.5, 3.0, size=k)
            a = np.zeros(k)
            a[rng.permutation(k)[: rng.integers(1, k + 1)]] = 1.0
            cfg = CellDGPConfig(tuple(mu), tuple(sd), 400)
            tau = cfg.cell_taus()
            # Var(Y~ | x) with c = 0 and p = 1/2
            spec = OracleSpec(np.full(k, 1.0 / k), tau, 4 * sd**2 + tau**2, cfg.n, alpha)
            power = norm.cdf(oracle_t(spec, a) - norm.ppf(1 - alpha))
            policy = CellTablePolicy({i: a[i] for i in range(k)})
            zero = fit_centering(generate_cell_dgp(cfg, 0), "constant_zero")
            hits = sum(
                holdout_test(policy, zero, generate_cell_dgp(cfg, 100_000 * s + r), alpha, 0.5).p_value <= alpha
                for r in range(reps)
            )
            rate = hits / reps
            se = math.sqrt(power * (1 - power) / reps)
            good = abs(rate - power) <= 3 * max(se, 1e-12)
            ok &= good
            lines.append(f"{rate:.3f}/{power:.3f}")
        elapsed = time.perf_counter() - start
        ok &= elapsed < 120
        acceptance_report(6, "oracle power law", ok, f"MC/oracle {' '.join(lines)}, {elapsed:.1f}s")
        assert ok

    def test_c7_prop2_separation(self, acceptance_report):
        config = Prop2Config(CellDGPConfig((5.0, 5.0, 5.0), (0.01, 0.01, 100.0), 1000), 500, 0.05, seed=7)
        start = time.perf_counter()
        report = run_prop2_comparison(config)
        elapsed = time.perf_counter() - start
        a, b = report.sign_rule_rejection, report.ratio_rejection
        ok = b >= 0.95 and a <= 0.625 and elapsed < 300
        acceptance_report(7, "two-learner separation", ok, f"ratio {b:.3f}, sign rule {a:.3f}, {elapsed:.1f}s")
        assert ok

    @pytest.mark.slow
    def test_c8_three_region_directional(self, acceptance_report):
        config = ExperimentConfig.from_dict(
            {
                "methods": ["evidence_res", "classifier_res", "cate", "all"],
                "n_train": 2000,
                "n_holdout": 2000,
                "replications": 200,
                "seed": 8,
            }
        )
        start = time.perf_counter()
        report = run_experiment(config)
        elapsed = time.perf_counter() - start
        rates = {m: report.discovery_rate(m) for m in config.to_dict()["methods"]}
        ev = report.rows_for("evidence_res")
        concentrated = np.mean([r.treated_covariate_mean > 1.5 for r in ev])
        ok = (
            all(rates["evidence_res"] > rates[m] for m in ("classifier_res", "cate", "all"))
            and concentrated >= 0.8
            and elapsed < 900
        )
        detail = ", ".join(f"{m} {v:.3f}" for m, v in rates.items())
        acceptance_report(
            8, "three-region directional", ok, f"{detail}; region concentration {concentrated:.2f}, {elapsed:.0f}s"
        )
        assert ok

    def test_c9_relaxed_oracle_dominance(self, acceptance_report):
        rng = np.random.default_rng(909)
        worst = np.inf
        for _ in range(1000):
            k = int(rng.integers(1, 9))
            spec = OracleSpec(
                rng.dirichlet(np.ones(k)),
                rng.normal(0.0, 1.0, size=k),
                np.exp(rng.normal(0.0, 1.0, size=k)),
                int(rng.integers(50, 5000)),
            )
            best = oracle_t(spec, scaled_weights(relaxed_optimum(spec).weights))
            for _ in range(100):
                comp = rng.uniform(size=k) if rng.random() < 0.5 else rng.integers(0, 2, size=k).astype(float)
                worst = min(worst, best - oracle_t(spec, comp))
        ok = worst >= -1e-9
        acceptance_report(9, "relaxed oracle dominance", ok, f"min margin {worst:.2e}")
        assert ok

    def test_c10_partition_exact(self, acceptance_report):
        failures = []
        for inst in range(20):
            rng = np.random.default_rng([1010, inst])
            depth = 2 if inst % 2 == 0 else 3
            n_feat = depth + 1
            atoms = np.array(list(itertools.product([0, 1], repeat=n_feat)), dtype=float)
            # identical blocks of (W, Y) for every atom of a group; the last feature is irrelevant
            blocks = {}
            for g in itertools.product([0, 1], repeat=depth):
                y = rng.normal(rng.normal(0, 2), rng.uniform(0.5, 3), size=8)
                blocks[g] = y
            w_block = np.array([1, 1, 1, 1, 0, 0, 0, 0])
            X, W, Y, atom_id = [], [], [], []
            for i, x in enumerate(atoms):
                g = tuple(int(v) for v in x[:depth])
                X.append(np.repeat(x[None, :], 8, axis=0))
                W.append(w_block)
                Y.append(blocks[g])
                atom_id.append(np.full(8, i))
            data = TrialDataset(np.vstack(X), np.concatenate(W), np.concatenate(Y))
            atom_id = np.concatenate(atom_id)
            zero = fit_centering(data, "constant_zero")
            ytil = pseudo_outcomes(data, zero).pseudo
            n = ytil.shape[0]
            sw = np.bincount(atom_id, ytil) / n
            sv = np.bincount(atom_id, ytil * ytil) / n
            # brute force over every assignment of the atoms; treating nobody scores 0
            masks = np.array(list(itertools.product([0, 1], repeat=atoms.shape[0])), dtype=float)
            vals = np.concatenate([[0.0], (masks[1:] @ sw) / np.sqrt(masks[1:] @ sv)])
            best = vals.max()
            group_of = [tuple(int(v) for v in x[:depth]) for x in atoms]
            constant = np.ones(masks.shape[0], dtype=bool)
            for g in set(group_of):
                cols = masks[:, [i for i, h in enumerate(group_of) if h == g]]
                constant &= cols.min(axis=1) == cols.max(axis=1)
            group_best = vals[constant].max()
            fit = fit_model_based_policy(data, zero, sparsity=depth, epsilon=1e-10)
            a = fit.policy.apply(data.covariates)
            rho = a * ytil
            achieved = rho.mean() / math.sqrt(np.mean(rho * rho)) if a.any() else 0.0
            if abs(group_best - best) > 1e-9 or abs(achieved - best) > 1e-9:
                failures.append((inst, best, group_best, achieved))
        ok = not failures
        acceptance_report(10, "partition-exact oracle", ok, f"{20 - len(failures)}/20 instances exact")
        assert ok
