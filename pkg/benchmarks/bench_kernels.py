"""Time the numba kernels against their numpy twins.

Two parts: per-kernel micro timings on one process (both dicts are always
importable), then an end-to-end tree fit in fresh subprocesses with and
without ``EVIDENCE_POLICY_DISABLE_NUMBA`` so the module-level switch is
exercised as users see it.

    python3 benchmarks/bench_kernels.py [--n 20000] [--repeat 5]
"""
import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from evidence_policy import _accel, kernels

END_TO_END = """
import time
from evidence_policy import kernels
from evidence_policy.dataset import ThreeRegionDGPConfig, generate_three_region
from evidence_policy.scoring import pseudo_outcomes
from evidence_policy.tree_policy import TreeParams, fit_evidence_tree, fit_relaxed_tree
from evidence_policy.trees import fit_tree
d = generate_three_region(ThreeRegionDGPConfig(), {n}, 0)
tab = pseudo_outcomes(d)
fit_evidence_tree(tab, d.covariates, TreeParams())  # warm-up compiles
fit_relaxed_tree(tab, d.covariates, TreeParams())
fit_tree(d.covariates, d.outcome, max_depth=5)
t0 = time.perf_counter()
for r in range({repeat}):
    fit_evidence_tree(tab, d.covariates, TreeParams(seed=r))
    fit_relaxed_tree(tab, d.covariates, TreeParams(seed=r))
    fit_tree(d.covariates, d.outcome, max_depth=5)
print(kernels.backend(), (time.perf_counter() - t0) / {repeat})
"""


def kernel_inputs(n, rng):
    xs = np.sort(rng.uniform(0, 3, n))
    w = rng.exponential(1.0, n)
    y = rng.normal(0.2, 1.0, n)
    c1 = np.concatenate([[0.0], np.cumsum(y)])
    c2 = np.concatenate([[0.0], np.cumsum(y * y)])
    thr = rng.permutation(xs)[: min(n, 200)]
    feature = np.array([0, 0, -1, -1, -1], dtype=np.int64)
    threshold = np.array([1.0, 0.5, np.nan, np.nan, np.nan])
    left = np.array([1, 3, -1, -1, -1], dtype=np.int64)
    right = np.array([2, 4, -1, -1, -1], dtype=np.int64)
    return {
        "best_weighted_split": (xs, w * y, w, 5),
        "scan_thresholds": (xs, c1, c2, thr, 10.0, 50.0, n + 100, 5, 0.0, 1e-6),
        "t2_split_scores": (c1, c2, np.arange(1, n, dtype=np.int64), n, 1e-12),
        "route": (xs[:, None], feature, threshold, left, right),
    }


def micro(n, repeat):
    rng = np.random.default_rng(0)
    inputs = kernel_inputs(n, rng)
    print(f"kernel micro timings, n={n}, best of {repeat} (ms)")
    print(f"{'kernel':<22}{'numba':>10}{'numpy':>10}{'ratio':>8}")
    for name, args in inputs.items():
        times = {}
        for label, table in (("numba", kernels.NUMBA_KERNELS), ("numpy", kernels.NUMPY_KERNELS)):
            fn = table[name]
            fn(*args)  # compile outside the timing
            times[label] = min(timeit.repeat(lambda: fn(*args), number=3, repeat=repeat)) / 3 * 1e3
        print(f"{name:<22}{times['numba']:>10.3f}{times['numpy']:>10.3f}{times['numpy'] / times['numba']:>8.1f}")


def end_to_end(n, repeat):
    print(f"\nend-to-end fits (evidence + relaxed + CART), n={n}, mean of {repeat} (s)")
    code = END_TO_END.format(n=n, repeat=repeat)
    for flag in ("", "1"):
        env = dict(os.environ, EVIDENCE_POLICY_DISABLE_NUMBA=flag)
        out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
        backend, secs = out.stdout.split()
        print(f"{backend:<8}{float(secs):>10.3f}")


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=20000)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    if not _accel.HAVE_NUMBA:
        sys.exit("numba is not installed; nothing to compare")
    micro(args.n, args.repeat)
    end_to_end(args.n // 10, args.repeat)


if __name__ == "__main__":
    main()
