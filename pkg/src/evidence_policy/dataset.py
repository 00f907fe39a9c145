"""Randomized-trial containers, synthetic data-generating processes and CSV I/O."""
import csv
import math
import os
import tempfile
from dataclasses import dataclass, field

import numpy as np

from ._random import make_rng


class DatasetError(ValueError):
    """Raised for malformed trial data or unreadable input files."""


def _frozen(a, dtype):
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class TrialDataset:
    """Rows ``(X_i, W_i, Y_i)`` from a randomized trial.

    ``covariates`` is ``(n, p)``, ``treatment`` holds 0/1 flags and ``outcome``
    real responses.  Arrays are copied and made read-only.  ``meta`` carries
    generator ground truth (region labels, true effects) when available and
    is never used by the learners.
    """

    covariates: np.ndarray
    treatment: np.ndarray
    outcome: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        X = np.asarray(self.covariates, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        if X.ndim != 2:
            raise DatasetError("covariates must be a 2-D array")
        w = np.asarray(self.treatment)
        y = np.asarray(self.outcome, dtype=float)
        n = X.shape[0]
        if n < 1:
            raise DatasetError("a dataset needs at least one row")
        if w.shape != (n,) or y.shape != (n,):
            raise DatasetError(
                f"row counts differ: covariates {n}, treatment {w.shape}, outcome {y.shape}"
            )
        if not np.all((w == 0) | (w == 1)):
            raise DatasetError("treatment values must be exactly 0 or 1")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
            raise DatasetError("covariates and outcomes must be finite")
        object.__setattr__(self, "covariates", _frozen(X, float))
        object.__setattr__(self, "treatment", _frozen(w, np.int64))
        object.__setattr__(self, "outcome", _frozen(y, float))

    @property
    def n(self):
        return self.covariates.shape[0]

    @property
    def p(self):
        return self.covariates.shape[1]

    def subset(self, rows):
        rows = np.asarray(rows)
        meta = {
            k: v[rows] if isinstance(v, np.ndarray) and v.shape[:1] == (self.n,) else v
            for k, v in self.meta.items()
        }
        return TrialDataset(self.covariates[rows], self.treatment[rows], self.outcome[rows], meta)

    def with_treatment(self, treatment):
        return TrialDataset(self.covariates, treatment, self.outcome, dict(self.meta))

    def equals(self, other):
        return (
            np.array_equal(self.covariates, other.covariates)
            and np.array_equal(self.treatment, other.treatment)
            and np.array_equal(self.outcome, other.outcome)
        )


def _vec3(v, name, nonneg=False):
    a = np.asarray(v, dtype=float)
    if a.shape != (3,):
        raise DatasetError(f"{name} must have exactly 3 entries")
    if nonneg and np.any(a < 0):
        raise DatasetError(f"{name} must be non-negative")
    return tuple(float(x) for x in a)


def _check_prob(p):
    if not 0.0 < p < 1.0:
        raise DatasetError(f"treat_probability must lie in (0, 1), got {p}")


@dataclass(frozen=True)
class ThreeRegionDGPConfig:
    """Scalar covariate on [0, 3] split into regions [0,1), [1,2), [2,3]."""

    region_effects: tuple = (0.0, 2.0, 1.0)
    region_baselines: tuple = (0.0, 10.0, 100.0)
    region_noise_sd: tuple = (5.0, 10.0, 1.0)
    treat_probability: float = 0.5

    def __post_init__(self):
        object.__setattr__(self, "region_effects", _vec3(self.region_effects, "region_effects"))
        object.__setattr__(
            self, "region_baselines", _vec3(self.region_baselines, "region_baselines")
        )
        object.__setattr__(
            self, "region_noise_sd", _vec3(self.region_noise_sd, "region_noise_sd", nonneg=True)
        )
        _check_prob(self.treat_probability)


@dataclass(frozen=True)
class GroupStructureDGPConfig:
    group_effects: tuple = (-2.0, 2.0, 2.0)
    group_noise_sd: tuple = (5.0, 10.0, 1.0)
    group_baselines: tuple = (0.0, 10.0, 100.0)
    feature_count: int = 44
    sample_count: int = 2000
    treat_probability: float = 0.5

    def __post_init__(self):
        object.__setattr__(self, "group_effects", _vec3(self.group_effects, "group_effects"))
        object.__setattr__(
            self, "group_noise_sd", _vec3(self.group_noise_sd, "group_noise_sd", nonneg=True)
        )
        object.__setattr__(self, "group_baselines", _vec3(self.group_baselines, "group_baselines"))
        if self.sample_count < 1:
            raise DatasetError("sample_count must be positive")
        if self.feature_count < 1:
            raise DatasetError("feature_count must be positive")
        _check_prob(self.treat_probability)


@dataclass(frozen=True)
class CellDGPConfig:
    """``k`` equal-mass cells with local-to-zero effects ``mu_x / sqrt(n)``."""

    cell_effects: tuple
    cell_noise_sd: tuple
    samples_per_cell: int
    treat_probability: float = 0.5

    def __post_init__(self):
        mu = tuple(float(x) for x in np.atleast_1d(self.cell_effects))
        sd = tuple(float(x) for x in np.atleast_1d(self.cell_noise_sd))
        if len(mu) < 1 or len(mu) != len(sd):
            raise DatasetError("cell_effects and cell_noise_sd need equal, positive length")
        if any(s <= 0 for s in sd):
            raise DatasetError("cell_noise_sd must be strictly positive")
        if self.samples_per_cell < 1:
            raise DatasetError("samples_per_cell must be positive")
        _check_prob(self.treat_probability)
        object.__setattr__(self, "cell_effects", mu)
        object.__setattr__(self, "cell_noise_sd", sd)

    @property
    def cell_count(self):
        return len(self.cell_effects)

    @property
    def n(self):
        return self.cell_count * self.samples_per_cell

    def cell_taus(self):
        return np.asarray(self.cell_effects) / math.sqrt(self.n)


def region_index(x):
    """Region 0, 1 or 2 for covariate values on [0, 3]."""
    return np.clip(np.floor(np.asarray(x, dtype=float)), 0, 2).astype(np.int64)


def generate_three_region(config, n, seed):
    if n < 1:
        raise DatasetError("n must be positive")
    rng = make_rng(seed, "three_region")
    x = rng.uniform(0.0, 3.0, size=n)
    w = (rng.random(n) < config.treat_probability).astype(np.int64)
    t = region_index(x)
    tau = np.asarray(config.region_effects)[t]
    beta = np.asarray(config.region_baselines)[t]
    sd = np.asarray(config.region_noise_sd)[t]
    y = w * tau + beta + sd * rng.standard_normal(n)
    return TrialDataset(x[:, None], w, y, {"region": t, "tau": tau})


def group_structure_components(covariates, features, thresholds, config):
    """Per-row effect, baseline and noise sd of the group-structure design."""
    X = np.asarray(covariates, dtype=float)
    ind = np.stack(
        [X[:, q] > th for q, th in zip(features, thresholds)], axis=1
    ).astype(float)
    tau = ind @ np.asarray(config.group_effects)
    base = ind @ np.asarray(config.group_baselines)
    sd = ind @ np.asarray(config.group_noise_sd)
    return tau, base, sd


def generate_group_structure(config, seed, thresholds=None):
    """Group-structure outcomes over i.i.d. U[0,1] covariates.

    ``thresholds`` overrides the per-feature medians (e.g. ``-inf`` forces
    every indicator on).
    """
    if config.feature_count < 3:
        raise DatasetError("group-structure design needs feature_count >= 3")
    rng = make_rng(seed, "group_structure")
    n, p = config.sample_count, config.feature_count
    X = rng.uniform(0.0, 1.0, size=(n, p))
    q = rng.choice(p, size=3, replace=False)
    if thresholds is None:
        thresholds = np.median(X[:, q], axis=0)
    thresholds = np.asarray(thresholds, dtype=float)
    w = (rng.random(n) < config.treat_probability).astype(np.int64)
    tau, base, sd = group_structure_components(X, q, thresholds, config)
    y = tau * w + base + sd * rng.standard_normal(n)
    meta = {"features": q, "thresholds": thresholds, "tau": tau, "noise_sd": sd}
    return TrialDataset(X, w, y, meta)


def generate_cell_dgp(config, seed):
    rng = make_rng(seed, "cell")
    k, m = config.cell_count, config.samples_per_cell
    cell = np.repeat(np.arange(k), m)
    w = (rng.random(k * m) < config.treat_probability).astype(np.int64)
    tau = config.cell_taus()[cell]
    y = w * tau + np.asarray(config.cell_noise_sd)[cell] * rng.standard_normal(k * m)
    return TrialDataset(cell[:, None].astype(float), w, y, {"cell": cell, "tau": tau})


# ---------------------------------------------------------------------------
# CSV
# ---------------------------------------------------------------------------


def load_csv(path):
    """Read ``x1,...,xp,w,y`` (any feature names; ``w`` and ``y`` required)."""
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise DatasetError(f"cannot open {path}: {exc}") from exc
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header:
            raise DatasetError(f"{path}: empty file")
        header = [h.strip() for h in header]
        for col in ("w", "y"):
            if header.count(col) != 1:
                raise DatasetError(f"{path}: need exactly one '{col}' column")
        iw, iy = header.index("w"), header.index("y")
        feat = [j for j, h in enumerate(header) if j not in (iw, iy)]
        rows = []
        for lineno, rec in enumerate(reader, start=2):
            if not rec or all(not c.strip() for c in rec):
                continue
            if len(rec) != len(header):
                raise DatasetError(
                    f"{path}: row {lineno} has {len(rec)} fields, expected {len(header)}"
                )
            vals = []
            for j, cell in enumerate(rec):
                try:
                    v = float(cell)
                except ValueError:
                    raise DatasetError(
                        f"{path}: row {lineno}, column '{header[j]}': non-numeric value {cell!r}"
                    ) from None
                if not math.isfinite(v):
                    raise DatasetError(
                        f"{path}: row {lineno}, column '{header[j]}': non-finite value {cell!r}"
                    )
                vals.append(v)
            if vals[iw] not in (0.0, 1.0):
                raise DatasetError(
                    f"{path}: row {lineno}, column 'w': treatment must be 0 or 1, got {rec[iw]!r}"
                )
            rows.append(vals)
    if not rows:
        raise DatasetError(f"{path}: no data rows")
    A = np.asarray(rows, dtype=float)
    X = A[:, feat] if feat else np.zeros((A.shape[0], 0))
    if X.shape[1] == 0:
        raise DatasetError(f"{path}: no feature columns")
    return TrialDataset(X, A[:, iw].astype(np.int64), A[:, iy], {"feature_names": [header[j] for j in feat]})


def write_csv(data, path, feature_names=None):
    """Write ``data`` atomically; floats use ``repr`` so they round-trip exactly."""
    names = feature_names or data.meta.get("feature_names") or [
        f"x{j + 1}" for j in range(data.p)
    ]
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix=".csv")
    try:
        with os.fdopen(fd, "w", newline="", encoding="utf-8") as fh:
            wr = csv.writer(fh)
            wr.writerow([*names, "w", "y"])
            for x, w, y in zip(data.covariates, data.treatment, data.outcome):
                wr.writerow([*(repr(float(v)) for v in x), int(w), repr(float(y))])
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
