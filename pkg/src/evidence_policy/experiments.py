"""Replication runner: draw data, fit every method, test on hold-out rows, aggregate.

Seeds are derived per replication with ``derive_seed(seed, rep, stage)`` so
each stage (data draw, evaluation centering, honest centering, each method's
fit) gets its own stream.  Reports depend only on the config, never on the
thread count.
"""
import csv
import dataclasses
import io
import json
import math
import os
import tempfile
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ._random import derive_seed, make_rng
from .benchmarks import HONEST_METHODS, BenchmarkKind, ForestParams, fit_honest_centering, fit_method
from .centering import CenteringKind, fit_centering
from .dataset import (
    CellDGPConfig,
    DatasetError,
    GroupStructureDGPConfig,
    ThreeRegionDGPConfig,
    generate_cell_dgp,
    generate_group_structure,
    generate_three_region,
    load_csv,
)
from .normal import critical_value
from .policies import CellTablePolicy, as_mask
from .ratio_opt import CellStatistics, bisection_solve
from .scoring import holdout_test, pseudo_outcomes
from .tree_policy import TreeParams

NEG_LOG_P_FLOOR = 1e-300


class ConfigError(ValueError):
    """Invalid experiment configuration."""


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------

DGP_KINDS = ("three_region", "group", "cell", "csv")


@dataclass(frozen=True)
class DGPSpec:
    """Which generator to draw from plus its keyword parameters."""

    kind: str = "three_region"
    params: dict = field(default_factory=dict)
    path: str = None

    def build(self):
        try:
            if self.kind == "three_region":
                return ThreeRegionDGPConfig(**self.params)
            if self.kind == "group":
                return GroupStructureDGPConfig(**self.params)
            if self.kind == "cell":
                return CellDGPConfig(**self.params)
        except (TypeError, DatasetError) as exc:
            raise ConfigError(f"bad {self.kind} parameters: {exc}") from exc
        raise ConfigError(f"unknown dgp kind {self.kind!r}; expected one of {DGP_KINDS}")


@dataclass(frozen=True)
class ExperimentConfig:
    dgp: DGPSpec = field(default_factory=DGPSpec)
    methods: tuple = (BenchmarkKind.EVIDENCE_RES, BenchmarkKind.ALL)
    n_train: int = 2000
    n_holdout: int = 2000
    replications: int = 100
    alpha: float = 0.05
    discovery_threshold: float = 1e-3
    seed: int = 0
    tree: TreeParams = field(default_factory=TreeParams)
    forest: ForestParams = field(default_factory=ForestParams)
    sparsity: int = 2
    epsilon: float = 1e-3
    honest_fraction: float = 0.5
    honest_centering: str = "regression_forest"
    evaluation_centering: str = "regression_forest"
    propensity: object = "empirical"

    def __post_init__(self):
        if self.replications < 1:
            raise ConfigError("replications must be at least 1")
        if not 0.0 < self.alpha < 1.0:
            raise ConfigError("alpha must lie in (0, 1)")
        if not 0.0 < self.discovery_threshold < 1.0:
            raise ConfigError("discovery_threshold must lie in (0, 1)")
        if not 0.0 < self.honest_fraction < 1.0:
            raise ConfigError("honest_fraction must lie in (0, 1)")
        if self.n_train < 4 or self.n_holdout < 2:
            raise ConfigError("need n_train >= 4 and n_holdout >= 2")
        if self.seed < 0:
            raise ConfigError("seed must be non-negative")
        for name in ("honest_centering", "evaluation_centering"):
            try:
                CenteringKind(getattr(self, name))
            except ValueError as exc:
                raise ConfigError(f"{name}: {exc}") from exc
        try:
            methods = tuple(BenchmarkKind(m) for m in self.methods)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        if not methods or len(set(methods)) != len(methods):
            raise ConfigError("methods must be a non-empty list without duplicates")
        object.__setattr__(self, "methods", methods)

    @classmethod
    def from_dict(cls, d):
        if not isinstance(d, dict):
            raise ConfigError("config must be a JSON object")
        d = dict(d)
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            if "dgp" in d:
                g = d["dgp"]
                if not isinstance(g, dict):
                    raise ConfigError("dgp must be an object")
                d["dgp"] = DGPSpec(g.get("kind", "three_region"), dict(g.get("params", {})), g.get("path"))
                if d["dgp"].kind == "csv" and not d["dgp"].path:
                    raise ConfigError("csv dgp needs a path")
                if d["dgp"].kind != "csv":
                    d["dgp"].build()
            if "tree" in d:
                d["tree"] = TreeParams(**d["tree"])
            if "forest" in d:
                d["forest"] = ForestParams(**d["forest"])
            return cls(**d)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def from_json(cls, text):
        try:
            return cls.from_dict(json.loads(text))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON: {exc}") from exc

    def to_dict(self):
        return {
            "dgp": {"kind": self.dgp.kind, "params": _jsonable(self.dgp.params), "path": self.dgp.path},
            "methods": [m.value for m in self.methods],
            "n_train": self.n_train,
            "n_holdout": self.n_holdout,
            "replications": self.replications,
            "alpha": self.alpha,
            "discovery_threshold": self.discovery_threshold,
            "seed": self.seed,
            "tree": dataclasses.asdict(self.tree),
            "forest": dataclasses.asdict(self.forest),
            "sparsity": self.sparsity,
            "epsilon": self.epsilon,
            "honest_fraction": self.honest_fraction,
            "honest_centering": self.honest_centering,
            "evaluation_centering": self.evaluation_centering,
            "propensity": self.propensity,
        }


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, np.ndarray)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


# ---------------------------------------------------------------------------
# report
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ReplicationRow:
    method: str
    replication: int
    p_value: float = float("nan")
    t_stat: float = float("nan")
    estimate: float = float("nan")
    treated_fraction: float = float("nan")
    treated_covariate_mean: float = float("nan")
    null_policy: bool = False
    degenerate: bool = False
    failed: bool = False
    error: str = ""


ROW_FIELDS = tuple(f.name for f in dataclasses.fields(ReplicationRow))
SUMMARY_FIELDS = (
    "method",
    "n_ok",
    "n_failed",
    "median_p",
    "mean_neg_log10_p",
    "discovery_rate",
    "rejection_rate",
    "mean_treated_fraction",
)


def neg_log10_p(row):
    """``-log10 p`` with ``p`` capped at 1e-300; null policies contribute 0."""
    if row.null_policy:
        return 0.0
    return -math.log10(max(row.p_value, NEG_LOG_P_FLOOR))


def summarize(rows, methods, alpha, discovery_threshold):
    """Per-method aggregates over the non-failed rows."""
    out = {}
    for m in methods:
        ok = [r for r in rows if r.method == m and not r.failed]
        failed = sum(1 for r in rows if r.method == m and r.failed)
        if ok:
            p = np.array([r.p_value for r in ok])
            agg = {
                "n_ok": len(ok),
                "n_failed": failed,
                "median_p": float(np.median(p)),
                "mean_neg_log10_p": float(np.mean([neg_log10_p(r) for r in ok])),
                "discovery_rate": float(np.mean(p <= discovery_threshold)),
                "rejection_rate": float(np.mean(p <= alpha)),
                "mean_treated_fraction": float(np.mean([r.treated_fraction for r in ok])),
            }
        else:
            agg = {"n_ok": 0, "n_failed": failed}
            agg.update({k: float("nan") for k in SUMMARY_FIELDS[3:]})
        out[m] = agg
    return out


@dataclass(frozen=True)
class ExperimentReport:
    rows: tuple
    methods: tuple
    alpha: float = 0.05
    discovery_threshold: float = 1e-3
    config: dict = field(default_factory=dict)

    def summary(self):
        return summarize(self.rows, self.methods, self.alpha, self.discovery_threshold)

    def rows_for(self, method):
        method = BenchmarkKind(method).value
        return [r for r in self.rows if r.method == method]

    def discovery_rate(self, method):
        return self.summary()[BenchmarkKind(method).value]["discovery_rate"]

    def rejection_rate(self, method):
        return self.summary()[BenchmarkKind(method).value]["rejection_rate"]


# ---------------------------------------------------------------------------
# running
# ---------------------------------------------------------------------------


def _draw(config, rep, source=None):
    """Training and hold-out samples for one replication."""
    seed = derive_seed(config.seed, rep, "data")
    dgp = config.dgp
    n_tr, n_ho = config.n_train, config.n_holdout
    if dgp.kind == "csv":
        if n_tr + n_ho > source.n:
            raise ConfigError(f"n_train + n_holdout = {n_tr + n_ho} exceeds the {source.n} CSV rows")
        perm = make_rng(seed, "split").permutation(source.n)
        return source.subset(perm[:n_tr]), source.subset(perm[n_tr : n_tr + n_ho])
    params = dgp.build()
    if dgp.kind == "three_region":
        return (
            generate_three_region(params, n_tr, derive_seed(seed, "train")),
            generate_three_region(params, n_ho, derive_seed(seed, "holdout")),
        )
    if dgp.kind == "group":
        # one draw so both samples share the hidden features and thresholds
        full = dataclasses.replace(params, sample_count=n_tr + n_ho)
        data = generate_group_structure(full, seed)
        return data.subset(np.arange(n_tr)), data.subset(np.arange(n_tr, n_tr + n_ho))
    # cell designs fix their own sizes through samples_per_cell
    return generate_cell_dgp(params, derive_seed(seed, "train")), generate_cell_dgp(
        params, derive_seed(seed, "holdout")
    )


def _honest_split(train, rep, config):
    perm = make_rng(config.seed, rep, "honest_split").permutation(train.n)
    k = int(round(config.honest_fraction * train.n))
    return train.subset(np.sort(perm[:k])), train.subset(np.sort(perm[k:]))


def _centering(fold, kind, seed, forest):
    return fit_honest_centering(fold, seed, forest, kind)


def _evaluate(method, rep, policy, eval_centering, holdout, config):
    res = holdout_test(policy, eval_centering, holdout, config.alpha, config.propensity)
    a = as_mask(policy, holdout.covariates)
    treated = a > 0
    cov_mean = float(np.mean(holdout.covariates[treated, 0])) if np.any(treated) else float("nan")
    return ReplicationRow(
        method=method.value,
        replication=rep,
        p_value=float(res.p_value),
        t_stat=float(res.t_statistic),
        estimate=float(res.estimate),
        treated_fraction=float(np.mean(a)),
        treated_covariate_mean=cov_mean,
        null_policy=bool(res.null_policy),
        degenerate=bool(res.degenerate),
    )


def run_replication(config, rep, source=None):
    """All method rows for one replication, in config method order."""
    train, holdout = _draw(config, rep, source)
    eval_centering = _centering(
        train, config.evaluation_centering, derive_seed(config.seed, rep, "eval_centering"), config.forest
    )
    honest = None
    rows = []
    for method in config.methods:
        try:
            learn, centering = train, None
            if method in HONEST_METHODS:
                if honest is None:
                    c_fold, l_fold = _honest_split(train, rep, config)
                    c_model = _centering(
                        c_fold,
                        config.honest_centering,
                        derive_seed(config.seed, rep, "honest_centering"),
                        config.forest,
                    )
                    honest = (l_fold, c_model)
                learn, centering = honest
            fit_seed = derive_seed(config.seed, rep, method.value, "fit")
            policy = fit_method(
                method,
                learn,
                centering,
                params=dataclasses.replace(config.tree, seed=fit_seed),
                seed=fit_seed,
                forest=config.forest,
                sparsity=config.sparsity,
                epsilon=config.epsilon,
            )
            rows.append(_evaluate(method, rep, policy, eval_centering, holdout, config))
        except Exception as exc:  # a failed method is recorded, the run continues
            rows.append(
                ReplicationRow(method.value, rep, failed=True, error=f"{type(exc).__name__}: {exc}")
            )
    return rows


def run_experiment(config, threads=1):
    """Run every replication and collect an :class:`ExperimentReport`."""
    source = load_csv(config.dgp.path) if config.dgp.kind == "csv" else None
    reps = range(config.replications)
    if threads and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            chunks = list(pool.map(lambda r: run_replication(config, r, source), reps))
    else:
        chunks = [run_replication(config, r, source) for r in reps]
    order = {m.value: i for i, m in enumerate(config.methods)}
    rows = sorted((r for c in chunks for r in c), key=lambda r: (order[r.method], r.replication))
    return ExperimentReport(
        tuple(rows),
        tuple(m.value for m in config.methods),
        config.alpha,
        config.discovery_threshold,
        config.to_dict(),
    )


# ---------------------------------------------------------------------------
# two-learner comparison on cell designs
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Prop2Config:
    """Cell design for comparing the sign rule with the ratio maximiser.

    ``premise_c``, when given, requires ``min sigma^2 <= 1/C`` and
    ``max sigma^2 >= C`` for the noise variances.
    """

    cell: CellDGPConfig
    replications: int = 500
    alpha: float = 0.05
    seed: int = 0
    epsilon: float = 1e-3
    centering: str = "regression_tree"
    premise_c: float = None

    def __post_init__(self):
        if self.replications < 1:
            raise ConfigError("replications must be at least 1")
        if not 0.0 < self.alpha < 1.0:
            raise ConfigError("alpha must lie in (0, 1)")
        if self.premise_c is not None:
            var = np.square(self.cell.cell_noise_sd)
            c = float(self.premise_c)
            if not (var.min() <= 1.0 / c and var.max() >= c):
                raise ConfigError(
                    f"noise variances {var.tolist()} do not satisfy min <= 1/{c} and max >= {c}"
                )

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        try:
            cell = d.pop("cell", None)
            if cell is None:
                cell = {k: d.pop(k) for k in ("cell_effects", "cell_noise_sd", "samples_per_cell", "treat_probability") if k in d}
            return cls(CellDGPConfig(**cell), **d)
        except (TypeError, DatasetError) as exc:
            raise ConfigError(str(exc)) from exc

    def to_dict(self):
        return {"cell": dataclasses.asdict(self.cell), **{
            k: getattr(self, k) for k in ("replications", "alpha", "seed", "epsilon", "centering", "premise_c")
        }}


@dataclass(frozen=True)
class Prop2Report:
    sign_rule_p: tuple
    ratio_p: tuple
    alpha: float
    config: dict = field(default_factory=dict)

    @property
    def sign_rule_rejection(self):
        return float(np.mean(np.asarray(self.sign_rule_p) <= self.alpha))

    @property
    def ratio_rejection(self):
        return float(np.mean(np.asarray(self.ratio_p) <= self.alpha))

    def to_dict(self):
        return {
            "config": self.config,
            "alpha": self.alpha,
            "sign_rule_rejection": self.sign_rule_rejection,
            "ratio_rejection": self.ratio_rejection,
            "sign_rule_p": list(self.sign_rule_p),
            "ratio_p": list(self.ratio_p),
        }


def sign_rule_policy(cells, pseudo):
    """Treat each cell whose mean pseudo-outcome is positive."""
    stats = CellStatistics.from_pseudo(cells, pseudo)
    return CellTablePolicy({int(c): float(w > 0) for c, w in zip(stats.cell_ids, stats.w)})


def ratio_policy(cells, pseudo, epsilon=1e-3):
    """Treat the cell subset maximising ``w(S) / sqrt(v(S))``."""
    stats = CellStatistics.from_pseudo(cells, pseudo)
    chosen = set(bisection_solve(stats, epsilon).selected)
    return CellTablePolicy({int(c): float(c in chosen) for c in stats.cell_ids})


def _prop2_rep(config, rep):
    seed = derive_seed(config.seed, rep, "data")
    train = generate_cell_dgp(config.cell, derive_seed(seed, "train"))
    holdout = generate_cell_dgp(config.cell, derive_seed(seed, "holdout"))
    centering = fit_centering(train, config.centering, None, seed=derive_seed(config.seed, rep, "centering"))
    table = pseudo_outcomes(train, centering)
    cells = train.covariates[:, 0].astype(np.int64)
    a = sign_rule_policy(cells, table.pseudo)
    b = ratio_policy(cells, table.pseudo, config.epsilon)
    pa = holdout_test(a, centering, holdout, config.alpha).p_value
    pb = holdout_test(b, centering, holdout, config.alpha).p_value
    return float(pa), float(pb)


def run_prop2_comparison(config, threads=1):
    """Hold-out rejection rates of the sign rule and the ratio maximiser."""
    critical_value(config.alpha)
    reps = range(config.replications)
    if threads and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            out = list(pool.map(lambda r: _prop2_rep(config, r), reps))
    else:
        out = [_prop2_rep(config, r) for r in reps]
    pa, pb = zip(*out)
    return Prop2Report(tuple(pa), tuple(pb), config.alpha, config.to_dict())


# ---------------------------------------------------------------------------
# serialisation
# ---------------------------------------------------------------------------


def _fmt(v):
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _json_num(v):
    if isinstance(v, float) and not math.isfinite(v):
        return repr(v)  # "inf", "-inf", "nan"
    return v


def _atomic_write(path, text):
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(prefix=".tmp-", dir=directory)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def report_to_csv(report):
    """Rows first, then a blank line and a summary block with its own header."""
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(ROW_FIELDS)
    for r in report.rows:
        wr.writerow([_fmt(getattr(r, f)) for f in ROW_FIELDS])
    if report.rows:
        buf.write("\n")
        wr.writerow(SUMMARY_FIELDS)
        for m, agg in report.summary().items():
            wr.writerow([m] + [_fmt(agg[k]) for k in SUMMARY_FIELDS[1:]])
    return buf.getvalue()


def report_to_dict(report):
    return {
        "config": report.config,
        "methods": list(report.methods),
        "alpha": report.alpha,
        "discovery_threshold": report.discovery_threshold,
        "rows": [{f: _json_num(getattr(r, f)) for f in ROW_FIELDS} for r in report.rows],
        "summary": {m: {k: _json_num(v) for k, v in agg.items()} for m, agg in report.summary().items()},
    }


def emit_report(report, fmt, path):
    """Write ``report`` as ``csv`` or ``json``; the file is replaced atomically."""
    if fmt == "csv":
        text = report_to_csv(report)
    elif fmt == "json":
        text = json.dumps(report_to_dict(report), indent=2) + "\n"
    else:
        raise ValueError(f"unknown report format {fmt!r}")
    _atomic_write(path, text)


_ROW_TYPES = {f.name: f.type for f in dataclasses.fields(ReplicationRow)}


def _parse_row(d):
    out = {}
    for k in ROW_FIELDS:
        v = d[k]
        t = _ROW_TYPES[k]
        if t is bool:
            out[k] = v in (True, 1, "1", "True", "true")
        elif t is int:
            out[k] = int(v)
        elif t is float:
            out[k] = float(v)
        else:
            out[k] = "" if v is None else str(v)
    return ReplicationRow(**out)


def read_report(path, alpha=0.05, discovery_threshold=1e-3):
    """Parse a report written by :func:`emit_report` (format chosen by content).

    CSV files do not carry ``alpha`` or the discovery threshold, so they are
    taken from the arguments.
    """
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    if text.lstrip().startswith("{"):
        d = json.loads(text)
        rows = tuple(_parse_row(r) for r in d["rows"])
        return ExperimentReport(rows, tuple(d["methods"]), d["alpha"], d["discovery_threshold"], d["config"])
    block = text.split("\n\n", 1)[0]
    reader = csv.DictReader(io.StringIO(block))
    rows = tuple(_parse_row(r) for r in reader)
    methods = tuple(dict.fromkeys(r.method for r in rows))
    return ExperimentReport(rows, methods, alpha, discovery_threshold)
