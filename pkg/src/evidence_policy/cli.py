"""Command-line entry point.

Exit codes: 0 success, 2 configuration error, 3 runtime failure.
"""
import argparse
import json
import os
import sys

from .benchmarks import fit_honest_centering
from .dataset import (
    CellDGPConfig,
    DatasetError,
    GroupStructureDGPConfig,
    ThreeRegionDGPConfig,
    generate_cell_dgp,
    generate_group_structure,
    generate_three_region,
    load_csv,
    write_csv,
)
from .experiments import (
    ConfigError,
    ExperimentConfig,
    Prop2Config,
    _atomic_write,
    emit_report,
    run_experiment,
    run_prop2_comparison,
)
from .model_based import fit_model_based_policy
from .scoring import pseudo_outcomes
from .tree_policy import TreeParams, fit_evidence_tree, fit_relaxed_tree

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3


def _load_json_arg(value):
    """Accept a path to a JSON file or an inline JSON document."""
    if value is None:
        return {}
    if os.path.exists(value):
        with open(value, encoding="utf-8") as fh:
            text = fh.read()
    else:
        text = value
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"cannot parse JSON from {value!r}: {exc}") from exc


def _cmd_run(args):
    config = ExperimentConfig.from_dict(_load_json_arg(args.config))
    report = run_experiment(config, threads=args.threads)
    emit_report(report, args.format, args.out)
    for m, agg in report.summary().items():
        print(
            f"{m}: discovery={agg['discovery_rate']:.3f} rejection={agg['rejection_rate']:.3f} "
            f"median_p={agg['median_p']:.3g} failed={agg['n_failed']}"
        )


def _cmd_gen_data(args):
    params = _load_json_arg(args.params)
    try:
        if args.dgp == "three-region":
            data = generate_three_region(ThreeRegionDGPConfig(**params), args.n or 2000, args.seed)
        elif args.dgp == "group":
            if args.n:
                params["sample_count"] = args.n
            data = generate_group_structure(GroupStructureDGPConfig(**params), args.seed)
        else:
            if args.n:
                k = len(params.get("cell_effects", ()))
                if k == 0 or args.n % k:
                    raise ConfigError("--n must be a multiple of the number of cells")
                params["samples_per_cell"] = args.n // k
            data = generate_cell_dgp(CellDGPConfig(**params), args.seed)
    except (TypeError, DatasetError) as exc:
        raise ConfigError(str(exc)) from exc
    write_csv(data, args.out)


def _cmd_prop2(args):
    config = Prop2Config.from_dict(_load_json_arg(args.params))
    report = run_prop2_comparison(config, threads=args.threads)
    _atomic_write(args.out, json.dumps(report.to_dict(), indent=2) + "\n")
    print(f"sign_rule={report.sign_rule_rejection:.3f} ratio={report.ratio_rejection:.3f}")


def _cmd_fit(args):
    try:
        params = TreeParams(**_load_json_arg(args.params))
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc
    data = load_csv(args.data)
    centering = None
    if args.centering:
        centering = fit_honest_centering(load_csv(args.centering), params.seed)
    if args.method == "submod":
        if centering is None:
            raise ConfigError("submod needs --centering with a disjoint CSV fold")
        policy = fit_model_based_policy(data, centering).policy
    else:
        table = pseudo_outcomes(data, centering)
        fit = fit_relaxed_tree if args.method == "relaxed" else fit_evidence_tree
        policy = fit(table, data.covariates, params)
    _atomic_write(args.out, policy.to_json(indent=2) + "\n")


def build_parser():
    p = argparse.ArgumentParser(prog="evidence-policy", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run a replication experiment")
    r.add_argument("--config", required=True, help="JSON file or inline JSON")
    r.add_argument("--out", required=True)
    r.add_argument("--format", choices=("csv", "json"), default="csv")
    r.add_argument("--threads", type=int, default=1)
    r.set_defaults(func=_cmd_run)

    g = sub.add_parser("gen-data", help="write a synthetic dataset as CSV")
    g.add_argument("--dgp", choices=("three-region", "group", "cell"), required=True)
    g.add_argument("--params", default=None, help="JSON file or inline JSON")
    g.add_argument("--n", type=int, default=None)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    g.set_defaults(func=_cmd_gen_data)

    q = sub.add_parser("prop2", help="sign rule vs ratio maximiser on a cell design")
    q.add_argument("--params", required=True, help="JSON file or inline JSON")
    q.add_argument("--out", required=True)
    q.add_argument("--threads", type=int, default=1)
    q.set_defaults(func=_cmd_prop2)

    f = sub.add_parser("fit", help="fit one policy on a CSV and write its JSON")
    f.add_argument("--data", required=True)
    f.add_argument("--method", choices=("evidence", "relaxed", "submod"), default="evidence")
    f.add_argument("--centering", default=None, help="CSV fold used only to fit the centering model")
    f.add_argument("--params", default=None, help="tree parameters as JSON")
    f.add_argument("--out", required=True)
    f.set_defaults(func=_cmd_fit)
    return p


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    try:
        args.func(args)
    except (ConfigError, DatasetError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:
        print(f"runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
