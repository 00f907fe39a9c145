"""Treatment-policy learning that targets the power of a hold-out significance test."""
from .benchmarks import BenchmarkKind, fit_all, fit_cate, fit_classifier, fit_method
from .centering import CenteringKind, CenteringModel, fit_centering, predict_centering
from .dataset import (
    CellDGPConfig,
    DatasetError,
    GroupStructureDGPConfig,
    ThreeRegionDGPConfig,
    TrialDataset,
    generate_cell_dgp,
    generate_group_structure,
    generate_three_region,
    load_csv,
    write_csv,
)
from .experiments import (
    ConfigError,
    ExperimentConfig,
    ExperimentReport,
    Prop2Config,
    emit_report,
    read_report,
    run_experiment,
    run_prop2_comparison,
)
from .model_based import ModelBasedPolicy, fit_level_split_tree, fit_model_based_policy
from .oracle import (
    OracleSpec,
    constrained_objective,
    oracle_power,
    oracle_t,
    relabel_reference,
    relaxed_optimum,
)
from .ratio_opt import CellStatistics, bisection_solve, inner_minimize, ratio_prefix_fast_path
from .scoring import (
    DegenerateStatisticError,
    TestResult,
    holdout_test,
    normalized_objective,
    pseudo_outcomes,
    t_statistic,
    value_centered,
    value_dr,
    value_ips,
)
from .tree_policy import PolicyTree, TreeParams, apply_policy, fit_evidence_tree, fit_relaxed_tree

__version__ = "0.1.0"
