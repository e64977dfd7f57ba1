"""Treatment effect detection across many outcome dimensions.

Randomized-experiment data with a high-dimensional outcome vector: estimate
per-dimension effects with optional covariate adjustment, select the few
dimensions that carry the effect via a weighted treatment-on-outcomes
regression, and test the selected subset on held-out data with sample
splitting and p-value aggregation.
"""

from .data import (
    CsvSchema,
    SplitPair,
    TrialDataset,
    aggregate_columns,
    center_columns,
    load_csv,
    random_split,
    split_indices,
    write_csv,
)
from .errors import DataError, HdteError, NumericalError
from .estimators import (
    AdjustedOutcomes,
    EffectEstimate,
    adjusted_estimate,
    cuped_adjust,
    diff_in_means,
    lin_adjust,
)
from .inference import (
    MultiSplitReport,
    PValueReport,
    SelectionSpec,
    aggregate_pvalues,
    hotelling_pvalue,
    hotelling_statistic,
    multi_split,
    single_split_pipeline,
    split_seeds,
    z_pvalues,
)
from .selection import (
    PopulationTarget,
    SelectionResult,
    baseline_select,
    hard_threshold_select,
    path_selections,
    population_beta_star,
    select_resolution_level,
    sparse_select,
)
from .simharness import (
    ExperimentMetrics,
    IndependentOutcomesGenerator,
    LinearModelConfig,
    LinearModelGenerator,
    TraceExperimentConfig,
    apply_window_effect,
    compute_tir,
    gen_glucose_traces,
    gen_independent_outcomes,
    gen_linear_model,
    run_power_experiment,
    run_recovery_experiment,
    run_semisynth_experiment,
    window_level_groupings,
    write_metrics_csv,
)
from .wlasso import (
    EnetConfig,
    EnetFit,
    EnetPath,
    RegressionWeights,
    fit_weighted_enet,
    lambda_max,
    propensity_weights,
    regularization_path,
    soft_threshold,
    subset_weighted_rss,
)

__version__ = "0.1.0"

__all__ = [
    "AdjustedOutcomes",
    "CsvSchema",
    "DataError",
    "EffectEstimate",
    "EnetConfig",
    "EnetFit",
    "EnetPath",
    "ExperimentMetrics",
    "HdteError",
    "IndependentOutcomesGenerator",
    "LinearModelConfig",
    "LinearModelGenerator",
    "MultiSplitReport",
    "NumericalError",
    "PValueReport",
    "PopulationTarget",
    "RegressionWeights",
    "SelectionResult",
    "SelectionSpec",
    "SplitPair",
    "TraceExperimentConfig",
    "TrialDataset",
    "adjusted_estimate",
    "aggregate_columns",
    "aggregate_pvalues",
    "apply_window_effect",
    "baseline_select",
    "center_columns",
    "compute_tir",
    "cuped_adjust",
    "diff_in_means",
    "fit_weighted_enet",
    "gen_glucose_traces",
    "gen_independent_outcomes",
    "gen_linear_model",
    "hard_threshold_select",
    "hotelling_pvalue",
    "hotelling_statistic",
    "lambda_max",
    "lin_adjust",
    "load_csv",
    "multi_split",
    "path_selections",
    "population_beta_star",
    "propensity_weights",
    "random_split",
    "regularization_path",
    "run_power_experiment",
    "run_recovery_experiment",
    "run_semisynth_experiment",
    "select_resolution_level",
    "single_split_pipeline",
    "soft_threshold",
    "sparse_select",
    "split_indices",
    "split_seeds",
    "subset_weighted_rss",
    "window_level_groupings",
    "write_csv",
    "write_metrics_csv",
    "z_pvalues",
]
