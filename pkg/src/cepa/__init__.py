"""Clustered equal-predictive-ability testing for forecast panels.

Estimates latent clusters of forecast-loss differentials with Panel
Kmeans, computes selective (post-clustering) p-values from truncated chi
distributions, and combines them with an overall-EPA F-test through
calibrated p-value merging.
"""
from .dists import (
    IntervalUnion,
    chi_cdf,
    chi_survival,
    f_survival,
    standard_normal_stream,
    truncated_chi_survival,
)
from .epa_tests import (
    MergeConfig,
    TestReport,
    cepa_selective,
    composite_from_trace,
    homogeneity_selective,
    merge_pvalues,
    oepa_test,
    split_sample_test,
    wald_fixed_clusters,
)
from .exceptions import CepaError, ConfigError, InputError, NumericalError
from .kmeans import (
    Centers,
    Clustering,
    ClusteringTrace,
    KSelection,
    fit,
    lloyd_run,
    objective,
    select_k_cv,
    select_k_ic,
)
from .lrv import OsLrv, cluster_lrv, cluster_mean_series, default_b, os_lrv
from .panel import (
    LossDifferentialPanel,
    LossPanel,
    TestFunctionSpec,
    apply_test_function,
    build_loss_differentials,
    read_panel_csv,
)
from .selective import (
    PairwiseSelection,
    SelectiveTestResult,
    pairwise_selection,
    perturb,
    selective_p,
    selective_p_center,
    single_center_selection,
    truncation_set,
)
from .simlab import SimConfig, design_config, psi_case1, psi_case2, run_experiment, simulate_panel

__version__ = "0.1.0"

__all__ = [
    "CepaError", "ConfigError", "InputError", "NumericalError",
    "IntervalUnion", "chi_cdf", "chi_survival", "truncated_chi_survival",
    "f_survival", "standard_normal_stream",
    "LossDifferentialPanel", "LossPanel", "TestFunctionSpec",
    "build_loss_differentials", "apply_test_function", "read_panel_csv",
    "Clustering", "Centers", "ClusteringTrace", "KSelection",
    "lloyd_run", "fit", "objective", "select_k_ic", "select_k_cv",
    "OsLrv", "cluster_mean_series", "cluster_lrv", "os_lrv", "default_b",
    "PairwiseSelection", "SelectiveTestResult", "pairwise_selection",
    "single_center_selection", "perturb", "truncation_set",
    "selective_p", "selective_p_center",
    "TestReport", "MergeConfig", "merge_pvalues", "oepa_test",
    "wald_fixed_clusters", "split_sample_test", "cepa_selective",
    "homogeneity_selective", "composite_from_trace",
    "SimConfig", "design_config", "psi_case1", "psi_case2",
    "simulate_panel", "run_experiment",
]
