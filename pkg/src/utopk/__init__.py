"""utopk: exactly-k multi-label prediction optimizing confusion-matrix utilities.

Given per-instance marginal label-probability estimates, the package computes
prediction sets of exactly k labels per instance that maximize expected task
utilities (macro-averaged, instance-wise weighted, or mixtures), evaluates
the resulting predictions against ground truth, and ships exhaustive oracles
for verifying every strategy on small instances.
"""

from .data import (
    CapabilityError,
    FailureProbVector,
    FormatError,
    PredictionRow,
    RunningStats,
    SparseRowMatrix,
    failure_from_scratch,
    failure_swap_row,
    load_sparse_matrix,
    load_vector,
    matrix_to_predictions,
    predictions_to_matrix,
    save_sparse_matrix,
    save_vector,
    stats_from_scratch,
    stats_swap_row,
)
from .evaluation import EvalReport, evaluate
from .inference import (
    InferenceConfig,
    InferenceReport,
    bca_coverage_infer,
    bca_infer,
    coverage_expected_utility,
    etu_objective_exact,
    greedy_coverage_infer,
    greedy_infer,
    select_top_k,
    semi_etu_objective,
    top_k_infer,
    weighted_topk_infer,
)
from .labeltree import (
    GainSpec,
    LabelTree,
    astar_top_k,
    exhaustive_top_k,
    load_label_tree,
    load_node_scores,
    macro_precision_gain,
    path_prob,
    save_label_tree,
    weighted_gain,
)
from .metrics import (
    LipschitzProfile,
    MetricSpec,
    WeightScheme,
    coverage,
    etu_gap_bound,
    hamming,
    instance_precision,
    lipschitz_profile,
    log_scheme,
    macro_fbeta,
    macro_precision,
    macro_recall,
    mixed,
    parse_metric,
    power_law_scheme,
    propensity_scheme,
    psi_eval,
    task_utility,
    weight_compute,
    weighted_instance,
)
from .oracle import OracleResult, brute_force_etu, brute_force_semi_etu, local_opt_check
from .synth import SyntheticSpec, generate_synthetic, label_priors

__version__ = "0.1.0"
