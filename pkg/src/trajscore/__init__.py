"""Scoring and selection of teacher reasoning traces for a student model.

The core quantity is the rank-surprisal ratio (RSR): the sum of clipped
student ranks over the sum of student surprisals across a trace's tokens.
The package also ships baseline metrics, trajectory and teacher selection,
a two-distribution mixture simulation, and correlation analyses against a
fixed post-training evaluation.
"""

from .records import (
    MetricError,
    SchemaError,
    ScoreTable,
    TokenStat,
    TrajectoryDataset,
    TrajectoryRecord,
    ValidationReport,
    Violation,
    validate_dataset,
)
from .io import (
    load_dataset,
    parse_token_stats,
    read_manifest,
    serialize_dataset,
    validate_file,
    write_manifest,
)
from .metrics import (
    DEFAULT_FILTER_H,
    DEFAULT_R_MAX,
    TRAJECTORY_METRICS,
    avg_rank,
    avg_surprisal,
    avg_token_rsr,
    clip_rank,
    dataset_metric_value,
    dataset_rsr,
    filtered_avg_token_rsr,
    metric_params,
    token_rsr,
    trajectory_metric,
    trajectory_rsr,
    weighted_avg_token_rsr,
)
from .quality import (
    RuleQualityConfig,
    avg_token_length,
    rule_based_quality,
    verified_accuracy,
)
from .correlate import (
    CorrelationReport,
    PerformanceTable,
    correlate_table,
    load_all_fixture_scores,
    load_fixture_performance,
    load_fixture_scores,
    pearson,
    spearman,
)
from .select import (
    CandidatePool,
    RankedTeacher,
    SelectionManifest,
    correctness_filtered_select,
    rank_teachers,
    sample_for_teacher,
    select_trajectories,
)
from .simulate import SimulationConfig, SimulationReport, run_simulation

__version__ = "1.0.0"

__all__ = [
    "__version__",
    "MetricError",
    "SchemaError",
    "ScoreTable",
    "TokenStat",
    "TrajectoryDataset",
    "TrajectoryRecord",
    "ValidationReport",
    "Violation",
    "validate_dataset",
    "load_dataset",
    "parse_token_stats",
    "read_manifest",
    "serialize_dataset",
    "validate_file",
    "write_manifest",
    "DEFAULT_FILTER_H",
    "DEFAULT_R_MAX",
    "TRAJECTORY_METRICS",
    "avg_rank",
    "avg_surprisal",
    "avg_token_rsr",
    "clip_rank",
    "dataset_metric_value",
    "dataset_rsr",
    "filtered_avg_token_rsr",
    "metric_params",
    "token_rsr",
    "trajectory_metric",
    "trajectory_rsr",
    "weighted_avg_token_rsr",
    "RuleQualityConfig",
    "avg_token_length",
    "rule_based_quality",
    "verified_accuracy",
    "CorrelationReport",
    "PerformanceTable",
    "correlate_table",
    "load_all_fixture_scores",
    "load_fixture_performance",
    "load_fixture_scores",
    "pearson",
    "spearman",
    "CandidatePool",
    "RankedTeacher",
    "SelectionManifest",
    "correctness_filtered_select",
    "rank_teachers",
    "sample_for_teacher",
    "select_trajectories",
    "SimulationConfig",
    "SimulationReport",
    "run_simulation",
]
