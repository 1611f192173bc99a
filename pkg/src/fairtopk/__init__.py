"""Recall-equalized top-k selection and fairness-aware model selection."""
from .cohort import GroupStats, PredictionRecord, PredictionSet, compute_group_stats, parse_predictions, write_predictions
from .errors import DomainError, FairTopKError, InputError
from .metrics import EvaluationReport, RankedList, RecallCurve, disparity_ratios, precision_at_k, rank, recall_curve
from .mitigation import (
    EqualizedAllocation,
    RecallEqualizer,
    ScaledScoreParams,
    apply_allocation,
    equalize_allocation,
    lambda_from_thresholds,
    scaled_scores,
)
from .selection import (
    STRATEGIES,
    StrategyOutcome,
    select_mitigated_composite,
    select_mitigated_single,
    select_mitigated_unadjusted,
    select_unmitigated,
)
from .temporal import SplitConfig, TemporalSplit, bind_cohorts, generate_splits

__version__ = "0.1.0"

__all__ = [
    "GroupStats",
    "PredictionRecord",
    "PredictionSet",
    "compute_group_stats",
    "parse_predictions",
    "write_predictions",
    "DomainError",
    "FairTopKError",
    "InputError",
    "EvaluationReport",
    "RankedList",
    "RecallCurve",
    "disparity_ratios",
    "precision_at_k",
    "rank",
    "recall_curve",
    "EqualizedAllocation",
    "RecallEqualizer",
    "ScaledScoreParams",
    "apply_allocation",
    "equalize_allocation",
    "lambda_from_thresholds",
    "scaled_scores",
    "STRATEGIES",
    "StrategyOutcome",
    "select_mitigated_composite",
    "select_mitigated_single",
    "select_mitigated_unadjusted",
    "select_unmitigated",
    "SplitConfig",
    "TemporalSplit",
    "bind_cohorts",
    "generate_splits",
]
