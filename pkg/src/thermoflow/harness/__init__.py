"""Evaluation, streaming detection and the command-line interface."""

from .detect import VERDICT_FIELDS, DetectSummary, VerdictLine, detect_stream
from .experiments import STRESS_LEVELS, StressRow, evaluate, format_stress, stress
from .metrics import ConfusionCounts, MetricsReport, compute_metrics, roc_auc, threshold_sweep

__all__ = [
    "VERDICT_FIELDS", "DetectSummary", "VerdictLine", "detect_stream", "STRESS_LEVELS", "StressRow",
    "evaluate", "format_stress", "stress", "ConfusionCounts", "MetricsReport", "compute_metrics",
    "roc_auc", "threshold_sweep",
]
