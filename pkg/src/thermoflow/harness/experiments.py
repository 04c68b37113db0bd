"""Evaluation drivers shared by the CLI, tests and demo scripts."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..network.model import ModelParams, predict
from ..physics import WindowSet
from ..synth import NoiseSpec, inject_noise
from ..tvd import is_anomalous
from .metrics import ConfusionCounts, MetricsReport, compute_metrics

STRESS_LEVELS = (0.0, 0.05, 0.10, 0.15)


def evaluate(params: ModelParams, windows: WindowSet) -> MetricsReport:
    """Metrics of the combined verdict (classifier OR entropy flag) on labeled windows.

    ROC-AUC is computed from the classifier probability alone.
    """
    _, probs, ents = predict(windows.data, params)
    verdict = (probs >= 0.5) | is_anomalous(ents, params.tvd)
    counts = ConfusionCounts.from_predictions(windows.labels, verdict)
    return compute_metrics(counts, probs, windows.labels)


@dataclass(frozen=True)
class StressRow:
    level: float
    f1: float
    tpr: float
    fpr: float


def stress(
    params: ModelParams,
    windows: WindowSet,
    levels=STRESS_LEVELS,
    columns=("iat",),
    seed: int = 0,
) -> list[StressRow]:
    """F1 of the model under Gaussian feature noise at each level."""
    rows = []
    for level in levels:
        noisy = inject_noise(windows, NoiseSpec(float(level), tuple(columns), seed))
        rep = evaluate(params, noisy)
        rows.append(StressRow(float(level), rep.f1, rep.tpr, rep.fpr))
    return rows


def format_stress(rows, sep: str = "\t") -> str:
    lines = [sep.join(("noise", "f1", "tpr", "fpr"))]
    lines += [sep.join((f"{r.level:.2f}", f"{r.f1:.6f}", f"{r.tpr:.6f}", f"{r.fpr:.6f}")) for r in rows]
    return "\n".join(lines) + "\n"


def benign_subset(windows: WindowSet) -> WindowSet:
    return windows.subset(np.flatnonzero(windows.labels == 0))
