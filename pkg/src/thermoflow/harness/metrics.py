"""Confusion-matrix metrics, ROC-AUC and threshold sweeps."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from ..errors import DegenerateClass

REPORT_VERSION = 1


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    tn: int
    fn: int

    def __post_init__(self):
        if min(self.tp, self.fp, self.tn, self.fn) < 0:
            raise ValueError("confusion counts must be non-negative")

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    @classmethod
    def from_predictions(cls, labels, predicted) -> "ConfusionCounts":
        y = np.asarray(labels) == 1
        p = np.asarray(predicted, dtype=bool)
        return cls(int(np.sum(p & y)), int(np.sum(p & ~y)), int(np.sum(~p & ~y)), int(np.sum(~p & y)))


@dataclass
class MetricsReport:
    counts: ConfusionCounts
    tpr: float
    fpr: float
    precision: float
    f1: float
    roc_auc: float | None = None
    sweep: list[tuple[float, float, float, float]] = field(default_factory=list)  # (threshold, tpr, fpr, f1)

    def to_json(self) -> str:
        d = asdict(self)
        d["version"] = REPORT_VERSION
        return json.dumps(d, indent=2)

    def to_text(self, sep: str = "\t") -> str:
        c = self.counts
        rows = [
            ("tp", c.tp), ("fp", c.fp), ("tn", c.tn), ("fn", c.fn),
            ("tpr", f"{self.tpr:.6f}"), ("fpr", f"{self.fpr:.6f}"),
            ("precision", f"{self.precision:.6f}"), ("f1", f"{self.f1:.6f}"),
            ("roc_auc", "nan" if self.roc_auc is None else f"{self.roc_auc:.6f}"),
        ]
        return "\n".join(f"{k}{sep}{v}" for k, v in rows) + "\n"


def roc_auc(scores, labels) -> float:
    """Area under the ROC curve by the trapezoid rule; tied scores share one step."""
    scores = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels) == 1
    pos, neg = int(y.sum()), int((~y).sum())
    if pos == 0 or neg == 0:
        raise DegenerateClass("ROC needs both classes")
    order = np.argsort(-scores, kind="mergesort")
    s, yy = scores[order], y[order]
    # cut points after the last member of each tie group
    last = np.r_[np.flatnonzero(np.diff(s) != 0), s.size - 1]
    tps = np.cumsum(yy)[last]
    fps = np.cumsum(~yy)[last]
    tpr = np.r_[0.0, tps / pos]
    fpr = np.r_[0.0, fps / neg]
    return float(np.sum(np.diff(fpr) * (tpr[1:] + tpr[:-1]) / 2.0))


def threshold_sweep(scores, labels, thresholds=None) -> list[tuple[float, float, float, float]]:
    scores = np.asarray(scores, dtype=np.float64)
    if thresholds is None:
        thresholds = np.linspace(0.05, 0.95, 19)
    out = []
    for t in thresholds:
        c = ConfusionCounts.from_predictions(labels, scores >= t)
        tpr = c.tp / (c.tp + c.fn) if c.tp + c.fn else 0.0
        fpr = c.fp / (c.fp + c.tn) if c.fp + c.tn else 0.0
        f1 = 2 * c.tp / (2 * c.tp + c.fp + c.fn) if c.tp + c.fp + c.fn else 1.0
        out.append((float(t), tpr, fpr, f1))
    return out


def compute_metrics(c: ConfusionCounts, scores=None, labels=None) -> MetricsReport:
    """TPR, FPR, precision and F1 from counts; ROC-AUC and a sweep when scores are given."""
    if c.tp + c.fn == 0 or c.fp + c.tn == 0:
        raise DegenerateClass("metrics need at least one positive and one negative sample")
    precision = c.tp / (c.tp + c.fp) if c.tp + c.fp else 0.0
    report = MetricsReport(
        counts=c,
        tpr=c.tp / (c.tp + c.fn),
        fpr=c.fp / (c.fp + c.tn),
        precision=precision,
        f1=2 * c.tp / (2 * c.tp + c.fp + c.fn),
    )
    if scores is not None and labels is not None:
        report.roc_auc = roc_auc(scores, labels)
        report.sweep = threshold_sweep(scores, labels)
    return report
