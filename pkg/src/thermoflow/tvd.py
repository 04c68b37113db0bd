"""Thermodynamic variance detection over per-position hidden-state scores.

A window's SSM outputs are reduced to one score per packet position, turned
into a distribution with a softmax across positions, and summarized by its
Shannon entropy in bits. Rigid traffic is flagged when that entropy falls more
than ``tau_threshold`` below the benign baseline.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dynamics import reduce_scores
from .errors import NotADistribution

LN2 = np.log(2.0)
DEFAULT_TAU = 0.12
DEFAULT_LAMBDA = 0.1
DEFAULT_MOMENTUM = 0.99


@dataclass
class TvdConfig:
    baseline_entropy: float = 0.0
    tau_threshold: float = DEFAULT_TAU
    lam: float = DEFAULT_LAMBDA

    def __post_init__(self):
        if self.tau_threshold <= 0:
            raise ValueError("tau_threshold must be positive")
        if self.baseline_entropy < 0:
            raise ValueError("baseline entropy cannot be negative")


@dataclass(frozen=True)
class TvdResult:
    entropy: float
    score: float
    anomaly: bool

    @property
    def flag(self) -> str:
        return "anomaly" if self.anomaly else "benign"


def position_softmax(scores):
    """Max-shifted softmax along the last axis."""
    s = np.asarray(scores)
    e = np.exp(s - s.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def shannon_entropy(p, check: bool = True):
    """Entropy in bits along the last axis, with ``0 log 0 = 0``."""
    p = np.asarray(p)
    if check:
        if np.any(p < 0) or np.any(np.abs(p.sum(axis=-1) - 1.0) > 1e-9):
            raise NotADistribution("probabilities must be non-negative and sum to 1")
    logs = np.log2(np.where(p > 0, p, 1.0))
    return -np.sum(p * logs, axis=-1)


def entropy_of_scores(scores):
    # float32 softmax sums can miss 1 by more than 1e-9, so skip the check here
    return shannon_entropy(position_softmax(scores), check=False)


def is_anomalous(entropy, cfg: TvdConfig):
    return np.asarray(entropy) < cfg.baseline_entropy - cfg.tau_threshold


def detect(ssm_outputs, cfg: TvdConfig) -> TvdResult:
    """Entropy test for one window's ``(N, d_h)`` SSM outputs."""
    outputs = np.asarray(ssm_outputs)
    if outputs.shape[0] < 2:
        raise ValueError("detection needs at least two positions")
    h = float(shannon_entropy(position_softmax(reduce_scores(outputs).astype(np.float64))))
    return TvdResult(entropy=h, score=cfg.baseline_entropy - h, anomaly=bool(h < cfg.baseline_entropy - cfg.tau_threshold))


def thermo_loss(entropy, label, cfg: TvdConfig):
    """Auxiliary loss ``lam * baseline - H`` for benign windows, 0 for malicious ones.

    Array inputs give the mean over benign samples (0.0 when there are none).
    """
    entropy = np.asarray(entropy, dtype=np.float64)
    label = np.asarray(label)
    per = np.where(label == 0, cfg.lam * cfg.baseline_entropy - entropy, 0.0)
    if per.ndim == 0:
        return float(per)
    benign = label == 0
    return float(per[benign].mean()) if benign.any() else 0.0


def update_baseline(running: float, batch_benign_entropies, momentum: float = DEFAULT_MOMENTUM) -> float:
    """Exponential moving average of benign entropy; empty batches leave it unchanged."""
    if not 0.0 < momentum < 1.0:
        raise ValueError("momentum must lie in (0, 1)")
    batch = np.asarray(batch_benign_entropies, dtype=np.float64)
    if batch.size == 0:
        return running
    return running * momentum + float(batch.mean()) * (1.0 - momentum)


def calibrate(benign_entropies, target_fpr: float = 0.01, tau_floor: float = DEFAULT_TAU) -> TvdConfig:
    """Fit the benign baseline and a threshold on benign-only entropies.

    The baseline is the mean entropy. The threshold starts at ``tau_floor`` and
    is widened just enough that at most ``target_fpr`` of the benign windows fall
    below ``baseline - tau``.
    """
    h = np.asarray(benign_entropies, dtype=np.float64)
    if h.size == 0:
        raise ValueError("calibration needs at least one benign entropy")
    baseline = float(h.mean())
    gap = baseline - float(np.quantile(h, target_fpr))
    # nudge past the quantile so the boundary sample itself is not flagged
    tau = max(tau_floor, gap + 1e-9 * max(1.0, abs(baseline)))
    return TvdConfig(baseline_entropy=baseline, tau_threshold=tau)
