"""Mini-batch training with AdamW, class-ratio sampling and NaN-batch discard."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from ..errors import SingleClassDataset
from ..physics import WindowSet
from ..tvd import TvdConfig, calibrate, update_baseline
from .model import Hyper, ModelParams, focal_terms, forward_batch, init_params, loss_and_grads, predict

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    lr: float = 3e-3
    weight_decay: float = 1e-2
    batch_size: int = 32
    epochs: int = 20
    focal_gamma: float = 2.0
    focal_alpha: float = 0.75
    seed: int = 0
    benign_fraction: float = 0.54
    val_fraction: float = 0.1
    baseline_momentum: float = 0.99
    calibration_fpr: float = 0.01
    dtype: type = np.float32

    def __post_init__(self):
        if self.lr <= 0:
            raise ValueError("lr must be positive")
        if self.focal_gamma < 0:
            raise ValueError("focal gamma must be non-negative")
        if not 0 < self.focal_alpha < 1:
            raise ValueError("focal alpha must lie in (0, 1)")


class AdamW:
    """Adam with decoupled weight decay applied to matrices only."""

    def __init__(self, params: dict[str, np.ndarray], lr=1e-3, betas=(0.9, 0.999), eps=1e-8, weight_decay=1e-2):
        self.lr = lr
        self.b1, self.b2 = betas
        self.eps = eps
        self.wd = weight_decay
        self.t = 0
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        self.t += 1
        c1 = 1.0 - self.b1**self.t
        c2 = 1.0 - self.b2**self.t
        for k, p in params.items():
            g = grads[k]
            m, v = self.m[k], self.v[k]
            m *= self.b1
            m += (1 - self.b1) * g
            v *= self.b2
            v += (1 - self.b2) * g * g
            if self.wd and p.ndim >= 2:
                p -= self.lr * self.wd * p
            p -= (self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)).astype(p.dtype)


def class_weights(labels: np.ndarray, benign_fraction: float) -> np.ndarray:
    """Per-sample draw probabilities giving the requested benign share in expectation."""
    benign = labels == 0
    nb, nm = int(benign.sum()), int((~benign).sum())
    w = np.where(benign, benign_fraction / nb, (1.0 - benign_fraction) / nm)
    return w / w.sum()


def stratified_split(labels: np.ndarray, fraction: float, rng: np.random.Generator, groups=None):
    """Split indices so each stratum contributes ``round(fraction * size)`` to the second part."""
    keys = labels if groups is None else np.array([f"{l}|{g}" for l, g in zip(labels, groups)])
    first, second = [], []
    for key in sorted(set(keys.tolist())):
        idx = np.flatnonzero(keys == key)
        idx = idx[rng.permutation(idx.size)]
        take = int(round(fraction * idx.size))
        second.append(idx[:take])
        first.append(idx[take:])
    return np.sort(np.concatenate(first)), np.sort(np.concatenate(second))


@dataclass
class EpochMetrics:
    epoch: int
    train_loss: float
    val_loss: float
    val_f1: float
    batches_seen: int
    batches_applied: int
    batches_discarded: int
    baseline_entropy: float
    seconds: float


@dataclass
class TrainResult:
    params: ModelParams
    history: list[EpochMetrics] = field(default_factory=list)
    best_epoch: int = 0
    batches_seen: int = 0
    batches_applied: int = 0
    batches_discarded: int = 0


def evaluate_loss(params: ModelParams, data: WindowSet, cfg: TrainConfig, batch: int = 256) -> float:
    """Sample-weighted loss over a window set (focal over all, thermo over benign)."""
    total, n_all = 0.0, 0
    thermo, n_benign = 0.0, 0
    for i in range(0, len(data), batch):
        sl = slice(i, i + batch)
        labels = data.labels[sl]
        cache = forward_batch(data.data[sl], params)
        focal, _ = focal_terms(cache.prob, labels, cfg.focal_gamma, cfg.focal_alpha)
        total += float(focal.sum())
        n_all += labels.size
        benign = labels == 0
        thermo += float(np.sum(params.tvd.lam * params.tvd.baseline_entropy - cache.entropy[benign]))
        n_benign += int(benign.sum())
    return total / max(n_all, 1) + (thermo / n_benign if n_benign else 0.0)


def _f1(labels: np.ndarray, probs: np.ndarray) -> float:
    pred = probs >= 0.5
    tp = int(np.sum(pred & (labels == 1)))
    fp = int(np.sum(pred & (labels == 0)))
    fn = int(np.sum(~pred & (labels == 1)))
    return 2 * tp / (2 * tp + fp + fn) if tp + fp + fn else 1.0


def train(
    dataset: WindowSet,
    cfg: TrainConfig = TrainConfig(),
    hyper: Hyper | None = None,
    init: ModelParams | None = None,
    frozen=(),
) -> TrainResult:
    """Train on labeled windows; returns the best-validation-loss parameters.

    Batches whose loss or gradients are not finite are dropped and counted.
    After training the entropy detector is calibrated on the benign training
    windows.
    """
    labels = dataset.labels
    if len(np.unique(labels[labels >= 0])) < 2:
        raise SingleClassDataset("training needs both benign and malicious windows")
    rng = np.random.default_rng(cfg.seed)
    hyper = hyper or Hyper(n=dataset.n)
    if hyper.n != dataset.n:
        hyper = Hyper(hyper.d, hyper.d_h, hyper.d_s, dataset.n)
    params = init.copy() if init is not None else init_params(hyper, cfg.seed, cfg.dtype, dataset.stats)
    params.stats = dataset.stats

    train_idx, val_idx = stratified_split(labels, cfg.val_fraction, rng, dataset.kinds)
    train_set, val_set = dataset.subset(train_idx), dataset.subset(val_idx)
    weights = class_weights(train_set.labels, cfg.benign_fraction)
    opt = AdamW(params.weights, cfg.lr, weight_decay=cfg.weight_decay)

    result = TrainResult(params.copy())
    best_val = np.inf
    baseline = None
    for epoch in range(1, cfg.epochs + 1):
        t0 = time.perf_counter()
        draws = rng.choice(len(train_set), size=len(train_set), replace=True, p=weights)
        losses = []
        for i in range(0, draws.size, cfg.batch_size):
            idx = draws[i : i + cfg.batch_size]
            x, y = train_set.data[idx], train_set.labels[idx]
            result.batches_seen += 1
            with np.errstate(all="ignore"):
                loss, grads, cache = loss_and_grads(x, y, params, cfg.focal_gamma, cfg.focal_alpha, frozen=frozen)
            finite = np.isfinite(loss) and all(np.all(np.isfinite(g)) for g in grads.values())
            if not finite:
                result.batches_discarded += 1
                log.debug("epoch %d: discarded non-finite batch %d", epoch, result.batches_seen)
                continue
            opt.step(params.weights, grads)
            result.batches_applied += 1
            losses.append(loss)
            benign_h = cache.entropy[y == 0]
            if baseline is None and benign_h.size:
                baseline = float(benign_h.mean())
            elif baseline is not None:
                baseline = update_baseline(baseline, benign_h, cfg.baseline_momentum)
            if baseline is not None:
                params.tvd.baseline_entropy = min(max(baseline, 0.0), float(np.log2(hyper.n)))
        val_loss = evaluate_loss(params, val_set, cfg) if len(val_set) else float(np.mean(losses))
        _, val_prob, _ = predict(val_set.data, params)
        m = EpochMetrics(
            epoch,
            float(np.mean(losses)) if losses else float("nan"),
            val_loss,
            _f1(val_set.labels, val_prob),
            result.batches_seen,
            result.batches_applied,
            result.batches_discarded,
            params.tvd.baseline_entropy,
            time.perf_counter() - t0,
        )
        result.history.append(m)
        log.info("epoch %d train %.4f val %.4f f1 %.4f", epoch, m.train_loss, m.val_loss, m.val_f1)
        if val_loss < best_val:
            best_val = val_loss
            result.best_epoch = epoch
            result.params = params.copy()

    result.params.tvd = calibrate_on(result.params, train_set, cfg.calibration_fpr)
    return result


def calibrate_on(params: ModelParams, windows: WindowSet, target_fpr: float = 0.01) -> TvdConfig:
    """Baseline entropy and threshold fitted on the benign members of ``windows``."""
    benign = windows.subset(np.flatnonzero(windows.labels == 0)) if np.any(windows.labels >= 0) else windows
    _, _, ents = predict(benign.data, params)
    cfg = calibrate(ents, target_fpr)
    cfg.lam = params.tvd.lam
    return cfg
