"""Forward pass, losses and exact reverse-mode gradients of the flow classifier.

Pipeline per window row: ball projection -> LTC step driven by the physical
inter-arrival time -> selective diagonal SSM over the LTC states. SSM outputs are
mean-pooled into a logistic head, and their per-position norms feed the entropy
detector.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .. import dynamics
from ..dynamics import TAU_FLOOR, phi, phi_prime, sigmoid, softplus
from ..errors import NonFinite
from ..manifold import EPSILON as BALL_EPS
from ..manifold import project_backward
from ..physics import IAT_COL, FlowWindow, NormStats, WindowSet, denormalize_iat
from ..tvd import LN2, TvdConfig, is_anomalous, position_softmax, shannon_entropy

PARAM_ORDER = (
    "projection.w_p",
    "ltc.tau_theta",
    "ltc.w_h",
    "ltc.w_x",
    "ltc.b",
    "ssm.a_log",
    "ssm.w_delta",
    "ssm.b_delta",
    "ssm.w_b",
    "ssm.w_c",
    "head.w",
    "head.b",
)
P_CLAMP = 1e-7
SWARM_BATCH = 64


@dataclass(frozen=True)
class Hyper:
    d: int = 16
    d_h: int = 32
    d_s: int = 8
    n: int = 100

    def shapes(self) -> dict[str, tuple[int, ...]]:
        d, dh, ds = self.d, self.d_h, self.d_s
        return {
            "projection.w_p": (d, 6),
            "ltc.tau_theta": (dh,),
            "ltc.w_h": (dh, dh),
            "ltc.w_x": (dh, d),
            "ltc.b": (dh,),
            "ssm.a_log": (dh, ds),
            "ssm.w_delta": (dh + 1,),
            "ssm.b_delta": (1,),
            "ssm.w_b": (ds, dh),
            "ssm.w_c": (ds, dh),
            "head.w": (dh,),
            "head.b": (1,),
        }


@dataclass
class ModelParams:
    weights: dict[str, np.ndarray]
    hyper: Hyper = field(default_factory=Hyper)
    tvd: TvdConfig = field(default_factory=TvdConfig)
    stats: NormStats = field(default_factory=NormStats.identity)

    def __post_init__(self):
        shapes = self.hyper.shapes()
        missing = set(shapes) - set(self.weights)
        if missing:
            raise ValueError(f"missing parameters: {sorted(missing)}")
        for name, shape in shapes.items():
            if self.weights[name].shape != shape:
                raise ValueError(f"{name}: shape {self.weights[name].shape}, expected {shape}")

    @property
    def dtype(self):
        return self.weights["head.w"].dtype

    def copy(self) -> "ModelParams":
        return replace(self, weights={k: v.copy() for k, v in self.weights.items()}, tvd=replace(self.tvd))

    def astype(self, dtype) -> "ModelParams":
        return replace(self, weights={k: v.astype(dtype) for k, v in self.weights.items()}, tvd=replace(self.tvd))

    def ltc(self) -> dynamics.LtcParams:
        w = self.weights
        return dynamics.LtcParams(w["ltc.tau_theta"], w["ltc.w_h"], w["ltc.w_x"], w["ltc.b"])

    def ssm(self) -> dynamics.SsmParams:
        w = self.weights
        return dynamics.SsmParams(w["ssm.a_log"], w["ssm.w_delta"], w["ssm.b_delta"], w["ssm.w_b"], w["ssm.w_c"])


def init_params(hyper: Hyper = Hyper(), seed: int = 0, dtype=np.float32, stats: NormStats | None = None) -> ModelParams:
    rng = np.random.default_rng(seed)
    d, dh, ds = hyper.d, hyper.d_h, hyper.d_s
    w = {
        "projection.w_p": rng.normal(0, 1 / np.sqrt(6), (d, 6)),
        "ltc.tau_theta": rng.uniform(0.5, 1.5, dh),
        "ltc.w_h": rng.normal(0, 0.5 / np.sqrt(dh), (dh, dh)),
        "ltc.w_x": rng.normal(0, 1 / np.sqrt(d), (dh, d)),
        "ltc.b": np.zeros(dh),
        # S4D-real style poles -1 .. -d_s
        "ssm.a_log": np.log(np.tile(np.arange(1, ds + 1, dtype=np.float64), (dh, 1))),
        "ssm.w_delta": rng.normal(0, 0.1, dh + 1),
        "ssm.b_delta": np.array([np.log(np.expm1(0.5))]),
        "ssm.w_b": rng.normal(0, 1 / np.sqrt(dh), (ds, dh)),
        "ssm.w_c": rng.normal(0, 1 / np.sqrt(dh), (ds, dh)),
        "head.w": rng.normal(0, 1 / np.sqrt(dh), dh),
        "head.b": np.zeros(1),
    }
    w = {k: v.astype(dtype) for k, v in w.items()}
    return ModelParams(w, hyper, TvdConfig(baseline_entropy=0.0), stats or NormStats.identity())


@dataclass
class HiddenTrajectory:
    ltc_states: np.ndarray  # (N, d_h)
    ssm_outputs: np.ndarray  # (N, d_h)
    ssm_scalar_scores: np.ndarray  # (N,)


@dataclass
class ForwardArtifacts:
    logit: float
    probability: float
    trajectory: HiddenTrajectory
    entropy: float


@dataclass
class BatchCache:
    """Everything the reverse pass needs, for a batch of ``B`` windows."""

    x: np.ndarray
    dt: np.ndarray
    u: np.ndarray
    h: np.ndarray  # (B, n+1, d_h) with h[:, 0] = 0
    f: np.ndarray
    e_theta: np.ndarray
    tau: np.ndarray
    decay: np.ndarray
    sel: np.ndarray
    q: np.ndarray
    delta: np.ndarray
    bk: np.ndarray
    ck: np.ndarray
    d_a: np.ndarray
    a_bar: np.ndarray
    phi: np.ndarray
    b_bar: np.ndarray
    s: np.ndarray  # (B, n+1, d_h, d_s) with s[:, 0] = 0
    y: np.ndarray
    pool: np.ndarray
    logit: np.ndarray
    prob: np.ndarray
    scores: np.ndarray
    p_pos: np.ndarray
    entropy: np.ndarray

    def trajectory(self, i: int) -> HiddenTrajectory:
        return HiddenTrajectory(self.h[i, 1:], self.y[i], self.scores[i])


def window_iat(x: np.ndarray, stats: NormStats) -> np.ndarray:
    """Physical IAT seconds recovered from the normalized feature column."""
    return denormalize_iat(x[..., IAT_COL], stats)


def forward_batch(x, params: ModelParams, dt=None) -> BatchCache:
    """Run ``(B, n, 6)`` normalized windows through the network.

    ``dt`` holds physical inter-arrival seconds; by default it is recovered from
    the normalized IAT column using ``params.stats``.
    """
    w = params.weights
    dtype = params.dtype
    x = np.asarray(x, dtype=dtype)
    if x.ndim == 2:
        x = x[None]
    if dt is None:
        dt = window_iat(x, params.stats)
    dt = np.asarray(dt, dtype=dtype).reshape(x.shape[:2])
    bsz, n, _ = x.shape
    dh = params.hyper.d_h

    # ball projection
    w_p = w["projection.w_p"]
    z = x @ w_p.T
    r = np.linalg.norm(z, axis=-1, keepdims=True)
    u = z / (1.0 + r + BALL_EPS)

    # liquid time-constant cell, exact exponential step per packet
    theta = np.maximum(w["ltc.tau_theta"], TAU_FLOOR)
    dtc = dt[..., None]
    e_theta = np.exp(-dtc / theta)
    tau = softplus(theta) * e_theta + dynamics.EPSILON
    decay = np.exp(-dtc / tau)
    gain = tau * (1.0 - decay)
    drive = u @ w["ltc.w_x"].T + w["ltc.b"]
    w_h_t = w["ltc.w_h"].T
    h = np.zeros((bsz, n + 1, dh), dtype=dtype)
    f = np.empty((bsz, n, dh), dtype=dtype)
    for k in range(n):
        fk = np.tanh(h[:, k] @ w_h_t + drive[:, k])
        f[:, k] = fk
        h[:, k + 1] = h[:, k] * decay[:, k] + fk * gain[:, k]
    hs = h[:, 1:]

    # selective SSM over the LTC states
    sel = np.concatenate([hs, x[..., IAT_COL : IAT_COL + 1]], axis=-1)
    q = sel @ w["ssm.w_delta"] + w["ssm.b_delta"][0]
    delta = softplus(q)
    bk = hs @ w["ssm.w_b"].T
    ck = hs @ w["ssm.w_c"].T
    a = -np.exp(w["ssm.a_log"])
    d_a = delta[..., None, None] * a
    a_bar = np.exp(d_a)
    ph = phi(d_a).astype(dtype, copy=False)
    b_bar = ph * delta[..., None, None] * bk[:, :, None, :]
    drive_s = b_bar * hs[..., None]
    s = np.zeros((bsz, n + 1) + a.shape, dtype=dtype)
    for k in range(n):
        s[:, k + 1] = a_bar[:, k] * s[:, k] + drive_s[:, k]
    y = np.einsum("bkcs,bks->bkc", s[:, 1:], ck)

    # head and entropy
    pool = y.mean(axis=1)
    logit = pool @ w["head.w"] + w["head.b"][0]
    prob = sigmoid(logit)
    scores = np.linalg.norm(y, axis=-1)
    p_pos = position_softmax(scores)
    entropy = shannon_entropy(p_pos, check=False)
    return BatchCache(
        x, dt, u, h, f, e_theta, tau, decay, sel, q, delta, bk, ck, d_a, a_bar, ph, b_bar, s, y,
        pool, logit, prob, scores, p_pos, entropy,
    )


def forward(window, params: ModelParams, dt=None) -> ForwardArtifacts:
    data = window.data if isinstance(window, FlowWindow) else np.asarray(window)
    c = forward_batch(data[None], params, None if dt is None else np.asarray(dt)[None])
    for name in ("logit", "entropy"):
        if not np.all(np.isfinite(getattr(c, name))):
            raise NonFinite(f"non-finite {name} in forward pass")
    return ForwardArtifacts(float(c.logit[0]), float(c.prob[0]), c.trajectory(0), float(c.entropy[0]))


def focal_terms(p, label, gamma: float = 2.0, alpha: float = 0.75):
    """Per-sample focal loss and its derivative with respect to ``p``."""
    p = np.asarray(p, dtype=np.float64)
    label = np.asarray(label)
    inside = (p > P_CLAMP) & (p < 1.0 - P_CLAMP)
    pc = np.clip(p, P_CLAMP, 1.0 - P_CLAMP)
    pos = label == 1
    p_t = np.where(pos, pc, 1.0 - pc)
    a_t = np.where(pos, alpha, 1.0 - alpha)
    one_m = 1.0 - p_t
    loss = -a_t * one_m**gamma * np.log(p_t)
    d_pt = a_t * (gamma * one_m ** (gamma - 1) * np.log(p_t) - one_m**gamma / p_t) if gamma != 0 else -a_t / p_t
    d_p = np.where(pos, d_pt, -d_pt) * inside
    return loss, d_p


def focal_loss(p, label, gamma: float = 2.0, alpha: float = 0.75):
    loss, _ = focal_terms(p, label, gamma, alpha)
    return float(loss) if np.ndim(loss) == 0 else loss


def total_loss(art: ForwardArtifacts, label: int, tvd: TvdConfig, gamma: float = 2.0, alpha: float = 0.75) -> float:
    focal = focal_loss(art.probability, label, gamma, alpha)
    thermo = tvd.lam * tvd.baseline_entropy - art.entropy if label == 0 else 0.0
    return float(focal + thermo)


def batch_loss(cache: BatchCache, labels, tvd: TvdConfig, gamma=2.0, alpha=0.75):
    """Mean focal loss plus mean thermo loss over the benign members.

    Returns ``(loss, d_logit, d_entropy)`` with per-sample upstream gradients.
    """
    labels = np.asarray(labels)
    bsz = labels.shape[0]
    focal, d_p = focal_terms(cache.prob, labels, gamma, alpha)
    p = cache.prob.astype(np.float64)
    d_logit = d_p * p * (1.0 - p) / bsz
    benign = labels == 0
    nb = int(benign.sum())
    d_entropy = np.zeros(bsz)
    thermo = 0.0
    if nb:
        thermo = float(np.mean(tvd.lam * tvd.baseline_entropy - cache.entropy[benign]))
        d_entropy[benign] = -1.0 / nb
    return float(focal.mean()) + thermo, d_logit, d_entropy


def backward_batch(cache: BatchCache, params: ModelParams, d_logit, d_entropy, frozen=()) -> dict[str, np.ndarray]:
    """Reverse pass from per-sample ``dL/dlogit`` and ``dL/dH`` to every weight."""
    w = params.weights
    dtype = params.dtype
    c = cache
    bsz, n, dh = c.y.shape
    d_logit = np.asarray(d_logit, dtype=dtype)
    d_entropy = np.asarray(d_entropy, dtype=dtype)
    g: dict[str, np.ndarray] = {}

    # head
    g["head.w"] = c.pool.T @ d_logit
    g["head.b"] = np.array([d_logit.sum()], dtype=dtype)
    dy = np.broadcast_to(d_logit[:, None, None] * w["head.w"] / n, c.y.shape).copy()

    # entropy -> softmax -> per-position norms
    p = c.p_pos
    logp = np.log(np.where(p > 0, p, 1.0))
    gh = -(logp + 1.0) / LN2
    d_score = d_entropy[:, None] * p * (gh - np.sum(p * gh, axis=-1, keepdims=True))
    safe = np.where(c.scores > 0, c.scores, 1.0)
    dy += np.where(c.scores > 0, d_score / safe, 0.0)[..., None] * c.y

    # selective scan, reverse in time
    hs = c.h[:, 1:]
    d_ck = np.einsum("bkc,bkcs->bks", dy, c.s[:, 1:])
    ds_out = dy[..., None] * c.ck[:, :, None, :]
    ds_all = np.empty_like(c.s[:, 1:])
    carry = np.zeros_like(c.s[:, 0])
    for k in range(n - 1, -1, -1):
        ds = carry + ds_out[:, k]
        ds_all[:, k] = ds
        carry = ds * c.a_bar[:, k]
    d_abar = ds_all * c.s[:, :-1]
    d_bbar = ds_all * hs[..., None]
    d_hs = np.sum(ds_all * c.b_bar, axis=-1)

    a = -np.exp(w["ssm.a_log"])
    delta4 = c.delta[..., None, None]
    bk4 = c.bk[:, :, None, :]
    d_da = d_abar * c.a_bar + d_bbar * delta4 * bk4 * phi_prime(c.d_a)
    d_delta = np.einsum("bkcs,cs->bk", d_da, a) + np.sum(d_bbar * c.phi * bk4, axis=(-2, -1))
    d_bk = np.sum(d_bbar * c.phi * delta4, axis=-2)
    g["ssm.a_log"] = np.einsum("bkcs,bk->cs", d_da, c.delta) * a
    d_q = d_delta * sigmoid(c.q)
    g["ssm.w_delta"] = np.einsum("bk,bkj->j", d_q, c.sel)
    g["ssm.b_delta"] = np.array([d_q.sum()], dtype=dtype)
    d_hs += d_q[..., None] * w["ssm.w_delta"][:dh]
    g["ssm.w_b"] = np.einsum("bks,bkc->sc", d_bk, hs)
    g["ssm.w_c"] = np.einsum("bks,bkc->sc", d_ck, hs)
    d_hs += d_bk @ w["ssm.w_b"] + d_ck @ w["ssm.w_c"]

    # LTC, reverse in time
    w_h = w["ltc.w_h"]
    gain = c.tau * (1.0 - c.decay)
    d_pre = np.empty_like(c.f)
    d_tau = np.empty_like(c.tau)
    carry_h = np.zeros((bsz, dh), dtype=dtype)
    dt = c.dt
    for k in range(n - 1, -1, -1):
        dh_k = d_hs[:, k] + carry_h
        fk = c.f[:, k]
        ak = c.decay[:, k]
        tk = c.tau[:, k]
        d_a_k = dh_k * (c.h[:, k] - fk * tk)
        dp = dh_k * gain[:, k] * (1.0 - fk * fk)
        d_tau[:, k] = dh_k * fk * (1.0 - ak) + d_a_k * ak * dt[:, k, None] / (tk * tk)
        d_pre[:, k] = dp
        carry_h = dh_k * ak + dp @ w_h
    g["ltc.w_h"] = np.einsum("bkc,bkj->cj", d_pre, c.h[:, :-1])
    g["ltc.w_x"] = np.einsum("bkc,bkj->cj", d_pre, c.u)
    g["ltc.b"] = d_pre.sum(axis=(0, 1))
    d_u = d_pre @ w["ltc.w_x"]
    theta_raw = w["ltc.tau_theta"]
    theta = np.maximum(theta_raw, TAU_FLOOR)
    dtc = dt[..., None]
    d_tau_d_theta = sigmoid(theta) * c.e_theta + softplus(theta) * c.e_theta * dtc / (theta * theta)
    g["ltc.tau_theta"] = np.sum(d_tau * d_tau_d_theta, axis=(0, 1)) * (theta_raw > TAU_FLOOR)

    # projection
    _, g["projection.w_p"] = project_backward(c.x, w["projection.w_p"], d_u)

    for name in frozen:
        g[name] = np.zeros_like(w[name])
    return {k: np.asarray(g[k], dtype=dtype).reshape(w[k].shape) for k in PARAM_ORDER}


def loss_and_grads(x, labels, params: ModelParams, gamma=2.0, alpha=0.75, dt=None, frozen=()):
    cache = forward_batch(x, params, dt)
    loss, d_logit, d_entropy = batch_loss(cache, labels, params.tvd, gamma, alpha)
    grads = backward_batch(cache, params, d_logit, d_entropy, frozen)
    return loss, grads, cache


def backward(window, label: int, params: ModelParams, gamma=2.0, alpha=0.75, dt=None, frozen=()):
    """Gradients of ``total_loss`` for a single window."""
    data = window.data if isinstance(window, FlowWindow) else np.asarray(window)
    _, grads, cache = loss_and_grads(
        data[None], np.array([label]), params, gamma, alpha, None if dt is None else np.asarray(dt)[None], frozen
    )
    if not all(np.all(np.isfinite(v)) for v in grads.values()):
        raise NonFinite("non-finite gradient")
    return grads


@dataclass(frozen=True)
class DetectionVerdict:
    flow_id: int
    logit: float
    probability: float
    entropy: float
    tvd_anomaly: bool
    classifier_malicious: bool

    @property
    def malicious(self) -> bool:
        return self.classifier_malicious or self.tvd_anomaly


def predict(x, params: ModelParams, batch: int = 256, dt=None):
    """Logits, probabilities and entropies for ``(W, n, 6)`` windows."""
    x = np.asarray(x)
    logits, probs, ents = [], [], []
    for i in range(0, x.shape[0], batch):
        c = forward_batch(x[i : i + batch], params, None if dt is None else dt[i : i + batch])
        logits.append(c.logit)
        probs.append(c.prob)
        ents.append(c.entropy)
    if not logits:
        return np.empty(0), np.empty(0), np.empty(0)
    return np.concatenate(logits), np.concatenate(probs), np.concatenate(ents)


def verdicts_from(flow_ids, logits, probs, ents, tvd: TvdConfig) -> list[DetectionVerdict]:
    flags = is_anomalous(ents, tvd)
    return [
        DetectionVerdict(int(fid), float(lg), float(p), float(h), bool(fl), bool(p >= 0.5))
        for fid, lg, p, h, fl in zip(flow_ids, logits, probs, ents, flags)
    ]


def infer_batch(windows, params: ModelParams, batch: int = SWARM_BATCH) -> list[DetectionVerdict]:
    """Classifier decision OR entropy flag for each window; both reported."""
    if isinstance(windows, WindowSet):
        x, fids = windows.data, windows.flow_ids
    else:
        windows = list(windows)
        x = np.stack([w.data for w in windows]) if windows else np.empty((0, params.hyper.n, 6))
        fids = [w.flow_id for w in windows]
    logits, probs, ents = predict(x, params, batch)
    return verdicts_from(fids, logits, probs, ents, params.tvd)
