"""Seeded synthetic traffic: stochastic benign flows, rigid C2 beacons and
beacons morphed to benign packet volumes; plus Gaussian feature-noise stress.

Every flow draws from its own generator seeded by ``(seed, kind, flow index)``,
so any flow can be regenerated independently and streams are ordered by flow
then packet.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator

import numpy as np

from .errors import InsufficientData
from .ingest import PacketRecord
from .physics import (
    BENIGN,
    COLUMNS,
    DEFAULT_N,
    MALICIOUS,
    WindowSet,
    fit_norm_stats,
    normalize,
    window_stream,
    write_windows,
)

KINDS = ("benign_stochastic", "c2_beacon", "morphed_beacon")
LABELS = {"benign_stochastic": BENIGN, "c2_beacon": MALICIOUS, "morphed_beacon": MALICIOUS}
BASE_EPOCH_US = 1_700_000_000 * 1_000_000
HEADER_BYTES = 54  # Ethernet + IPv4 + TCP without options


@dataclass(frozen=True)
class TrafficProfile:
    kind: str = "benign_stochastic"
    # benign timing: log-normal IAT in log-seconds
    iat_mu: float = -4.0
    iat_sigma: float = 1.2
    # beacon timing
    period: float = 1.0
    jitter: float = 0.001
    # beacon volume
    beacon_bytes: int = 320
    beacon_size_jitter: float = 0.01
    beacon_window: int = 29200
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown profile kind {self.kind!r}")
        if self.iat_sigma <= 0 or self.period <= 0 or self.beacon_bytes <= HEADER_BYTES:
            raise ValueError("scale parameters must be positive")
        if not 0 <= self.jitter < 1 or not 0 <= self.beacon_size_jitter < 1:
            raise ValueError("jitter fractions must lie in [0, 1)")

    @property
    def label(self) -> int:
        return LABELS[self.kind]


def _ts(us: int) -> float:
    return us // 1_000_000 + (us % 1_000_000) / 1e6


def _benign_volume(rng: np.random.Generator, count: int):
    """Mixed frame sizes, congestion-driven windows, ACK-dominated flags."""
    pick = rng.random(count)
    sizes = np.where(
        pick < 0.45,
        rng.integers(HEADER_BYTES, 67, count),
        np.where(pick < 0.80, 1514, rng.integers(100, 1501, count)),
    )
    # random walk of the advertised window, reflected inside [4 KiB, 64 KiB)
    steps = rng.normal(0, 1500, count).cumsum() + rng.integers(16_000, 60_000)
    span = 65_535 - 4_096
    folded = np.abs((steps - 4_096) % (2 * span) - span)
    windows = (65_535 - folded).astype(int)
    u = rng.random(count)
    flags = np.where(u < 0.60, 0x10, np.where(u < 0.95, 0x18, np.where(u < 0.98, 0x11, 0x02)))
    egress = rng.random(count) < 0.4
    return sizes, windows, flags, egress


def _flow_packets(profile: TrafficProfile, kind_idx: int, flow: int, count: int) -> Iterator[PacketRecord]:
    rng = np.random.default_rng([profile.seed, kind_idx, flow])
    local = f"10.{kind_idx}.{flow // 250}.{flow % 250 + 1}"
    remote = f"203.0.{113 + kind_idx}.{flow % 200 + 20}"
    lport = 40_000 + flow % 20_000
    start = BASE_EPOCH_US + int(rng.integers(0, 3_600_000_000))

    if profile.kind == "benign_stochastic":
        gaps = np.rint(rng.lognormal(profile.iat_mu, profile.iat_sigma, count) * 1e6).astype(np.int64)
    else:
        u = rng.uniform(-1.0, 1.0, count)
        gaps = np.rint(profile.period * (1.0 + profile.jitter * u) * 1e6).astype(np.int64)
    gaps[0] = 0
    times = start + np.cumsum(gaps)

    if profile.kind == "c2_beacon":
        jit = rng.uniform(-1.0, 1.0, count) * profile.beacon_size_jitter
        sizes = np.maximum(HEADER_BYTES, np.rint(profile.beacon_bytes * (1 + jit))).astype(int)
        windows = np.full(count, profile.beacon_window)
        flags = np.full(count, 0x18)
        egress = np.arange(count) % 2 == 0
    else:
        sizes, windows, flags, egress = _benign_volume(rng, count)

    for i in range(count):
        src, dst, sp, dp = (local, remote, lport, 443) if egress[i] else (remote, local, 443, lport)
        size = int(sizes[i])
        yield PacketRecord(
            timestamp=_ts(int(times[i])),
            frame_len=size,
            payload_len=size - HEADER_BYTES,
            src_ip=src,
            dst_ip=dst,
            src_port=sp,
            dst_port=dp,
            tcp_flags=int(flags[i]),
            tcp_window=int(windows[i]),
            is_tcp=True,
        )


def generate(profile: TrafficProfile, flows: int, packets_per_flow: int) -> Iterator[PacketRecord]:
    """Packets of ``flows`` flows, flow-major, deterministic in ``profile.seed``."""
    if flows < 1 or packets_per_flow < 1:
        raise ValueError("flow and packet counts must be at least 1")
    kind_idx = KINDS.index(profile.kind)
    for flow in range(flows):
        yield from _flow_packets(profile, kind_idx, flow, packets_per_flow)


def time_ordered(packets) -> list[PacketRecord]:
    """Interleave flows by timestamp, as a capture would see them (stable sort)."""
    return sorted(packets, key=lambda p: p.timestamp)


@dataclass(frozen=True)
class NoiseSpec:
    level: float = 0.05
    target_columns: tuple[str, ...] = ("iat",)
    seed: int = 0

    def __post_init__(self):
        if self.level < 0:
            raise ValueError("noise level must be non-negative")
        bad = set(self.target_columns) - {"size", "iat", "window"}
        if bad:
            raise ValueError(f"noise can only target size/iat/window, got {sorted(bad)}")


def inject_noise(windows: WindowSet, spec: NoiseSpec) -> WindowSet:
    """Add zero-mean Gaussian noise, scaled to each target column's spread, in normalized space."""
    if spec.level == 0 or len(windows) == 0:
        return windows.subset(np.arange(len(windows)))
    rng = np.random.default_rng(spec.seed)
    data = windows.data.astype(np.float64)
    for name in spec.target_columns:
        col = COLUMNS.index(name)
        sd = data[:, :, col].std()
        data[:, :, col] += rng.normal(0.0, spec.level * sd, data.shape[:2])
    out = windows.subset(np.arange(len(windows)))
    out.data = data.astype(np.float32)
    return out


@dataclass
class CorpusConfig:
    """Profiles and volumes for a labeled corpus.

    ``profiles`` maps each profile to ``(flows, windows_per_flow)``.
    """

    profiles: list[tuple[TrafficProfile, int, int]] = field(default_factory=list)
    n: int = DEFAULT_N
    test_fraction: float = 0.2
    seed: int = 0

    @classmethod
    def default(cls, windows: int = 2000, n: int = DEFAULT_N, seed: int = 0, windows_per_flow: int = 5) -> "CorpusConfig":
        """55% benign, the rest split evenly between plain and morphed beacons."""
        per_flow = windows_per_flow
        benign = int(round(0.55 * windows / per_flow))
        beacon = (windows // per_flow - benign) // 2
        morphed = windows // per_flow - benign - beacon
        return cls(
            [
                (TrafficProfile("benign_stochastic", seed=seed), benign, per_flow),
                (TrafficProfile("c2_beacon", seed=seed), beacon, per_flow),
                (TrafficProfile("morphed_beacon", seed=seed), morphed, per_flow),
            ],
            n=n,
            seed=seed,
        )


_PROFILE_FIELDS = {f: type(getattr(TrafficProfile(), f)) for f in TrafficProfile.__dataclass_fields__ if f != "kind"}


def parse_corpus_config(text: str) -> CorpusConfig:
    """Read a ``key = value`` corpus description.

    Top-level keys: ``n``, ``seed``, ``test_fraction``. Profile keys look like
    ``profile.<kind>.<field>`` where field is ``flows``, ``windows_per_flow`` or
    any :class:`TrafficProfile` attribute. ``#`` starts a comment.
    """
    top: dict[str, str] = {}
    prof: dict[str, dict[str, str]] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        if key.startswith("profile."):
            _, kind, attr = key.split(".", 2)
            if kind not in KINDS:
                raise ValueError(f"line {lineno}: unknown profile kind {kind!r}")
            prof.setdefault(kind, {})[attr] = value
        else:
            top[key] = value
    seed = int(top.get("seed", 0))
    profiles = []
    for kind in KINDS:
        if kind not in prof:
            continue
        attrs = dict(prof[kind])
        flows = int(attrs.pop("flows", 1))
        per_flow = int(attrs.pop("windows_per_flow", 1))
        kwargs = {"kind": kind, "seed": seed}
        for attr, value in attrs.items():
            if attr not in _PROFILE_FIELDS:
                raise ValueError(f"unknown profile field {attr!r}")
            kwargs[attr] = _PROFILE_FIELDS[attr](value)
        profiles.append((TrafficProfile(**kwargs), flows, per_flow))
    return CorpusConfig(profiles, int(top.get("n", DEFAULT_N)), float(top.get("test_fraction", 0.2)), seed)


def format_corpus_config(cfg: CorpusConfig) -> str:
    lines = [f"n = {cfg.n}", f"seed = {cfg.seed}", f"test_fraction = {cfg.test_fraction}"]
    default = TrafficProfile()
    for profile, flows, per_flow in cfg.profiles:
        lines.append(f"profile.{profile.kind}.flows = {flows}")
        lines.append(f"profile.{profile.kind}.windows_per_flow = {per_flow}")
        for name in _PROFILE_FIELDS:
            if name != "seed" and getattr(profile, name) != getattr(default, name):
                lines.append(f"profile.{profile.kind}.{name} = {getattr(profile, name)}")
    return "\n".join(lines) + "\n"


def raw_windows(profile: TrafficProfile, flows: int, windows_per_flow: int, n: int) -> WindowSet:
    """Un-normalized windows for one profile, labeled and tagged with its kind."""
    wins = list(window_stream(generate(profile, flows, windows_per_flow * n), n, None, label=profile.label, normalized=False))
    ws = WindowSet(
        np.stack([w.data for w in wins]) if wins else np.empty((0, n, 6)),
        [w.label for w in wins],
        [w.flow_id for w in wins],
        [w.start_time for w in wins],
        stats=None,
    )
    ws.kinds = np.array([profile.kind] * len(wins))
    return ws


def _normalized(raw: WindowSet, stats) -> WindowSet:
    out = raw.subset(np.arange(len(raw)))
    out.data = normalize(raw.data.astype(np.float64), stats).astype(np.float32)
    out.stats = stats
    return out


def build_corpus(cfg: CorpusConfig, out_dir: str | Path | None = None) -> tuple[WindowSet, WindowSet]:
    """Generate, split 80/20 stratified by (label, kind), fit stats on train, normalize.

    When ``out_dir`` is given, ``train.aegt`` and ``test.aegt`` are written there.
    """
    if len(cfg.profiles) < 2:
        raise InsufficientData("a corpus needs at least two traffic profiles")
    sets = [raw_windows(p, flows, per, cfg.n) for p, flows, per in cfg.profiles]
    raw = WindowSet.concat(sets)
    if len(set(raw.labels.tolist())) < 2:
        raise InsufficientData("corpus must contain both classes")
    from .network.train import stratified_split

    rng = np.random.default_rng(cfg.seed)
    train_idx, test_idx = stratified_split(raw.labels, cfg.test_fraction, rng, raw.kinds)
    if train_idx.size == 0 or test_idx.size == 0:
        raise InsufficientData("too few windows for a train/test split")
    stats = fit_norm_stats(raw.data[train_idx].reshape(-1, 6))
    train, test = _normalized(raw.subset(train_idx), stats), _normalized(raw.subset(test_idx), stats)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_windows(out / "train.aegt", train)
        write_windows(out / "test.aegt", test)
    return train, test


__all__ = [
    "KINDS", "TrafficProfile", "NoiseSpec", "CorpusConfig", "generate", "time_ordered", "inject_noise",
    "build_corpus", "raw_windows", "parse_corpus_config", "format_corpus_config",
]
