"""Per-packet physics vectors, log-Z normalization and causal flow windows.

Column order everywhere is ``(size, iat, direction, window, flags, payload_ratio)``.
Size, IAT and TCP window are log-scaled and z-scored with statistics fitted on a
training corpus; the other three columns are already bounded and pass through.
"""

from __future__ import annotations

import hashlib
import ipaddress
import socket
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np

from .errors import BadMagic, EmptyCorpus, Truncated, VersionMismatch
from .ingest import PacketRecord

COLUMNS = ("size", "iat", "direction", "window", "flags", "payload_ratio")
LOG_COLUMNS = (0, 1, 3)
PASS_COLUMNS = (2, 4, 5)
IAT_COL = 1
EPSILON = 1e-5
DEFAULT_N = 100
PRIVATE_NETS = ("10.0.0.0/8", "172.16.0.0/12", "192.168.0.0/16")

UNLABELED = -1
BENIGN = 0
MALICIOUS = 1


@dataclass(frozen=True)
class PhysicsVector:
    size: float
    iat: float
    direction: float
    window: float
    flags: float
    payload_ratio: float

    def as_array(self) -> np.ndarray:
        return np.array(
            [self.size, self.iat, self.direction, self.window, self.flags, self.payload_ratio],
            dtype=np.float64,
        )


@dataclass(frozen=True)
class NormStats:
    mu_log: np.ndarray
    sigma_log: np.ndarray
    epsilon: float = EPSILON

    def __post_init__(self):
        object.__setattr__(self, "mu_log", np.asarray(self.mu_log, dtype=np.float64).reshape(3))
        object.__setattr__(self, "sigma_log", np.asarray(self.sigma_log, dtype=np.float64).reshape(3))
        if np.any(self.sigma_log < 0):
            raise ValueError("sigma_log must be non-negative")

    @classmethod
    def identity(cls) -> "NormStats":
        return cls(np.zeros(3), np.ones(3))

    def __eq__(self, other):
        if not isinstance(other, NormStats):
            return NotImplemented
        return (
            np.array_equal(self.mu_log, other.mu_log)
            and np.array_equal(self.sigma_log, other.sigma_log)
            and self.epsilon == other.epsilon
        )


class LocalNets:
    """Fast IPv4 membership test against a list of CIDR blocks."""

    def __init__(self, cidrs: Iterable[str] = PRIVATE_NETS):
        nets = [ipaddress.IPv4Network(c, strict=False) for c in cidrs]
        self._blocks = [(int(n.network_address), int(n.netmask)) for n in nets]
        self._cache: dict[str, bool] = {}

    def __contains__(self, ip: str) -> bool:
        hit = self._cache.get(ip)
        if hit is None:
            (addr,) = struct.unpack("!I", socket.inet_aton(ip))
            hit = any(addr & mask == net for net, mask in self._blocks)
            self._cache[ip] = hit
        return hit


def _as_local_nets(local_nets) -> LocalNets:
    if isinstance(local_nets, LocalNets):
        return local_nets
    if local_nets is None:
        return LocalNets()
    return LocalNets(local_nets)


def extract_vector(pkt: PacketRecord, prev_ts: float | None, local_nets=None) -> PhysicsVector:
    nets = _as_local_nets(local_nets)
    iat = 0.0 if prev_ts is None else max(0.0, pkt.timestamp - prev_ts)
    return PhysicsVector(
        size=float(pkt.frame_len),
        iat=iat,
        direction=1.0 if pkt.src_ip in nets else -1.0,
        window=float(pkt.tcp_window),
        flags=pkt.tcp_flags / 255.0,
        payload_ratio=pkt.payload_len / pkt.frame_len if pkt.frame_len else 0.0,
    )


def _as_matrix(corpus) -> np.ndarray:
    if isinstance(corpus, np.ndarray):
        return corpus.reshape(-1, 6).astype(np.float64, copy=False)
    rows = [v.as_array() if isinstance(v, PhysicsVector) else np.asarray(v, dtype=np.float64) for v in corpus]
    if not rows:
        return np.empty((0, 6))
    return np.stack(rows)


def fit_norm_stats(corpus) -> NormStats:
    """Mean and population std of ``log(x + 1)`` for size, IAT and window."""
    x = _as_matrix(corpus)
    if x.shape[0] == 0:
        raise EmptyCorpus("cannot fit normalization statistics on an empty corpus")
    logs = np.log1p(x[:, LOG_COLUMNS])
    return NormStats(logs.mean(axis=0), logs.std(axis=0))


def normalize(v, stats: NormStats) -> np.ndarray:
    """Normalize one vector (or an ``(..., 6)`` array) in float64."""
    x = np.array(v.as_array() if isinstance(v, PhysicsVector) else v, dtype=np.float64)
    cols = list(LOG_COLUMNS)
    x[..., cols] = (np.log1p(x[..., cols]) - stats.mu_log) / (stats.sigma_log + stats.epsilon)
    return x


def denormalize_iat(iat_hat: np.ndarray, stats: NormStats) -> np.ndarray:
    """Recover physical inter-arrival seconds from the normalized IAT column."""
    logs = np.asarray(iat_hat, dtype=np.float64) * (stats.sigma_log[1] + stats.epsilon) + stats.mu_log[1]
    return np.maximum(np.expm1(logs), 0.0)


def flow_key(pkt: PacketRecord) -> tuple:
    """Unordered 5-tuple so both directions of a conversation share one flow."""
    a = (pkt.src_ip, pkt.src_port)
    b = (pkt.dst_ip, pkt.dst_port)
    lo, hi = (a, b) if (socket.inet_aton(a[0]), a[1]) <= (socket.inet_aton(b[0]), b[1]) else (b, a)
    return (6 if pkt.is_tcp else 17, lo, hi)


def flow_id_of(key: tuple) -> int:
    proto, (ip1, p1), (ip2, p2) = key
    raw = f"{proto}|{ip1}|{p1}|{ip2}|{p2}".encode()
    return int.from_bytes(hashlib.blake2b(raw, digest_size=8).digest(), "little")


class FlowTracker:
    """Per-flow previous timestamps; turns packets into raw physics rows."""

    def __init__(self, local_nets=None):
        self.nets = _as_local_nets(local_nets)
        self._prev: dict[tuple, float] = {}
        self._ids: dict[tuple, int] = {}

    def vector(self, pkt: PacketRecord) -> tuple[int, np.ndarray]:
        key = flow_key(pkt)
        fid = self._ids.get(key)
        if fid is None:
            fid = self._ids[key] = flow_id_of(key)
        v = extract_vector(pkt, self._prev.get(key), self.nets)
        self._prev[key] = pkt.timestamp
        return fid, v.as_array()


@dataclass
class FlowWindow:
    flow_id: int
    data: np.ndarray
    label: int = UNLABELED
    start_time: float = 0.0

    @property
    def n(self) -> int:
        return self.data.shape[0]


class WindowAssembler:
    """Groups raw rows by flow id into consecutive, non-overlapping windows."""

    def __init__(self, n: int):
        if n < 2:
            raise ValueError("window length must be at least 2")
        self.n = n
        self._rows: dict[int, list[np.ndarray]] = {}
        self._start: dict[int, float] = {}
        self.rows_in = 0
        self.windows_out = 0

    def add(self, flow_id: int, timestamp: float, row: np.ndarray) -> tuple[int, float, np.ndarray] | None:
        self.rows_in += 1
        buf = self._rows.setdefault(flow_id, [])
        if not buf:
            self._start[flow_id] = timestamp
        buf.append(row)
        if len(buf) < self.n:
            return None
        self._rows[flow_id] = []
        self.windows_out += 1
        return flow_id, self._start[flow_id], np.stack(buf)

    def pending(self) -> dict[int, int]:
        return {fid: len(rows) for fid, rows in self._rows.items() if rows}


@dataclass
class WindowStreamCounters:
    packets: int = 0
    windows: int = 0
    dropped_partials: int = 0
    dropped_packets: int = 0


def window_stream(
    pkts: Iterable[PacketRecord],
    n: int = DEFAULT_N,
    stats: NormStats | None = None,
    local_nets=None,
    label: int = UNLABELED,
    counters: WindowStreamCounters | None = None,
    normalized: bool = True,
) -> Iterator[FlowWindow]:
    """Yield one FlowWindow per ``n`` consecutive packets of each flow.

    With ``normalized=False`` (or no stats) the windows hold raw physics rows.
    Trailing partial windows are dropped once the input is exhausted.
    """
    counters = counters if counters is not None else WindowStreamCounters()
    tracker = FlowTracker(local_nets)
    asm = WindowAssembler(n)
    for pkt in pkts:
        counters.packets += 1
        fid, row = tracker.vector(pkt)
        done = asm.add(fid, pkt.timestamp, row)
        if done is None:
            continue
        fid, start, raw = done
        counters.windows += 1
        data = normalize(raw, stats) if (normalized and stats is not None) else raw
        yield FlowWindow(fid, data.astype(np.float32), label, start)
    for count in asm.pending().values():
        counters.dropped_partials += 1
        counters.dropped_packets += count


@dataclass
class WindowSet:
    """A batch of equally sized windows plus the statistics that normalized them."""

    data: np.ndarray  # (W, n, 6) float32
    labels: np.ndarray  # (W,) int8
    flow_ids: np.ndarray  # (W,) uint64
    start_times: np.ndarray  # (W,) float64
    stats: NormStats
    kinds: np.ndarray | None = field(default=None, compare=False)

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float32)
        if self.data.ndim != 3 or self.data.shape[2] != 6:
            raise ValueError(f"window data must be (W, n, 6), got {self.data.shape}")
        self.labels = np.asarray(self.labels, dtype=np.int8)
        self.flow_ids = np.asarray(self.flow_ids, dtype=np.uint64)
        self.start_times = np.asarray(self.start_times, dtype=np.float64)

    def __len__(self) -> int:
        return self.data.shape[0]

    @property
    def n(self) -> int:
        return self.data.shape[1]

    def __iter__(self) -> Iterator[FlowWindow]:
        for i in range(len(self)):
            yield FlowWindow(int(self.flow_ids[i]), self.data[i], int(self.labels[i]), float(self.start_times[i]))

    def subset(self, idx) -> "WindowSet":
        idx = np.asarray(idx)
        return WindowSet(
            self.data[idx], self.labels[idx], self.flow_ids[idx], self.start_times[idx], self.stats,
            None if self.kinds is None else self.kinds[idx],
        )

    @classmethod
    def from_windows(cls, windows: Sequence[FlowWindow], stats: NormStats, n: int | None = None) -> "WindowSet":
        if not windows:
            n = n or DEFAULT_N
            return cls(np.empty((0, n, 6), np.float32), [], [], [], stats)
        return cls(
            np.stack([w.data for w in windows]),
            [w.label for w in windows],
            [w.flow_id for w in windows],
            [w.start_time for w in windows],
            stats,
        )

    @classmethod
    def concat(cls, sets: Sequence["WindowSet"]) -> "WindowSet":
        kinds = None
        if all(s.kinds is not None for s in sets):
            kinds = np.concatenate([s.kinds for s in sets])
        return cls(
            np.concatenate([s.data for s in sets]),
            np.concatenate([s.labels for s in sets]),
            np.concatenate([s.flow_ids for s in sets]),
            np.concatenate([s.start_times for s in sets]),
            sets[0].stats,
            kinds,
        )

    def iat_seconds(self) -> np.ndarray:
        return denormalize_iat(self.data[:, :, IAT_COL], self.stats)


# window-tensor file format
WINDOW_MAGIC = b"AEGT"
WINDOW_VERSION = 1
_WIN_HEADER = struct.Struct("<4sIIIQ")
_STATS = struct.Struct("<7d")


def _record_dtype(n: int) -> np.dtype:
    return np.dtype([("flow_id", "<u8"), ("start", "<f8"), ("label", "i1"), ("data", "<f4", (n, 6))])


def pack_stats(stats: NormStats) -> bytes:
    return _STATS.pack(*stats.mu_log, *stats.sigma_log, stats.epsilon)


def unpack_stats(buf: bytes) -> NormStats:
    vals = _STATS.unpack(buf)
    return NormStats(np.array(vals[:3]), np.array(vals[3:6]), vals[6])


def write_windows(path: str | Path, windows: WindowSet) -> int:
    n = windows.n
    rec = np.empty(len(windows), dtype=_record_dtype(n))
    rec["flow_id"] = windows.flow_ids
    rec["start"] = windows.start_times
    rec["label"] = windows.labels
    rec["data"] = windows.data
    blob = _WIN_HEADER.pack(WINDOW_MAGIC, WINDOW_VERSION, n, 6, len(windows)) + pack_stats(windows.stats) + rec.tobytes()
    Path(path).write_bytes(blob)
    return len(blob)


def read_windows(path: str | Path) -> WindowSet:
    blob = Path(path).read_bytes()
    if len(blob) < 4 or blob[:4] != WINDOW_MAGIC:
        raise BadMagic(f"{path}: not a window-tensor file")
    if len(blob) < _WIN_HEADER.size + _STATS.size:
        raise Truncated(f"{path}: header cut short")
    _, version, n, dims, count = _WIN_HEADER.unpack_from(blob)
    if version != WINDOW_VERSION:
        raise VersionMismatch(f"{path}: version {version}, expected {WINDOW_VERSION}")
    if dims != 6:
        raise VersionMismatch(f"{path}: {dims} feature columns, expected 6")
    stats = unpack_stats(blob[_WIN_HEADER.size : _WIN_HEADER.size + _STATS.size])
    body = blob[_WIN_HEADER.size + _STATS.size :]
    dt = _record_dtype(n)
    if len(body) < count * dt.itemsize:
        raise Truncated(f"{path}: expected {count} windows, file holds {len(body) // dt.itemsize}")
    rec = np.frombuffer(body, dtype=dt, count=count)
    return WindowSet(rec["data"].copy(), rec["label"].copy(), rec["flow_id"].copy(), rec["start"].copy(), stats)
