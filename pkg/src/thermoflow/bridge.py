"""Single-producer/single-consumer ring of physics records in a memory-mapped file.

File layout (little-endian, offsets in bytes)::

    header page (4096 bytes)
      0   4s   magic "AEGR"
      4   u32  version (1)
      8   u64  capacity in slots (power of two)
      16  u32  slot size (64)
      20  u32  producer-closed flag
      64  u64  write counter   (own cache line)
      128 u64  read counter    (own cache line)
    slot i at 4096 + 64 * i
      0   u64  sequence (value of the write counter when published)
      8   u64  flow id
      16  f64  timestamp, seconds
      24  6xf32 raw physics vector (size, iat, direction, window, flags, payload_ratio)
      48  u64  flags (reserved, 0)
      56  8    padding

Ordering: the producer writes the slot bytes and only then stores the new
write counter; the consumer loads the write counter before touching slots and
stores the read counter only after copying them out. Each counter is an aligned
8-byte store issued from a separate interpreter-level call, so neither the C
compiler nor an x86-64 (TSO) CPU can reorder it with the slot copy; that gives
release/acquire semantics on this platform. As a second line of defence the
consumer checks every slot's sequence field and stops at the first one that
does not match its expected index.
"""

from __future__ import annotations

import mmap
import multiprocessing as mp
import os
import struct
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import BadCapacity, BadMagic, RingMissing, SequenceGap, VersionMismatch

MAGIC = b"AEGR"
VERSION = 1
SLOT_SIZE = 64
HEADER_SIZE = 4096
MIN_CAPACITY = 1024
_WRITE_OFF = 64
_READ_OFF = 128

SLOT_DTYPE = np.dtype(
    {
        "names": ["sequence", "flow_id", "timestamp", "vector", "flags"],
        "formats": ["<u8", "<u8", "<f8", ("<f4", (6,)), "<u8"],
        "offsets": [0, 8, 16, 24, 48],
        "itemsize": SLOT_SIZE,
    }
)


def ring_file_size(capacity: int) -> int:
    return HEADER_SIZE + capacity * SLOT_SIZE


class Ring:
    """One end (or both, in tests) of an SPSC ring living in ``path``."""

    def __init__(self, path: str | Path, fh, mm: mmap.mmap):
        self.path = Path(path)
        self._fh = fh
        self._mm = mm
        magic, version, capacity, slot_size = struct.unpack_from("<4sIQI", mm, 0)
        if magic != MAGIC:
            raise BadMagic(f"{path}: not a ring file")
        if version != VERSION or slot_size != SLOT_SIZE:
            raise VersionMismatch(f"{path}: version {version}, slot size {slot_size}")
        self.capacity = capacity
        self._mask = capacity - 1
        self._counters = np.ndarray((HEADER_SIZE // 8,), dtype="<u8", buffer=mm, offset=0)
        self._closed = np.ndarray((1,), dtype="<u4", buffer=mm, offset=20)
        self.slots = np.ndarray((capacity,), dtype=SLOT_DTYPE, buffer=mm, offset=HEADER_SIZE)
        self.would_block = 0

    @classmethod
    def create(cls, path: str | Path, capacity: int) -> "Ring":
        if capacity < MIN_CAPACITY or capacity & (capacity - 1):
            raise BadCapacity(f"capacity must be a power of two >= {MIN_CAPACITY}, got {capacity}")
        size = ring_file_size(capacity)
        # "xb" refuses to clobber an existing ring
        with open(path, "xb") as fh:
            fh.truncate(size)
            header = struct.pack("<4sIQII", MAGIC, VERSION, capacity, SLOT_SIZE, 0)
            fh.write(header)
        return cls.attach(path)

    @classmethod
    def attach(cls, path: str | Path) -> "Ring":
        if not os.path.exists(path):
            raise RingMissing(f"no ring at {path}")
        fh = open(path, "r+b")
        mm = mmap.mmap(fh.fileno(), 0)
        if len(mm) < HEADER_SIZE:
            mm.close()
            fh.close()
            raise BadMagic(f"{path}: too small for a ring header")
        return cls(path, fh, mm)

    def close(self) -> None:
        self.slots = self._counters = self._closed = None
        self._mm.close()
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    # counters
    @property
    def write_counter(self) -> int:
        return int(self._counters[_WRITE_OFF // 8])

    @property
    def read_counter(self) -> int:
        return int(self._counters[_READ_OFF // 8])

    def __len__(self) -> int:
        return self.write_counter - self.read_counter

    @property
    def producer_closed(self) -> bool:
        return bool(self._closed[0])

    def close_producer(self) -> None:
        self._closed[0] = 1

    # producer side
    def publish(self, flow_id: int, timestamp: float, vector, flags: int = 0) -> bool:
        """Write one record; ``False`` means the ring is full (nothing written)."""
        w = self.write_counter
        if w - self.read_counter >= self.capacity:
            self.would_block += 1
            return False
        slot = self.slots[w & self._mask]
        slot["flow_id"] = flow_id
        slot["timestamp"] = timestamp
        slot["vector"] = vector
        slot["flags"] = flags
        slot["sequence"] = w
        self._counters[_WRITE_OFF // 8] = w + 1
        return True

    def publish_many(self, flow_ids, timestamps, vectors) -> int:
        """Write as many records as fit, in order; returns how many were accepted."""
        w = self.write_counter
        room = self.capacity - (w - self.read_counter)
        k = min(room, len(flow_ids))
        if k <= 0:
            self.would_block += 1
            return 0
        start = w & self._mask
        first = min(k, self.capacity - start)
        for lo, hi, dst in ((0, first, start), (first, k, 0)):
            if hi <= lo:
                continue
            view = self.slots[dst : dst + hi - lo]
            view["flow_id"] = flow_ids[lo:hi]
            view["timestamp"] = timestamps[lo:hi]
            view["vector"] = vectors[lo:hi]
            view["flags"] = 0
            view["sequence"] = np.arange(w + lo, w + hi, dtype=np.uint64)
        self._counters[_WRITE_OFF // 8] = w + k
        return k

    # consumer side
    def consume_batch(self, max_records: int) -> np.ndarray:
        """Copy out up to ``max_records`` published slots, oldest first."""
        w = self.write_counter  # acquire: slots below w are complete
        r = self.read_counter
        k = min(w - r, max_records)
        if k <= 0:
            return np.empty(0, dtype=SLOT_DTYPE)
        start = r & self._mask
        first = min(k, self.capacity - start)
        out = np.empty(k, dtype=SLOT_DTYPE)
        out[:first] = self.slots[start : start + first]
        if k > first:
            out[first:] = self.slots[: k - first]
        expected = np.arange(r, r + k, dtype=np.uint64)
        bad = np.flatnonzero(out["sequence"] != expected)
        if bad.size:
            # slot not yet visible despite the counter: take the clean prefix only
            k = int(bad[0])
            out = out[:k]
        self._counters[_READ_OFF // 8] = r + k  # release the slots back to the producer
        return out


def ring_create(path, capacity: int) -> Ring:
    return Ring.create(path, capacity)


def harvest(packets, ring: Ring, local_nets=None, poll: float = 50e-6, close: bool = True) -> int:
    """Producer role: turn packets into physics rows and publish them with back-pressure."""
    from .physics import FlowTracker

    tracker = FlowTracker(local_nets)
    sent = 0
    for pkt in packets:
        fid, row = tracker.vector(pkt)
        while not ring.publish(fid, pkt.timestamp, row):
            time.sleep(poll)
        sent += 1
    if close:
        ring.close_producer()
    return sent


# throughput / correctness bench

def _payload(seq: np.ndarray):
    flow = (seq * np.uint64(0x9E3779B97F4A7C15)) >> np.uint64(7)
    ts = seq.astype(np.float64) * 1e-6
    vec = np.empty((seq.size, 6), dtype=np.float32)
    vec[:] = (seq % np.uint64(4096)).astype(np.float32)[:, None]
    return flow, ts, vec


def _produce(path, records: int, chunk: int, stall_prob: float, seed: int, blocked) -> None:
    rng = np.random.default_rng(seed)
    ring = Ring.attach(path)
    sent = 0
    try:
        while sent < records:
            k = int(min(records - sent, rng.integers(1, chunk + 1)))
            seq = np.arange(sent, sent + k, dtype=np.uint64)
            flow, ts, vec = _payload(seq)
            done = 0
            while done < k:
                got = ring.publish_many(flow[done:], ts[done:], vec[done:])
                if got == 0:
                    time.sleep(20e-6)
                done += got
            sent += k
            if stall_prob and rng.random() < stall_prob:
                time.sleep(float(rng.uniform(0, 300e-6)))
        ring.close_producer()
    finally:
        if blocked is not None:
            blocked.value = ring.would_block
        ring.close()


@dataclass
class BenchReport:
    records: int
    capacity: int
    batch: int
    seconds: float
    would_block: int
    batch_latency_us: dict = field(default_factory=dict)

    @property
    def records_per_sec(self) -> float:
        return self.records / self.seconds if self.seconds else float("inf")

    def to_text(self) -> str:
        lat = " ".join(f"{k}={v:.1f}" for k, v in self.batch_latency_us.items())
        return (
            f"records\t{self.records}\ncapacity\t{self.capacity}\nbatch\t{self.batch}\n"
            f"seconds\t{self.seconds:.3f}\nrecords_per_sec\t{self.records_per_sec:.0f}\n"
            f"producer_would_block\t{self.would_block}\nbatch_latency_us\t{lat}\n"
        )


def bench_ring(
    records: int,
    capacity: int = 1 << 16,
    batch: int = 64,
    path: str | Path | None = None,
    mode: str = "process",
    chunk: int = 4096,
    stall_prob: float = 0.0,
    consumer_stall_prob: float = 0.0,
    seed: int = 0,
) -> BenchReport:
    """Push ``records`` slots through a fresh ring and audit them on the way out.

    The consumer checks that sequences arrive as exactly ``0 .. records-1`` and
    that every payload matches its sequence; any violation raises SequenceGap.
    ``batch`` counts records per consume call.
    """
    import tempfile

    tmpdir = None
    if path is None:
        tmpdir = tempfile.TemporaryDirectory()
        path = Path(tmpdir.name) / "bench.ring"
    rng = np.random.default_rng(seed + 1)
    ring = Ring.create(path, capacity)
    blocked = mp.Value("q", 0) if mode == "process" else None
    args = (str(path), records, chunk, stall_prob, seed, blocked)
    if mode == "process":
        worker = mp.get_context("fork").Process(target=_produce, args=args, daemon=True)
    else:
        holder = type("Box", (), {"value": 0})()
        args = args[:-1] + (holder,)
        worker = threading.Thread(target=_produce, args=args, daemon=True)
    latencies = []
    expected = 0
    t0 = time.perf_counter()
    worker.start()
    try:
        while expected < records:
            tb = time.perf_counter()
            got = ring.consume_batch(batch)
            if got.size == 0:
                if ring.producer_closed and len(ring) == 0:
                    break
                time.sleep(20e-6)
                continue
            latencies.append(time.perf_counter() - tb)
            seq = got["sequence"]
            if seq[0] != expected or np.any(np.diff(seq.astype(np.int64)) != 1):
                raise SequenceGap(f"expected sequence {expected}, got {seq[:4]}...")
            flow, ts, vec = _payload(seq)
            if not (np.array_equal(got["flow_id"], flow) and np.array_equal(got["timestamp"], ts) and np.array_equal(got["vector"], vec)):
                raise SequenceGap(f"payload mismatch near sequence {expected}")
            expected += seq.size
            if consumer_stall_prob and rng.random() < consumer_stall_prob:
                time.sleep(float(rng.uniform(0, 300e-6)))
        elapsed = time.perf_counter() - t0
    finally:
        worker.join(timeout=30)
    if expected != records:
        raise SequenceGap(f"received {expected} of {records} records")
    wb = blocked.value if mode == "process" else holder.value
    if ring.write_counter != records or ring.read_counter != records:
        raise SequenceGap("counters disagree with the number of records at quiescence")
    ring.close()
    if tmpdir is not None:
        tmpdir.cleanup()
    lat = np.asarray(latencies) * 1e6
    pct = {f"p{q}": float(np.percentile(lat, q)) for q in (50, 90, 99)} if lat.size else {}
    if lat.size:
        pct["max"] = float(lat.max())
    return BenchReport(records, capacity, batch, elapsed, int(wb), pct)
