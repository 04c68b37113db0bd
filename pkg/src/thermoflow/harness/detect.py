"""Engine side of the bridge: consume ring slots, assemble windows, emit verdicts."""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from ..bridge import Ring
from ..network.model import SWARM_BATCH, ModelParams, predict, verdicts_from
from ..physics import WindowAssembler, normalize

VERDICT_FIELDS = ("flow_id", "window_index", "probability", "entropy_bits", "tvd_flag", "verdict", "batch_latency_us")


@dataclass(frozen=True)
class VerdictLine:
    flow_id: int
    window_index: int
    probability: float
    entropy_bits: float
    tvd_flag: bool
    malicious: bool
    batch_latency_us: float
    emitted_at: float

    def format(self, sep: str = ",") -> str:
        return sep.join(
            [
                str(self.flow_id),
                str(self.window_index),
                f"{self.probability:.6f}",
                f"{self.entropy_bits:.6f}",
                "anomaly" if self.tvd_flag else "benign",
                "malicious" if self.malicious else "benign",
                f"{self.batch_latency_us:.1f}",
            ]
        )


@dataclass
class DetectSummary:
    slots_consumed: int = 0
    windows: int = 0
    batches: int = 0
    polls: int = 0
    verdicts: list[VerdictLine] = field(default_factory=list)
    slots_per_flow: dict[int, int] = field(default_factory=dict)
    residual_per_flow: dict[int, int] = field(default_factory=dict)


def detect_stream(
    ring: Ring,
    params: ModelParams,
    window_n: int | None = None,
    batch: int = SWARM_BATCH,
    poll: float = 1e-3,
    idle_timeout: float | None = None,
    max_windows: int | None = None,
    on_verdict: Callable[[VerdictLine], None] | None = None,
    read_chunk: int = 4096,
) -> DetectSummary:
    """Consume the ring until the producer closes it (and it drains), or until
    ``idle_timeout`` seconds pass with no new slots.

    Windows are scored ``batch`` at a time; a partial batch is flushed whenever
    the ring runs dry so verdict latency stays bounded.
    """
    n = window_n or params.hyper.n
    asm = WindowAssembler(n)
    summary = DetectSummary()
    ready_ids: list[int] = []
    ready_rows: list[np.ndarray] = []
    per_flow_index: dict[int, int] = {}

    def flush():
        if not ready_rows:
            return
        t0 = time.perf_counter()
        x = normalize(np.stack(ready_rows), params.stats).astype(np.float32)
        logits, probs, ents = predict(x, params, batch)
        verdicts = verdicts_from(ready_ids, logits, probs, ents, params.tvd)
        latency = (time.perf_counter() - t0) * 1e6
        now = time.time()
        summary.batches += 1
        for v in verdicts:
            idx = per_flow_index.get(v.flow_id, 0)
            per_flow_index[v.flow_id] = idx + 1
            line = VerdictLine(v.flow_id, idx, v.probability, v.entropy, v.tvd_anomaly, v.malicious, latency, now)
            summary.verdicts.append(line)
            if on_verdict is not None:
                on_verdict(line)
        summary.windows += len(verdicts)
        ready_ids.clear()
        ready_rows.clear()

    last_data = time.monotonic()
    while True:
        slots = ring.consume_batch(read_chunk)
        summary.polls += 1
        if slots.size:
            last_data = time.monotonic()
            summary.slots_consumed += slots.size
            for fid, ts, vec in zip(slots["flow_id"].tolist(), slots["timestamp"].tolist(), slots["vector"]):
                summary.slots_per_flow[fid] = summary.slots_per_flow.get(fid, 0) + 1
                done = asm.add(fid, ts, vec.astype(np.float64))
                if done is not None:
                    ready_ids.append(done[0])
                    ready_rows.append(done[2])
                    if len(ready_rows) >= batch:
                        flush()
            if max_windows is not None and summary.windows + len(ready_rows) >= max_windows:
                break
            continue
        flush()
        if ring.producer_closed and len(ring) == 0:
            break
        if idle_timeout is not None and time.monotonic() - last_data >= idle_timeout:
            break
        time.sleep(poll)
    flush()
    summary.residual_per_flow = asm.pending()
    return summary
