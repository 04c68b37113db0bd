"""Producer and consumer on a shared-memory ring.

A thread replays synthetic packets into the ring while the detector drains
it, scores complete windows in batches and prints a few verdict lines.
"""

import tempfile
import threading
from pathlib import Path

from thermoflow.bridge import Ring, bench_ring, harvest
from thermoflow.harness import VERDICT_FIELDS, detect_stream
from thermoflow.network import Hyper, TrainConfig, train
from thermoflow.synth import CorpusConfig, TrafficProfile, build_corpus, generate, time_ordered

train_set, _ = build_corpus(CorpusConfig.default(600, n=50, seed=3))
params = train(train_set, TrainConfig(epochs=8), Hyper(d=8, d_h=16, d_s=4, n=50)).params

packets = time_ordered(
    list(generate(TrafficProfile("benign_stochastic", seed=77), 4, 150))
    + list(generate(TrafficProfile("morphed_beacon", seed=77), 4, 150))
)

with tempfile.TemporaryDirectory() as tmp:
    path = Path(tmp) / "demo.ring"
    consumer = Ring.create(path, 1024)
    producer = Ring.attach(path)
    t = threading.Thread(target=harvest, args=(packets, producer))
    t.start()
    summary = detect_stream(consumer, params, idle_timeout=5.0)
    t.join()
    print(f"producer blocked {producer.would_block} times on a 1024-slot ring")
    producer.close()
    consumer.close()

print(", ".join(VERDICT_FIELDS))
for v in summary.verdicts[:8]:
    print(v.format(", "))
print(f"{summary.windows} windows from {summary.slots_consumed} slots in {summary.batches} batches")

print(bench_ring(1_000_000, batch=256).to_text())
