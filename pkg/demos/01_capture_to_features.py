"""From packets to physics windows.

Generates a few flows, writes them to a pcap, parses the capture back and
turns every flow into normalized 6-column windows.
"""

import io

import numpy as np

from thermoflow.ingest import PcapReader, write_pcap
from thermoflow.physics import COLUMNS, WindowStreamCounters, fit_norm_stats, normalize, window_stream
from thermoflow.synth import TrafficProfile, generate, time_ordered

packets = time_ordered(
    list(generate(TrafficProfile("benign_stochastic", seed=1), 3, 250))
    + list(generate(TrafficProfile("c2_beacon", seed=1), 2, 250))
)
buf = io.BytesIO()
size = write_pcap(packets, buf)
print(f"wrote {len(packets)} packets, {size} bytes of pcap")

buf.seek(0)
reader = PcapReader(buf)
parsed = list(reader)
print("parse counters:", reader.counters)

# raw rows first, so the statistics can be fitted on them
counters = WindowStreamCounters()
raw = list(window_stream(parsed, n=100, normalized=False, counters=counters))
stats = fit_norm_stats(np.concatenate([w.data for w in raw]))
print(f"{counters.windows} windows, {counters.dropped_packets} packets left in partial windows")
print("log-space means:", np.round(stats.mu_log, 3), "stds:", np.round(stats.sigma_log, 3))

for w in raw[:3]:
    z = normalize(w.data, stats)
    print(f"flow {w.flow_id:>20d}: " + "  ".join(f"{c}={z[:, i].mean():+.2f}" for i, c in enumerate(COLUMNS)))
