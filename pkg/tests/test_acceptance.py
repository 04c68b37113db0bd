"""Acceptance criteria, one test each; a PASS/FAIL line per criterion is printed
in the terminal summary."""

import io
import math
import threading
import time

import numpy as np
import pytest

from thermoflow.bridge import Ring, bench_ring, harvest
from thermoflow.dynamics import LtcParams, ltc_step, ltc_tau, zoh_discretize
from thermoflow.harness import ConfusionCounts, compute_metrics, detect_stream, evaluate, stress
from thermoflow.ingest import PcapReader, write_pcap
from thermoflow.manifold import distance, project
from thermoflow.network import Hyper, TrainConfig, init_params, train
from thermoflow.network.checkpoint import dumps, loads
from thermoflow.network.model import PARAM_ORDER
from thermoflow.physics import read_windows, write_windows
from thermoflow.synth import CorpusConfig, TrafficProfile, build_corpus, generate, time_ordered
from thermoflow.tvd import TvdConfig, is_anomalous, position_softmax, shannon_entropy

from conftest import record
from gradcheck import max_relative_error


@pytest.fixture(scope="session")
def desk_model(tmp_path_factory):
    """Criterion-6 model: default synthetic corpus, d_h=16, 20 epochs."""
    t0 = time.perf_counter()
    train_set, test_set = build_corpus(CorpusConfig.default(2000, n=100, seed=0))
    result = train(train_set, TrainConfig(epochs=20, seed=0), Hyper(d=16, d_h=16, d_s=8, n=100))
    return result, train_set, test_set, time.perf_counter() - t0


def test_criterion_01_metric_reproduction():
    r = compute_metrics(ConfusionCounts(tp=57551, fp=265, tn=123505, fn=287))
    ok = abs(r.tpr - 0.9950) <= 5e-4 and abs(r.fpr - 0.002141) <= 5e-4 and abs(r.f1 - 0.9952) <= 5e-4
    record(1, "metric reproduction", ok, f"tpr={r.tpr:.5f} fpr={r.fpr:.6f} f1={r.f1:.5f}")
    assert ok


def test_criterion_02_gradient_fidelity():
    t0 = time.perf_counter()
    worst = max(max_relative_error(seed)[0] for seed in range(10))
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-3 and elapsed < 60
    record(2, "gradient fidelity", ok, f"max rel err {worst:.2e} over 10 instances in {elapsed:.1f}s")
    assert ok


def test_criterion_03_closed_forms():
    a_bar, b_bar = zoh_discretize(-1.0, 1.0, math.log(2))
    e_zoh = max(abs(a_bar - 0.5), abs(b_bar - 0.5))
    d_h = 5
    p = LtcParams(np.linspace(0.3, 2.0, d_h), np.zeros((d_h, d_h)), np.zeros((d_h, 3)), np.zeros(d_h))
    h0 = np.linspace(-1.0, 2.0, d_h)
    dt = 0.37
    e_ltc = np.abs(ltc_step(h0, np.zeros(3), dt, p) - h0 * np.exp(-dt / ltc_tau(dt, p.tau_theta))).max()
    e_ball = abs(distance(np.zeros(2), np.array([0.5, 0.0])) - math.log(3))
    ok = e_zoh <= 1e-12 and e_ltc <= 1e-9 and e_ball <= 1e-9
    record(3, "closed-form kernels", ok, f"zoh {e_zoh:.1e}, ltc {e_ltc:.1e}, ball {e_ball:.1e}")
    assert ok


def test_criterion_04_entropy_properties():
    rng = np.random.default_rng(4)
    n = 64
    # dyadic scores and integer shifts keep every addition exact in float64
    scores = np.round(rng.normal(size=(100_000, n)) * rng.uniform(0, 10, (100_000, 1)) * 2**20) / 2**20
    shift = rng.integers(-1000, 1000, (100_000, 1)).astype(np.float64)
    p = position_softmax(scores)
    h = shannon_entropy(p, check=False)
    h_shift = shannon_entropy(position_softmax(scores + shift), check=False)
    cfg = TvdConfig(baseline_entropy=math.log2(n) - 0.05, tau_threshold=0.12)
    bounds = bool(np.all(h >= 0) and np.all(h <= math.log2(n)))
    uniform = shannon_entropy(position_softmax(np.zeros(n))) == math.log2(n)
    onehot = shannon_entropy(np.eye(n)[0]) == 0.0
    shift_ok = np.array_equal(h, h_shift) and np.array_equal(is_anomalous(h, cfg), is_anomalous(h_shift, cfg))
    ok = bounds and uniform and onehot and shift_ok
    record(4, "entropy/TVD properties", ok, f"bounds={bounds} uniform={uniform} onehot={onehot} shift-identical={shift_ok}")
    assert ok


def test_criterion_05_manifold_safety():
    rng = np.random.default_rng(5)
    x = rng.normal(size=(100_000, 6))
    x *= 10.0 ** rng.uniform(-3, 12, (100_000, 1)) / np.linalg.norm(x, axis=1, keepdims=True)
    w_p = rng.normal(size=(16, 6))
    z = project(x, w_p)
    inside = bool(np.all(np.linalg.norm(z, axis=1) < 1))
    d_pairs = distance(z[:-1], z[1:])
    block = distance(z[:1000, None, :], z[None, 1000:2000, :])
    finite = bool(np.all(np.isfinite(d_pairs)) and np.all(np.isfinite(block)))
    sym = float(np.abs(block - distance(z[None, 1000:2000, :], z[:1000, None, :])).max())
    u, v, w = z[:30_000], z[30_000:60_000], z[60_000:90_000]
    tri = float((distance(u, w) - distance(u, v) - distance(v, w)).max())
    ok = inside and finite and sym <= 1e-9 and tri <= 1e-9
    record(5, "manifold safety", ok, f"inside={inside} finite={finite} asym={sym:.1e} worst triangle excess={tri:.1e}")
    assert ok


def test_criterion_06_desk_learning(desk_model):
    result, _, test_set, elapsed = desk_model
    rep = evaluate(result.params, test_set)
    ok = rep.f1 >= 0.95 and elapsed <= 300 and len(result.history) <= 20
    record(6, "desk-scale learning", ok, f"test f1={rep.f1:.4f} in {elapsed:.0f}s over {len(result.history)} epochs")
    assert ok


def test_criterion_07_noise_trend(desk_model):
    result, _, test_set, _ = desk_model
    rows = stress(result.params, test_set, (0.0, 0.05, 0.10, 0.15), seed=7)
    f1 = [r.f1 for r in rows]
    ok = all(b <= a for a, b in zip(f1, f1[1:])) and f1[-1] < f1[0]
    record(7, "noise-stress trend", ok, "f1 " + " ".join(f"{r.level:.2f}:{r.f1:.4f}" for r in rows))
    assert ok


def test_criterion_08_ring_correctness():
    t0 = time.perf_counter()
    rep = bench_ring(10_000_000, capacity=1 << 16, batch=64, stall_prob=0.01, consumer_stall_prob=0.01, seed=8)
    elapsed = time.perf_counter() - t0
    ok = rep.records == 10_000_000 and elapsed < 120
    record(8, "ring correctness", ok, f"1e7 records audited, {rep.records_per_sec / 1e6:.2f} M rec/s, would-block {rep.would_block}, {elapsed:.0f}s")
    assert ok


def _replay(params, packets, path):
    ring = Ring.create(path, 1 << 14)
    producer = Ring.attach(path)
    t = threading.Thread(target=harvest, args=(packets, producer), daemon=True)
    t.start()
    summary = detect_stream(ring, params, idle_timeout=10.0)
    t.join()
    producer.close()
    ring.close()
    return summary


def test_criterion_09_end_to_end(desk_model, tmp_path):
    result, _, _, _ = desk_model
    t0 = time.perf_counter()
    seed = 9001
    beacons = list(generate(TrafficProfile("c2_beacon", seed=seed), 20, 500)) + list(generate(TrafficProfile("morphed_beacon", seed=seed), 20, 500))
    benign = list(generate(TrafficProfile("benign_stochastic", seed=seed), 40, 500))
    rates = []
    for name, pkts in (("beacon", beacons), ("benign", benign)):
        buf = io.BytesIO()
        write_pcap(time_ordered(pkts), buf)
        buf.seek(0)
        summary = _replay(result.params, PcapReader(buf), tmp_path / f"{name}.ring")
        rates.append(np.mean([v.malicious for v in summary.verdicts]))
        assert summary.windows == 200
    elapsed = time.perf_counter() - t0
    ok = rates[0] >= 0.9 and rates[1] <= 0.1 and elapsed < 120
    record(9, "end-to-end smoke", ok, f"beacon flagged {rates[0]:.1%}, benign flagged {rates[1]:.1%}, {elapsed:.0f}s")
    assert ok


def test_criterion_10_round_trips(tmp_path):
    _, test_set = build_corpus(CorpusConfig.default(200, n=20, seed=10))
    pkts = time_ordered(list(generate(TrafficProfile("morphed_beacon", seed=10), 5, 200)))
    buf = io.BytesIO()
    write_pcap(pkts, buf)
    buf.seek(0)
    pcap_ok = list(PcapReader(buf)) == pkts
    write_windows(tmp_path / "w.aegt", test_set)
    back = read_windows(tmp_path / "w.aegt")
    win_ok = (
        back.data.tobytes() == test_set.data.tobytes()
        and np.array_equal(back.labels, test_set.labels)
        and np.array_equal(back.flow_ids, test_set.flow_ids)
        and np.array_equal(back.start_times, test_set.start_times)
        and back.stats == test_set.stats
    )
    params = init_params(Hyper(n=20), seed=10)
    params.tvd = TvdConfig(5.5, 0.3, 0.1)
    params.stats = test_set.stats
    q = loads(dumps(params))
    ckpt_ok = (
        all(q.weights[k].tobytes() == params.weights[k].tobytes() for k in PARAM_ORDER)
        and q.tvd == params.tvd and q.stats == params.stats and q.hyper == params.hyper
    )
    ok = pcap_ok and win_ok and ckpt_ok
    record(10, "format round-trips", ok, f"pcap={pcap_ok} windows={win_ok} checkpoint={ckpt_ok}")
    assert ok
