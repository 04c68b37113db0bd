import numpy as np
import pytest
from scipy.stats import ks_2samp

from thermoflow.physics import COLUMNS, IAT_COL, NormStats, WindowSet, fit_norm_stats, normalize, read_windows
from thermoflow.synth import (
    CorpusConfig,
    NoiseSpec,
    TrafficProfile,
    build_corpus,
    format_corpus_config,
    generate,
    inject_noise,
    parse_corpus_config,
    raw_windows,
)


def _iats_us(packets):
    ts = np.array([round(p.timestamp * 1e6) for p in packets], dtype=np.int64)
    return np.diff(ts)


def test_zero_jitter_beacon_has_equal_gaps():
    pkts = list(generate(TrafficProfile("c2_beacon", jitter=0.0), 1, 200))
    gaps = _iats_us(pkts)
    assert np.all(gaps == gaps[0]) and gaps[0] == 1_000_000


def test_generator_is_deterministic():
    p = TrafficProfile("morphed_beacon", seed=42)
    assert list(generate(p, 3, 50)) == list(generate(p, 3, 50))
    assert list(generate(p, 1, 50)) != list(generate(TrafficProfile("morphed_beacon", seed=43), 1, 50))


def test_profile_validation():
    with pytest.raises(ValueError):
        TrafficProfile("tunnel")
    with pytest.raises(ValueError):
        TrafficProfile("c2_beacon", jitter=1.0)


def _flow_stats(kind, flows=50, count=200):
    pkts = list(generate(TrafficProfile(kind), flows, count))
    sizes = np.array([p.frame_len for p in pkts])
    iats = np.concatenate([_iats_us(pkts[i * count : (i + 1) * count]) for i in range(flows)]) / 1e6
    return sizes, iats


def test_volumetric_anchoring():
    b_size, b_iat = _flow_stats("benign_stochastic")
    m_size, m_iat = _flow_stats("morphed_beacon")
    assert ks_2samp(b_size, m_size).statistic < 0.05
    assert ks_2samp(b_iat, m_iat).statistic > 0.5


def test_beacons_are_rigid():
    _, b_iat = _flow_stats("benign_stochastic")
    _, c_iat = _flow_stats("c2_beacon")
    cv = lambda v: v.std() / v.mean()
    assert cv(b_iat) >= 10 * cv(c_iat)


def _big_windows():
    ws = raw_windows(TrafficProfile("benign_stochastic"), 100, 10, 100)
    stats = fit_norm_stats(ws.data.reshape(-1, 6))
    ws.data = normalize(ws.data.astype(np.float64), stats).astype(np.float32)
    ws.stats = stats
    return ws


def test_noise_level_matches_column_spread():
    ws = _big_windows()
    assert ws.data[..., IAT_COL].size >= 100_000
    noisy = inject_noise(ws, NoiseSpec(0.05, ("iat",), seed=1))
    delta = noisy.data[..., IAT_COL].astype(np.float64) - ws.data[..., IAT_COL]
    target = 0.05 * ws.data[..., IAT_COL].astype(np.float64).std()
    assert abs(delta.std() / target - 1) < 0.05
    untouched = [i for i, c in enumerate(COLUMNS) if c != "iat"]
    assert np.array_equal(noisy.data[..., untouched], ws.data[..., untouched])
    assert np.array_equal(noisy.labels, ws.labels)


def test_noise_identity_and_determinism():
    ws = raw_windows(TrafficProfile("c2_beacon"), 4, 2, 20)
    assert np.array_equal(inject_noise(ws, NoiseSpec(0.0)).data, ws.data)
    a = inject_noise(ws, NoiseSpec(0.1, seed=5))
    b = inject_noise(ws, NoiseSpec(0.1, seed=5))
    assert np.array_equal(a.data, b.data)


def _mix_config(n=10):
    return CorpusConfig(
        [(TrafficProfile("benign_stochastic"), 120, 5), (TrafficProfile("c2_beacon"), 80, 5)], n=n, seed=3
    )


def test_stratified_split_counts(tmp_path):
    train, test = build_corpus(_mix_config(), tmp_path)
    assert len(train) + len(test) == 1000
    assert len(test) == 200
    assert abs(int((test.labels == 0).sum()) - 120) <= 1
    assert abs(int((test.labels == 1).sum()) - 80) <= 1
    back = read_windows(tmp_path / "test.aegt")
    assert np.array_equal(back.data, test.data)


def test_split_is_disjoint_and_stats_fit_on_train_only():
    cfg = _mix_config()
    train, test = build_corpus(cfg)
    keys = lambda ws: {(int(f), float(t)) for f, t in zip(ws.flow_ids, ws.start_times)}
    assert not keys(train) & keys(test)
    raw = WindowSet.concat([raw_windows(p, f, w, cfg.n) for p, f, w in cfg.profiles])
    train_keys = keys(train)
    mask = np.array([(int(f), float(t)) in train_keys for f, t in zip(raw.flow_ids, raw.start_times)])
    assert train.stats == fit_norm_stats(raw.data[mask].reshape(-1, 6))
    assert train.stats is test.stats or train.stats == test.stats


def test_corpus_is_bit_identical_across_runs():
    a, _ = build_corpus(_mix_config())
    b, _ = build_corpus(_mix_config())
    assert a.data.tobytes() == b.data.tobytes()


def test_default_mix():
    cfg = CorpusConfig.default(2000)
    counts = {p.kind: f * w for p, f, w in cfg.profiles}
    assert sum(counts.values()) == 2000
    assert counts["benign_stochastic"] == 1100


def test_config_text_round_trip():
    cfg = CorpusConfig(
        [(TrafficProfile("benign_stochastic", iat_sigma=0.8, seed=4), 10, 3), (TrafficProfile("c2_beacon", period=2.5, seed=4), 7, 2)],
        n=50, test_fraction=0.25, seed=4,
    )
    back = parse_corpus_config(format_corpus_config(cfg))
    assert back == cfg


def test_config_rejects_unknown_keys():
    with pytest.raises(ValueError):
        parse_corpus_config("profile.c2_beacon.colour = red\n")
    with pytest.raises(ValueError):
        parse_corpus_config("just words\n")
