import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from thermoflow.errors import NotADistribution
from thermoflow.tvd import (
    TvdConfig,
    calibrate,
    detect,
    entropy_of_scores,
    is_anomalous,
    position_softmax,
    shannon_entropy,
    thermo_loss,
    update_baseline,
)


def test_softmax_examples():
    assert np.allclose(position_softmax(np.zeros(5)), 0.2)
    assert position_softmax(np.array([0.0, math.log(3)])) == pytest.approx([0.25, 0.75], abs=1e-15)
    p = position_softmax(np.array([1000.0, 0, 0, 0]))
    assert np.all(np.isfinite(p)) and p[0] == pytest.approx(1.0)


def test_entropy_examples():
    assert shannon_entropy(np.full(4, 0.25)) == 2.0
    assert shannon_entropy(np.array([1.0, 0, 0])) == 0.0
    assert shannon_entropy(np.array([0.5, 0.25, 0.25])) == 1.5


def test_entropy_rejects_non_distribution():
    with pytest.raises(NotADistribution):
        shannon_entropy(np.array([0.5, 0.6]))
    with pytest.raises(NotADistribution):
        shannon_entropy(np.array([1.5, -0.5]))


def test_detect_rule():
    cfg = TvdConfig(baseline_entropy=5.0, tau_threshold=0.12)
    assert is_anomalous(4.0, cfg)
    assert not is_anomalous(5.0, cfg)
    assert not is_anomalous(4.88, cfg)


def test_constant_states_are_benign():
    n = 64
    cfg = TvdConfig(baseline_entropy=math.log2(n))
    res = detect(np.ones((n, 3)), cfg)
    assert res.entropy == pytest.approx(math.log2(n), abs=1e-12)
    assert not res.anomaly and res.flag == "benign"


def test_thermo_loss_examples():
    cfg = TvdConfig(baseline_entropy=5.0, lam=0.1)
    assert thermo_loss(0.5, 0, cfg) == pytest.approx(0.0, abs=1e-15)
    assert thermo_loss(3.0, 1, cfg) == 0.0
    assert thermo_loss(4.0, 0, cfg) == pytest.approx(-3.5, abs=1e-12)
    assert thermo_loss(np.array([4.0, 1.0]), np.array([0, 1]), cfg) == pytest.approx(-3.5)
    assert thermo_loss(np.array([4.0]), np.array([1]), cfg) == 0.0


def test_update_baseline():
    assert update_baseline(5.0, [4.0], 0.9) == pytest.approx(4.9, abs=1e-12)
    assert update_baseline(4.0, [3.0, 5.0], 0.9) == 4.0
    assert update_baseline(5.0, [], 0.9) == 5.0
    assert update_baseline(5.0, [0.0], 1 - 1e-12) == pytest.approx(5.0, abs=1e-10)


def test_calibrate_hits_target_rate(rng):
    h = rng.normal(6.0, 0.2, 10_000)
    cfg = calibrate(h, 0.01)
    assert cfg.baseline_entropy == pytest.approx(h.mean())
    assert cfg.tau_threshold >= 0.12
    assert is_anomalous(h, cfg).mean() <= 0.01


def test_calibrate_respects_floor():
    cfg = calibrate(np.full(100, 3.0))
    assert cfg.tau_threshold == 0.12 and cfg.baseline_entropy == 3.0


def test_entropy_bounds_bulk(rng):
    n = 50
    scores = rng.normal(size=(100_000, n)) * rng.uniform(0, 20, (100_000, 1))
    h = entropy_of_scores(scores)
    assert np.all(h >= 0) and np.all(h <= math.log2(n) + 1e-12)


@settings(max_examples=200, deadline=None)
@given(arrays(np.float64, st.integers(2, 40), elements=st.floats(-30, 30)), st.floats(-1e3, 1e3))
def test_shift_invariance_bit_identical(scores, c):
    # shifting by a power of two keeps every float exact, so the max-shifted softmax is unchanged
    shift = float(np.ldexp(1.0, int(np.round(np.log2(abs(c) + 1)))))
    cfg = TvdConfig(baseline_entropy=math.log2(scores.size), tau_threshold=0.12)
    p1, p2 = position_softmax(scores), position_softmax(scores + shift)
    if np.array_equal(scores + shift - shift, scores):
        assert np.array_equal(p1, p2)
        h1, h2 = shannon_entropy(p1, check=False), shannon_entropy(p2, check=False)
        assert h1 == h2 and is_anomalous(h1, cfg) == is_anomalous(h2, cfg)


@settings(max_examples=200, deadline=None)
@given(arrays(np.float64, st.integers(2, 40), elements=st.floats(-30, 30)), st.floats(0, 30))
def test_concentration_never_raises_entropy(scores, bump):
    i = int(np.argmax(scores))
    raised = scores.copy()
    raised[i] += bump
    assert entropy_of_scores(raised) <= entropy_of_scores(scores) + 1e-12


@settings(max_examples=200, deadline=None)
@given(arrays(np.float64, st.integers(2, 40), elements=st.floats(-30, 30)))
def test_max_entropy_iff_uniform(scores):
    h = entropy_of_scores(scores)
    top = math.log2(scores.size)
    if np.ptp(scores) == 0:
        assert abs(h - top) < 1e-9
    elif np.ptp(scores) > 1e-3:
        assert h < top - 1e-12
