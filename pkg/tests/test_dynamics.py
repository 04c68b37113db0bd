import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from thermoflow.dynamics import (
    LtcParams,
    SsmParams,
    linear_recurrence,
    ltc_step,
    ltc_tau,
    phi,
    reduce_scores,
    selective_scan,
    zoh_discretize,
)


def test_tau_examples():
    assert ltc_tau(0.0, 1.0) == pytest.approx(math.log1p(math.e) + 1e-5, abs=1e-12)
    assert ltc_tau(0.0, 1.0) == pytest.approx(1.313271, abs=1e-6)
    # closed form ln(1+e)/e + 1e-5 = 0.4831320
    assert ltc_tau(1.0, 1.0) == pytest.approx(math.log1p(math.e) / math.e + 1e-5, abs=1e-12)
    assert ltc_tau(1e6, 1.0) == pytest.approx(1e-5, abs=1e-15)


def test_tau_theta_is_floored():
    assert ltc_tau(0.0, -5.0) == ltc_tau(0.0, 1e-3)
    assert np.isfinite(ltc_tau(1.0, 0.0))


def _ltc(d_h, d, seed=0, zero=False):
    r = np.random.default_rng(seed)
    mk = (lambda *s: np.zeros(s)) if zero else (lambda *s: r.normal(size=s) * 0.5)
    return LtcParams(np.abs(r.normal(size=d_h)) + 0.5, mk(d_h, d_h), mk(d_h, d), mk(d_h))


def test_ltc_zero_gap_is_identity(rng):
    p = _ltc(5, 3)
    h = rng.normal(size=5)
    assert np.array_equal(ltc_step(h, rng.normal(size=3), 0.0, p), h)


def test_ltc_homogeneous_decay():
    p = _ltc(4, 3, zero=True)
    h = np.array([1.0, -2.0, 0.5, 3.0])
    dt = 0.7
    tau = ltc_tau(dt, p.tau_theta)
    assert np.allclose(ltc_step(h, np.zeros(3), dt, p), h * np.exp(-dt / tau), rtol=0, atol=1e-12)


def test_ltc_fixed_point_is_tau():
    p = LtcParams(np.ones(2), np.zeros((2, 2)), np.zeros((2, 1)), np.full(2, 50.0))  # tanh(50) == 1
    tau = ltc_tau(1e4, p.tau_theta)
    h = ltc_step(np.zeros(2), np.zeros(1), 1e4, p)
    assert np.allclose(h, tau, rtol=1e-12)


def test_ltc_contraction(rng):
    # with f held fixed the gap between two trajectories shrinks by exp(-dt/tau)
    p = LtcParams(np.abs(rng.normal(size=3)) + 0.2, np.zeros((3, 3)), rng.normal(size=(3, 2)), rng.normal(size=3))
    h1, h2, x = rng.normal(size=3), rng.normal(size=3), rng.normal(size=2)
    for dt in (0.01, 0.3, 2.0):
        factor = np.exp(-dt / ltc_tau(dt, p.tau_theta))
        diff = ltc_step(h1, x, dt, p) - ltc_step(h2, x, dt, p)
        assert np.allclose(diff, factor * (h1 - h2), rtol=0, atol=1e-12)


def test_zoh_examples():
    a_bar, b_bar = zoh_discretize(-1.0, 1.0, math.log(2))
    assert abs(a_bar - 0.5) < 1e-12 and abs(b_bar - 0.5) < 1e-12
    a_bar, b_bar = zoh_discretize(-2.0, 3.0, 1.0)
    assert a_bar == pytest.approx(math.exp(-2), abs=1e-15)
    assert b_bar == pytest.approx(-0.5 * (math.exp(-2) - 1) * 3, abs=1e-14)
    assert (a_bar, b_bar) == pytest.approx((0.135335, 1.296997), abs=5e-7)


def test_zoh_small_step_limit():
    a_bar, b_bar = zoh_discretize(-1.0, 2.0, 1e-9)
    assert a_bar == pytest.approx(1.0, abs=1e-8)
    assert b_bar == pytest.approx(2e-9, rel=1e-8)


def test_series_continuity_at_cutoff():
    for x in (1e-4, -1e-4):
        below = phi(np.nextafter(x, 0.0))
        exact = math.expm1(x) / x
        assert abs(below - exact) / exact < 1e-8
        assert abs(phi(x) - exact) / exact < 1e-12


def test_linear_recurrence_passthrough():
    u = np.arange(1.0, 6.0)[:, None]
    y, _ = linear_recurrence(np.zeros((5, 1, 1)), np.ones((5, 1, 1)), np.ones((5, 1)), u)
    assert np.array_equal(y, u)


def test_linear_recurrence_hand_unrolled():
    y, s = linear_recurrence(np.full((3, 1, 1), 0.5), np.ones((3, 1, 1)), np.ones((3, 1)), np.ones((3, 1)))
    assert np.allclose(y[:, 0], [1.0, 1.5, 1.75], rtol=0, atol=1e-15)


def _ssm(d_h, d_s, seed=0):
    r = np.random.default_rng(seed)
    return SsmParams(r.normal(size=(d_h, d_s)) * 0.3, r.normal(size=d_h + 1) * 0.3, np.array([-1.0]),
                     r.normal(size=(d_s, d_h)) * 0.5, r.normal(size=(d_s, d_h)) * 0.5)


def test_scan_zero_input_gives_zero(rng):
    y, s = selective_scan(np.zeros((20, 4)), rng.normal(size=20), _ssm(4, 3))
    assert not y.any() and not s.any()


def test_scan_matches_explicit_recurrence(rng):
    p = _ssm(4, 3)
    u = rng.normal(size=(15, 4))
    iat = rng.normal(size=15)
    y, _ = selective_scan(u, iat, p)
    sel = np.concatenate([u, iat[:, None]], axis=1)
    delta = np.logaddexp(0, sel @ p.w_delta + p.b_delta[0])
    bk, ck = u @ p.w_b.T, u @ p.w_c.T
    a_bar, b_bar = zoh_discretize(p.a_diag[None], bk[:, None, :], delta[:, None, None])
    y2, _ = linear_recurrence(a_bar, b_bar, ck, u)
    assert np.allclose(y, y2, rtol=0, atol=1e-12)


def test_recurrence_linearity(rng):
    # with delta, B and C frozen the scan is linear in its input
    n, d_h, d_s = 30, 3, 2
    a_bar = rng.uniform(0.1, 0.99, (n, d_h, d_s))
    b_bar = rng.normal(size=(n, d_h, d_s))
    c = rng.normal(size=(n, d_s))
    u, v = rng.normal(size=(n, d_h)), rng.normal(size=(n, d_h))
    al, be = 1.7, -0.4
    lhs, _ = linear_recurrence(a_bar, b_bar, c, al * u + be * v)
    yu, _ = linear_recurrence(a_bar, b_bar, c, u)
    yv, _ = linear_recurrence(a_bar, b_bar, c, v)
    assert np.allclose(lhs, al * yu + be * yv, rtol=0, atol=1e-6)


def test_scan_stable_over_long_sequences(rng):
    p = _ssm(4, 3)
    u = np.clip(rng.normal(size=(10_000, 4)), -3, 3)
    y, s = selective_scan(u, rng.normal(size=10_000), p)
    assert np.all(np.isfinite(y)) and np.all(np.isfinite(s))
    assert np.abs(s).max() < 1e3


def test_reduce_scores():
    out = reduce_scores(np.array([[0.0, 0.0], [3.0, 4.0], [3.0, 4.0]]))
    assert out.tolist() == [0.0, 5.0, 5.0]


@settings(max_examples=100, deadline=None)
@given(st.floats(-50, -1e-6), st.floats(1e-6, 10), st.floats(-5, 5))
def test_zoh_stable_and_consistent(a, delta, b):
    a_bar, b_bar = zoh_discretize(a, b, delta)
    assert 0 < a_bar < 1
    # b_bar equals the integral of exp(a s) b over [0, delta]
    assert b_bar == pytest.approx((math.exp(a * delta) - 1) / a * b, rel=1e-9, abs=1e-15)
