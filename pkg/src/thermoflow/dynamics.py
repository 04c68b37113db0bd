"""Continuous-time sequence core: liquid time-constant cell and selective SSM.

All functions broadcast over a leading batch axis so the network can run a
whole mini-batch through one Python loop over packet positions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

EPSILON = 1e-5
TAU_FLOOR = 1e-3
SERIES_CUTOFF = 1e-4


def softplus(x):
    return np.logaddexp(0.0, x)


def sigmoid(x):
    x = np.asarray(x)
    out = np.empty_like(x, dtype=np.result_type(x, np.float32))
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


@dataclass
class LtcParams:
    tau_theta: np.ndarray  # (d_h,)
    w_h: np.ndarray  # (d_h, d_h)
    w_x: np.ndarray  # (d_h, d)
    b: np.ndarray  # (d_h,)


@dataclass
class SsmParams:
    a_log: np.ndarray  # (d_h, d_s); A = -exp(a_log) keeps every pole negative
    w_delta: np.ndarray  # (d_h + 1,): LTC state plus normalized IAT
    b_delta: np.ndarray  # (1,)
    w_b: np.ndarray  # (d_s, d_h)
    w_c: np.ndarray  # (d_s, d_h)

    @property
    def a_diag(self) -> np.ndarray:
        return -np.exp(self.a_log)


def ltc_tau(delta_t, tau_theta):
    """IAT-dependent time constant ``softplus(t) * exp(-dt / t) + eps``.

    ``tau_theta`` is floored at 1e-3 first; the raw form divides by it.
    """
    theta = np.maximum(tau_theta, TAU_FLOOR)
    return softplus(theta) * np.exp(-np.asarray(delta_t) / theta) + EPSILON


def ltc_step(h_prev, x, delta_t, p: LtcParams):
    """Advance the LTC state across one inter-arrival gap.

    The drive ``f = tanh(W_h h + W_x x + b)`` is held fixed over the gap, so the
    linear ODE ``dh/dt = -h/tau + f`` is integrated exactly.
    """
    dt = np.asarray(delta_t)[..., None]
    tau = ltc_tau(dt, p.tau_theta)
    f = np.tanh(h_prev @ p.w_h.T + x @ p.w_x.T + p.b)
    decay = np.exp(-dt / tau)
    return h_prev * decay + f * tau * (1.0 - decay)


def phi(x):
    """``(exp(x) - 1) / x`` with its Taylor series near zero."""
    x = np.asarray(x)
    small = np.abs(x) < SERIES_CUTOFF
    safe = np.where(small, 1.0, x)
    return np.where(small, 1.0 + x / 2.0 + x * x / 6.0, np.expm1(safe) / safe)


def phi_prime(x):
    x = np.asarray(x)
    small = np.abs(x) < SERIES_CUTOFF
    safe = np.where(small, 1.0, x)
    exact = (safe * np.exp(safe) - np.expm1(safe)) / (safe * safe)
    return np.where(small, 0.5 + x / 3.0 + x * x / 8.0, exact)


def zoh_discretize(a, b, delta):
    """Zero-order-hold discretization of a diagonal ``(A, B)`` pair.

    Returns ``(exp(delta*a), (delta*a)^-1 (exp(delta*a) - 1) * delta * b)``.
    """
    da = np.asarray(delta) * np.asarray(a)
    return np.exp(da), phi(da) * np.asarray(delta) * np.asarray(b)


def linear_recurrence(a_bar, b_bar, c, u):
    """Run ``s_k = a_bar_k * s_{k-1} + b_bar_k * u_k``, ``y_k = c_k . s_k`` from ``s_0 = 0``.

    Shapes: ``a_bar, b_bar`` are ``(N, d_h, d_s)``, ``c`` is ``(N, d_s)``, ``u`` is
    ``(N, d_h)``; a leading batch axis is allowed on all of them.
    """
    a_bar, b_bar, c, u = map(np.asarray, (a_bar, b_bar, c, u))
    n = u.shape[-2]
    s = np.zeros(a_bar.shape[:-3] + a_bar.shape[-2:], dtype=np.result_type(a_bar, u))
    y = np.empty(u.shape, dtype=s.dtype)
    for k in range(n):
        s = a_bar[..., k, :, :] * s + b_bar[..., k, :, :] * u[..., k, :, None]
        y[..., k, :] = np.einsum("...cs,...s->...c", s, c[..., k, :])
    return y, s


def selection(inputs, iat_column, p: SsmParams):
    """Input-dependent step size and B/C projections for every position."""
    sel = np.concatenate([inputs, np.asarray(iat_column)[..., None]], axis=-1)
    delta = softplus(sel @ p.w_delta + p.b_delta[0])
    return delta, inputs @ p.w_b.T, inputs @ p.w_c.T


def selective_scan(inputs, iat_column, p: SsmParams):
    """Selective diagonal SSM over ``(N, d_h)`` (or ``(B, N, d_h)``) inputs.

    Returns ``(outputs, final_state)``; work and memory are linear in N.
    """
    inputs = np.asarray(inputs)
    delta, bk, ck = selection(inputs, iat_column, p)
    a = p.a_diag
    n = inputs.shape[-2]
    s = np.zeros(inputs.shape[:-2] + a.shape, dtype=inputs.dtype)
    y = np.empty_like(inputs)
    for k in range(n):
        dk = delta[..., k, None, None]
        a_bar, b_bar = zoh_discretize(a, bk[..., k, None, :], dk)
        s = a_bar * s + b_bar * inputs[..., k, :, None]
        y[..., k, :] = np.einsum("...cs,...s->...c", s, ck[..., k, :])
    return y, s


def reduce_scores(outputs):
    """Per-position Euclidean norm of the SSM outputs."""
    return np.linalg.norm(np.asarray(outputs), axis=-1)
