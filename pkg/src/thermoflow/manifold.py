"""Poincaré-ball projection and geodesic distance."""

from __future__ import annotations

import numpy as np

from .errors import BoundaryPoint, NonFiniteInput

EPSILON = 1e-5
CLAMP_NORM = 1.0 - 1e-6
MAX_NORM = 1.0 - 1e-15
DEFAULT_DIM = 16


def project(x, w_p):
    """Map feature rows into the open unit ball: ``z / (1 + |z| + eps)``, ``z = W_p x``.

    ``x`` may be a single 6-vector or any ``(..., 6)`` array; ``w_p`` is ``(d, 6)``.
    """
    x = np.asarray(x)
    if not np.all(np.isfinite(x)):
        raise NonFiniteInput("projection input contains NaN or inf")
    z = x @ np.asarray(w_p).T
    r = np.linalg.norm(z, axis=-1, keepdims=True)
    out = z / (1.0 + r + EPSILON)
    # for |z| beyond ~1e15 the quotient rounds onto the sphere; pull it back inside
    norm = np.linalg.norm(out, axis=-1, keepdims=True)
    return np.where(norm >= MAX_NORM, out * (MAX_NORM / np.where(norm > 0, norm, 1.0)), out)


def project_backward(x, w_p, grad_out):
    """Vector-Jacobian product of :func:`project`.

    Returns ``(grad_x, grad_w_p)`` for an upstream gradient shaped like the output.
    """
    x = np.asarray(x)
    z = x @ w_p.T
    r = np.linalg.norm(z, axis=-1, keepdims=True)
    den = 1.0 + r + EPSILON
    safe_r = np.where(r > 0, r, 1.0)
    radial = np.sum(grad_out * z, axis=-1, keepdims=True) / (den * den * safe_r)
    grad_z = grad_out / den - np.where(r > 0, radial, 0.0) * z
    grad_x = grad_z @ w_p
    grad_w = grad_z.reshape(-1, z.shape[-1]).T @ x.reshape(-1, x.shape[-1])
    return grad_x, grad_w


def _clamp(u):
    norm = np.linalg.norm(u, axis=-1, keepdims=True)
    scale = np.where(norm > CLAMP_NORM, CLAMP_NORM / np.where(norm > 0, norm, 1.0), 1.0)
    return u * scale


def distance(u, v):
    """Hyperbolic distance ``arcosh(1 + 2|u-v|^2 / ((1-|u|^2)(1-|v|^2)))``.

    Broadcasts over leading axes. Norms above ``1 - 1e-6`` are pulled back to
    that radius before evaluation; a point on or outside the unit sphere means
    something upstream went wrong and raises :class:`BoundaryPoint`.
    """
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    for p in (u, v):
        if not np.all(np.isfinite(p)):
            raise NonFiniteInput("ball point contains NaN or inf")
        if np.any(np.linalg.norm(p, axis=-1) >= 1.0):
            raise BoundaryPoint("point lies on or outside the unit ball")
    u, v = _clamp(u), _clamp(v)
    uu = np.sum(u * u, axis=-1)
    vv = np.sum(v * v, axis=-1)
    diff = np.sum((u - v) ** 2, axis=-1)
    arg = 1.0 + 2.0 * diff / ((1.0 - uu) * (1.0 - vv))
    return np.arccosh(np.maximum(arg, 1.0))
