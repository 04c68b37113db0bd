"""Central finite-difference check of the analytic model gradients.

Components smaller than `floor` are compared on an absolute scale: at step 1e-5
the float64 round-off in a difference quotient is around 1e-11, which would swamp
a relative comparison of gradients near 1e-8.
"""

import numpy as np

from thermoflow.network import Hyper, init_params, loss_and_grads
from thermoflow.network.model import PARAM_ORDER

TINY = Hyper(d=4, d_h=4, d_s=2, n=8)


def tiny_instance(seed: int, batch: int = 3):
    rng = np.random.default_rng(seed)
    params = init_params(TINY, seed=seed, dtype=np.float64)
    for k, v in params.weights.items():
        params.weights[k] = v + rng.normal(0, 0.2, v.shape)
    params.tvd.baseline_entropy = float(rng.uniform(1.0, 3.0))
    x = rng.normal(size=(batch, TINY.n, 6))
    x[..., 1] = rng.uniform(-1.0, 1.5, (batch, TINY.n))
    labels = np.array([i % 2 for i in range(batch)])
    return x, labels, params


def max_relative_error(seed: int, step: float = 1e-5, floor: float = 1e-6) -> tuple[float, dict]:
    x, labels, params = tiny_instance(seed)
    _, grads, _ = loss_and_grads(x, labels, params)
    worst, per_group = 0.0, {}
    for name in PARAM_ORDER:
        w = params.weights[name]
        num = np.zeros_like(w)
        for idx in np.ndindex(w.shape):
            old = w[idx]
            w[idx] = old + step
            lp, _, _ = loss_and_grads(x, labels, params)
            w[idx] = old - step
            lm, _, _ = loss_and_grads(x, labels, params)
            w[idx] = old
            num[idx] = (lp - lm) / (2 * step)
        err = np.abs(grads[name] - num) / np.maximum(np.maximum(np.abs(grads[name]), np.abs(num)), floor)
        per_group[name] = float(err.max())
        worst = max(worst, per_group[name])
    return worst, per_group
