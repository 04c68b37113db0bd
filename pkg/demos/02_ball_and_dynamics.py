"""The three numeric building blocks on toy inputs.

Poincare projection squeezes any feature vector into the unit ball, the
liquid cell forgets at a rate set by the inter-arrival gap, and the selective
scan turns a hidden trajectory into per-position scores whose entropy the
detector watches.
"""

import math

import numpy as np

from thermoflow.dynamics import LtcParams, ltc_step, ltc_tau, zoh_discretize
from thermoflow.manifold import distance, project
from thermoflow.tvd import entropy_of_scores

rng = np.random.default_rng(0)
w_p = rng.normal(size=(2, 6))
for scale in (0.1, 10.0, 1e6, 1e12):
    z = project(np.full(6, scale), w_p)
    print(f"|x| ~ {scale:>8.0e} -> |z| = {np.linalg.norm(z):.12f}")
print("d(0, (0.5, 0)) =", distance(np.zeros(2), np.array([0.5, 0.0])), "ln 3 =", math.log(3))

# time constant shrinks as the gap grows, so long silences wipe the state
for dt in (0.0, 0.01, 0.1, 1.0):
    print(f"dt={dt:<5} tau={ltc_tau(dt, 1.0):.6f}")
p = LtcParams(np.ones(1), np.zeros((1, 1)), np.zeros((1, 1)), np.zeros(1))
h = np.ones(1)
for dt in (0.1, 0.1, 1.0):
    h = ltc_step(h, np.zeros(1), dt, p)
    print(f"after a {dt}s gap the undriven state is {h[0]:.6f}")

print("ZOH of a=-1, b=1 over ln 2:", zoh_discretize(-1.0, 1.0, math.log(2)))

flat = np.ones(100)
spiky = flat.copy()
spiky[::10] = 5.0
print(f"entropy of flat scores {entropy_of_scores(flat):.4f} bits, periodic spikes {entropy_of_scores(spiky):.4f} bits")
