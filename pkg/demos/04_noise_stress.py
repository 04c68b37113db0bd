"""F1 under Gaussian noise on the inter-arrival column.

The default corpus separates beacons from benign flows by well over an order
of magnitude in timing, so F1 stays flat at small noise levels and only falls
once the noise reaches a sizeable fraction of the column spread. The second
run shrinks that gap (benign flows with a one-second median gap and a looser
beacon clock) for comparison.
"""

from thermoflow.harness import format_stress, stress
from thermoflow.network import Hyper, TrainConfig, train
from thermoflow.synth import CorpusConfig, TrafficProfile, build_corpus

LEVELS = (0.0, 0.05, 0.10, 0.15, 0.3, 0.5, 1.0)


def run(cfg, title):
    train_set, test_set = build_corpus(cfg)
    model = train(train_set, TrainConfig(epochs=10), Hyper(d=16, d_h=16, d_s=8, n=cfg.n)).params
    print(title)
    print(format_stress(stress(model, test_set, LEVELS)))


run(CorpusConfig.default(1000, n=100, seed=0), "default corpus")

close = CorpusConfig(
    [
        (TrafficProfile("benign_stochastic", iat_mu=0.0, iat_sigma=0.3), 110, 5),
        (TrafficProfile("c2_beacon", jitter=0.2), 45, 5),
        (TrafficProfile("morphed_beacon", jitter=0.2), 45, 5),
    ],
    n=100,
)
run(close, "narrow-margin corpus")
