"""Train the desk-scale model on the default synthetic corpus and evaluate it.

Takes well under a minute on one core.
"""

import logging

from thermoflow.harness import evaluate
from thermoflow.network import Hyper, TrainConfig, train
from thermoflow.synth import CorpusConfig, build_corpus

logging.basicConfig(level=logging.INFO, format="%(message)s")

train_set, test_set = build_corpus(CorpusConfig.default(2000, n=100, seed=0))
print(f"train {len(train_set)} windows, test {len(test_set)} windows")

result = train(train_set, TrainConfig(epochs=20), Hyper(d=16, d_h=16, d_s=8, n=100))
print(f"best epoch {result.best_epoch}; batches applied {result.batches_applied}, discarded {result.batches_discarded}")
print(f"entropy baseline {result.params.tvd.baseline_entropy:.4f} bits, threshold {result.params.tvd.tau_threshold:.4f}")

report = evaluate(result.params, test_set)
print(report.to_text())
