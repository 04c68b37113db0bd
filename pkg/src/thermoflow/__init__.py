"""Detection of covert beaconing in network flows from packet-level physics.

Submodules: ``ingest`` (pcap parsing), ``physics`` (feature vectors and windows),
``manifold`` (Poincare-ball projection), ``dynamics`` (liquid and selective-scan
kernels), ``tvd`` (entropy-based anomaly flag), ``network`` (model and training),
``synth`` (traffic generator), ``bridge`` (shared-memory ring) and ``harness``
(metrics, streaming detection and CLI).
"""

from . import bridge, dynamics, errors, harness, ingest, manifold, network, physics, synth, tvd
from .errors import ThermoflowError

__version__ = "0.1.0"
__all__ = ["bridge", "dynamics", "errors", "harness", "ingest", "manifold", "network", "physics", "synth", "tvd", "ThermoflowError"]
