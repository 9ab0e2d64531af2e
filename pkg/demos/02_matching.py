"""Deform an icosphere onto an ellipsoid with different losses.

Each run trains a small displacement MLP with Adam and reports the full
cross-metric table of the result.  Takes a few minutes on one core.

Run:  python3 demos/02_matching.py [iterations]
"""

import sys

from neural_varifold.geometry import icosphere
from neural_varifold.matching import MatchConfig, cross_evaluate, match_shapes
from neural_varifold.synthetic import ellipsoid

iterations = int(sys.argv[1]) if len(sys.argv) > 1 else 300
source, target = icosphere(2), ellipsoid((1.0, 0.7, 1.3))

print("before  ", {k: round(v, 5) for k, v in cross_evaluate(source, target).items()})
for loss in ("cd", "emd", "ct", "ntk1"):
    trace = match_shapes(source, target, MatchConfig(loss, iterations=iterations))
    table = cross_evaluate(trace.mesh, target)
    print(f"{loss:8s}", {k: round(v, 5) for k, v in table.items()}, f"{sum(trace.seconds):.1f}s")
