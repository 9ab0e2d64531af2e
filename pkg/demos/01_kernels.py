"""Closed-form NTK values and the varifold distance they induce.

Run:  python3 demos/01_kernels.py
"""

import numpy as np

from neural_varifold import KernelConfig, ntk_mlp, varifold_distance
from neural_varifold.ntk import empirical_ntk
from neural_varifold.synthetic import sample_primitive

# A unit vector against itself and against an orthogonal one.
e1, e2 = np.eye(3)[:1], np.eye(3)[1:2]
print("Theta(e1, e1), depth 1:", ntk_mlp(e1, e1, 1)[0, 0])
print("Theta(e1, e2), depth 1:", ntk_mlp(e1, e2, 1)[0, 0], "= 1/(2 pi)")

# The closed form is the limit of random finite networks.
x = np.random.default_rng(0).standard_normal((8, 3))
exact = ntk_mlp(x, x, 2)
for width in (64, 512, 2048):
    mean = np.mean([empirical_ntk([width, width], x, x, seed=s) for s in range(10)], axis=0)
    print(f"width {width:5d}: relative error {np.linalg.norm(mean - exact) / np.linalg.norm(exact):.4f}")

# Distances between primitive shapes under each kernel family.
sphere = sample_primitive("sphere", seed=1)
sphere2 = sample_primitive("sphere", seed=2)
box = sample_primitive("box", seed=3)
for family in ("ntk1", "ntk2", "ct"):
    cfg = KernelConfig(family)
    print(f"{family}: sphere-sphere {varifold_distance(sphere, sphere2, cfg):.4f}  "
          f"sphere-box {varifold_distance(sphere, box, cfg):.4f}")
