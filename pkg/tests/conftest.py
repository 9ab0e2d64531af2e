import numpy as np
import pytest

from neural_varifold.geometry import OrientedPointCloud, TriangleMesh


def bipyramid(scale=(1.0, 1.0, 1.0), twist=0.0) -> TriangleMesh:
    """Pentagonal bipyramid: 7 vertices, 10 outward-wound faces."""
    ang = np.arange(5) * 2 * np.pi / 5 + twist
    ring = np.stack([np.cos(ang), np.sin(ang), np.zeros(5)], 1)
    verts = np.vstack([ring, [[0, 0, 1.2], [0, 0, -1.2]]]) * np.asarray(scale)
    faces = [(i, (i + 1) % 5, 5) for i in range(5)] + [((i + 1) % 5, i, 6) for i in range(5)]
    return TriangleMesh(verts, np.array(faces))


def random_cloud(rng, m=32, spread=1.0) -> OrientedPointCloud:
    pos = spread * rng.standard_normal((m, 3))
    nrm = rng.standard_normal((m, 3))
    return OrientedPointCloud(pos, nrm / np.linalg.norm(nrm, axis=1, keepdims=True))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
