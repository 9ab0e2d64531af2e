"""Procedural oriented point clouds of simple primitives.

Used as a small stand-in for ModelNet-style classification and for the
matching demos (ellipsoid targets).
"""

from __future__ import annotations

import numpy as np
from scipy.spatial.transform import Rotation

from .geometry import OrientedPointCloud, TriangleMesh, icosphere, normalize_unit_sphere
from .krr import LabeledCloudSet

__all__ = ["PRIMITIVES", "sample_primitive", "primitive_dataset", "ellipsoid"]

PRIMITIVES = ("sphere", "box", "cylinder")


def _unit(v):
    return v / np.linalg.norm(v, axis=-1, keepdims=True)


def _sphere(n, rng):
    z = _unit(rng.standard_normal((n, 3)))
    return z.copy(), z


def _box(n, rng):
    half = rng.uniform(0.6, 1.0, size=3)
    # face pairs orthogonal to x, y, z with areas 4*h_j*h_k
    areas = np.array([half[1] * half[2], half[0] * half[2], half[0] * half[1]])
    axis = rng.choice(3, size=n, p=areas / areas.sum())
    sign = rng.choice([-1.0, 1.0], size=n)
    pts = rng.uniform(-1.0, 1.0, size=(n, 3)) * half
    pts[np.arange(n), axis] = sign * half[axis]
    normals = np.zeros((n, 3))
    normals[np.arange(n), axis] = sign
    return pts, normals


def _cylinder(n, rng):
    radius = rng.uniform(0.5, 0.8)
    half_h = rng.uniform(0.6, 1.0)
    side = 2 * np.pi * radius * 2 * half_h
    cap = np.pi * radius**2
    part = rng.choice(3, size=n, p=np.array([side, cap, cap]) / (side + 2 * cap))
    phi = rng.uniform(0, 2 * np.pi, size=n)
    rho = radius * np.sqrt(rng.random(n))
    pts = np.empty((n, 3))
    normals = np.zeros((n, 3))
    lateral = part == 0
    pts[lateral] = np.c_[radius * np.cos(phi), radius * np.sin(phi), rng.uniform(-half_h, half_h, n)][lateral]
    normals[lateral] = np.c_[np.cos(phi), np.sin(phi), np.zeros(n)][lateral]
    for k, s in ((1, 1.0), (2, -1.0)):
        sel = part == k
        pts[sel] = np.c_[rho * np.cos(phi), rho * np.sin(phi), np.full(n, s * half_h)][sel]
        normals[sel, 2] = s
    return pts, normals


_SAMPLERS = {"sphere": _sphere, "box": _box, "cylinder": _cylinder}


def sample_primitive(
    kind: str, n_points: int = 256, jitter: float = 0.02, rotate: bool = True, seed=None
) -> OrientedPointCloud:
    """One randomly sized, rotated, jittered primitive in the unit sphere."""
    rng = np.random.default_rng(seed)
    pts, normals = _SAMPLERS[kind](n_points, rng)
    if rotate:
        rot = Rotation.random(random_state=rng).as_matrix()
        pts, normals = pts @ rot.T, normals @ rot.T
    pts = pts + jitter * rng.standard_normal(pts.shape)
    return normalize_unit_sphere(OrientedPointCloud(pts, normals))[0]


def primitive_dataset(
    per_class: int = 20,
    n_points: int = 256,
    jitter: float = 0.02,
    kinds=PRIMITIVES,
    seed: int = 0,
) -> LabeledCloudSet:
    rng = np.random.default_rng(seed)
    clouds, labels = [], []
    for label, kind in enumerate(kinds):
        for _ in range(per_class):
            clouds.append(sample_primitive(kind, n_points, jitter, seed=rng))
            labels.append(label)
    return LabeledCloudSet(clouds, np.array(labels), list(kinds))


def ellipsoid(axes=(1.0, 0.7, 1.3), subdivisions: int = 2) -> TriangleMesh:
    """Icosphere stretched along x, y, z; winding stays outward."""
    sphere = icosphere(subdivisions)
    return sphere.with_vertices(sphere.vertices * np.asarray(axes, dtype=np.float64))
