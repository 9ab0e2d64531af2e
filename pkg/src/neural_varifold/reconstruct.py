"""Implicit surface reconstruction from an oriented point cloud.

Surface samples get signed-distance target 0, copies pushed along the
normal by -delta / +delta get targets -delta / +delta.  A pointwise NTK1
kernel ridge regression over these 3m samples is evaluated on a voxel grid
whose normals are all fixed to +z, and the zero level set is meshed with
marching cubes.

The normal channel has three modes.  ``"constant"`` (default) gives the training
samples the same +z normal as the grid, so the normal factor of NTK1 is the
constant Theta(e_z, e_z).  ``"train"`` keeps the measured normals on the
training side only; the grid then weights each training sample by
Theta(e_z, z_j), which vanishes for z_j = -e_z and leaves downward-facing
regions unconstrained.  ``"off"`` drops the normal factor altogether.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from skimage import measure

from .geometry import OrientedPointCloud, TriangleMesh, normalize_unit_sphere, sample_area_weighted
from .krr import krr_solve
from .metrics import chamfer, emd_exact
from .ntk import ntk_mlp

__all__ = [
    "SdfTrainingSet",
    "ScalarGrid",
    "augment_offsurface",
    "bounding_grid",
    "sdf_features",
    "NORMAL_CHANNELS",
    "SdfModel",
    "fit_sdf",
    "fit_and_eval_sdf",
    "marching_cubes",
    "evaluate_reconstruction",
    "evaluate_samples",
    "reconstruct",
]

GRID_NORMAL = np.array([[0.0, 0.0, 1.0]])
TILE_POINTS = 4096


@dataclass(frozen=True)
class SdfTrainingSet:
    positions: np.ndarray
    normals: np.ndarray
    targets: np.ndarray
    delta: float

    def __len__(self):
        return len(self.targets)


@dataclass
class ScalarGrid:
    """Regular axis-aligned grid; ``values[i, j, k]`` sits at ``lower + (i, j, k) * spacing``."""

    lower: np.ndarray
    upper: np.ndarray
    resolution: tuple[int, int, int]
    values: np.ndarray | None = None

    def __post_init__(self):
        self.lower = np.asarray(self.lower, dtype=np.float64)
        self.upper = np.asarray(self.upper, dtype=np.float64)
        res = self.resolution
        self.resolution = tuple(int(r) for r in ((res,) * 3 if np.isscalar(res) else res))
        if min(self.resolution) < 2:
            raise ValueError("grid needs at least 2 samples per axis")
        if np.any(self.upper <= self.lower):
            raise ValueError("grid bounds must satisfy lower < upper")
        if self.values is not None:
            self.values = np.asarray(self.values, dtype=np.float64).reshape(self.resolution)

    @property
    def spacing(self) -> np.ndarray:
        return (self.upper - self.lower) / (np.asarray(self.resolution) - 1)

    @property
    def axes(self) -> list[np.ndarray]:
        return [np.linspace(lo, hi, n) for lo, hi, n in zip(self.lower, self.upper, self.resolution)]

    def points(self) -> np.ndarray:
        """(N, 3) grid coordinates in C order of ``values``."""
        mesh = np.meshgrid(*self.axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    def contains(self, positions) -> bool:
        p = np.asarray(positions)
        return bool(np.all(p > self.lower) and np.all(p < self.upper))


def augment_offsurface(cloud: OrientedPointCloud, delta: float = 0.01) -> SdfTrainingSet:
    """Stack [surface | x - delta z | x + delta z] with targets [0 | -delta | +delta]."""
    if not delta > 0:
        raise ValueError("delta must be positive")
    x, z = cloud.positions, cloud.normals
    inside = x - delta * z
    centroid = x.mean(0)
    # inside copy landing on the far side of the centroid means delta is too large
    if np.any(np.einsum("ij,ij->i", inside - centroid, x - centroid) < 0):
        warnings.warn("delta moves some inside samples past the centroid", stacklevel=2)
    m = len(cloud)
    return SdfTrainingSet(
        positions=np.concatenate([x, inside, x + delta * z]),
        normals=np.concatenate([z, z, z]),
        targets=np.concatenate([np.zeros(m), np.full(m, -delta), np.full(m, delta)]),
        delta=float(delta),
    )


def bounding_grid(positions, resolution=128, padding: float = 0.1) -> ScalarGrid:
    """Bounding box of ``positions`` grown by ``padding`` of its extent per side."""
    p = np.asarray(positions, dtype=np.float64)
    lo, hi = p.min(0), p.max(0)
    pad = padding * np.maximum(hi - lo, 1e-9)
    return ScalarGrid(lo - pad, hi + pad, resolution)


def sdf_features(positions, lift: float | None):
    """Positions with an optional constant coordinate appended."""
    positions = np.asarray(positions, dtype=np.float64)
    if lift is None:
        return positions
    return np.hstack([positions, np.full((len(positions), 1), float(lift))])


NORMAL_CHANNELS = ("constant", "train", "off")


def _normal_factor(normals, depth, mode):
    """Normal-kernel weights between the +z grid normal and training normals."""
    if mode == "off":
        return np.ones(len(normals))
    if mode == "constant":
        return np.full(len(normals), ntk_mlp(GRID_NORMAL, GRID_NORMAL, depth)[0, 0])
    return ntk_mlp(GRID_NORMAL, normals, depth)[0]


def _train_gram(xt, normals, depth, mode):
    k = ntk_mlp(xt, xt, depth)
    if mode == "train":
        k *= ntk_mlp(normals, normals, depth)
    elif mode == "constant":
        k *= ntk_mlp(GRID_NORMAL, GRID_NORMAL, depth)[0, 0]
    return k


@dataclass
class SdfModel:
    """Fitted pointwise kernel regressor of a signed-distance field."""

    train: SdfTrainingSet
    coefficients: np.ndarray
    depth: int
    lam: float
    lift: float | None
    normal_channel: str

    def __call__(self, points, tile: int = TILE_POINTS) -> np.ndarray:
        points = np.asarray(points, dtype=np.float64)
        xt = sdf_features(self.train.positions, self.lift)
        # every query carries the same +z normal, so its normal kernel is one row
        weights = self.coefficients * _normal_factor(self.train.normals, self.depth, self.normal_channel)
        out = np.empty(len(points))
        for start in range(0, len(points), tile):
            chunk = sdf_features(points[start : start + tile], self.lift)
            out[start : start + tile] = ntk_mlp(chunk, xt, self.depth) @ weights
        return out


def fit_sdf(
    train: SdfTrainingSet,
    depth: int = 1,
    lam: float | str | None = None,
    lift: float | None = 1.0,
    normal_channel: str = "constant",
) -> SdfModel:
    """Solve the pointwise NTK1 ridge system on the augmented samples.

    ``lift`` appends a constant coordinate to every position before the
    positional kernel; without it the bias-free kernel is positively
    homogeneous and its zero set is a cone through the origin.
    ``normal_channel`` is one of ``"constant"``, ``"train"`` or ``"off"``
    (see the module docstring).  ``lam=None`` means ``1e-8 * trace(K) / n``.
    """
    if normal_channel not in NORMAL_CHANNELS:
        raise ValueError(f"normal_channel must be one of {NORMAL_CHANNELS}")
    xt = sdf_features(train.positions, lift)
    gram = _train_gram(xt, train.normals, depth, normal_channel)
    if lam is None or lam == "auto":
        lam = 1e-8 * float(np.trace(gram)) / len(gram)
    coef = krr_solve(gram, train.targets, float(lam))
    return SdfModel(train, coef, depth, float(lam), lift, normal_channel)


def fit_and_eval_sdf(
    train: SdfTrainingSet,
    grid: ScalarGrid,
    depth: int = 1,
    lam: float | str | None = None,
    lift: float | None = 1.0,
    normal_channel: str = "constant",
) -> ScalarGrid:
    """Fit the field and return ``grid`` filled with its values."""
    model = fit_sdf(train, depth, lam, lift, normal_channel)
    values = model(grid.points()).reshape(grid.resolution)
    return ScalarGrid(grid.lower, grid.upper, grid.resolution, values)


def marching_cubes(grid: ScalarGrid, level: float = 0.0) -> TriangleMesh:
    """Triangulate the ``level`` set of a filled grid in world coordinates.

    Faces are wound so their normals point toward increasing values.  A
    level outside the value range gives an empty mesh.
    """
    if grid.values is None:
        raise ValueError("grid has no values")
    values = grid.values
    if not np.all(np.isfinite(values)):
        raise ValueError("grid values must be finite")
    if not values.min() < level < values.max():
        return TriangleMesh(np.zeros((0, 3)), np.zeros((0, 3), dtype=np.int64))
    verts, faces, _, _ = measure.marching_cubes(
        values, level=level, spacing=tuple(grid.spacing), gradient_direction="descent", method="lewiner"
    )
    verts = verts.astype(np.float64) + grid.lower
    distinct = (faces[:, 0] != faces[:, 1]) & (faces[:, 1] != faces[:, 2]) & (faces[:, 0] != faces[:, 2])
    return TriangleMesh(verts, faces[distinct])


def evaluate_samples(a, b) -> dict:
    a, b = np.asarray(a), np.asarray(b)
    out = {"cd": chamfer(a, b)}
    out["emd"] = emd_exact(a, b).cost if len(a) == len(b) else float("nan")
    return out


def evaluate_reconstruction(mesh: TriangleMesh, reference: TriangleMesh, k: int = 2048, seed: int = 0) -> dict:
    """CD and EMD between k area-weighted samples of each mesh.

    The two meshes are sampled with seeds ``seed`` and ``seed + 1``.
    """
    a = sample_area_weighted(mesh, k, seed).positions
    b = sample_area_weighted(reference, k, seed + 1).positions
    return evaluate_samples(a, b)


def reconstruct(
    cloud: OrientedPointCloud,
    delta: float = 0.01,
    resolution=128,
    depth: int = 1,
    lam: float | str | None = None,
    padding: float = 0.1,
    lift: float | None = 1.0,
    normal_channel: str = "constant",
    normalize: bool = True,
) -> tuple[TriangleMesh, ScalarGrid]:
    """Full pipeline: normalize, augment, fit, grid, mesh, map back."""
    center, scale = np.zeros(3), 1.0
    if normalize:
        cloud, center, scale = normalize_unit_sphere(cloud)
    train = augment_offsurface(cloud, delta)
    grid = bounding_grid(train.positions, resolution, padding)
    grid = fit_and_eval_sdf(train, grid, depth, lam, lift, normal_channel)
    mesh = marching_cubes(grid)
    if normalize and mesh.n_vertices:
        mesh = mesh.with_vertices(mesh.vertices * scale + center)
    return mesh, grid
