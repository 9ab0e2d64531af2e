"""Triangle meshes, oriented point clouds and their ASCII file formats."""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

__all__ = [
    "MeshFormatError",
    "TriangleMesh",
    "OrientedPointCloud",
    "load_mesh",
    "save_mesh",
    "load_cloud",
    "save_cloud",
    "sample_face_centers",
    "sample_area_weighted",
    "normalize_unit_sphere",
    "face_normals",
    "face_areas",
    "icosahedron",
    "icosphere",
]

_AREA_EPS = 1e-12


class MeshFormatError(ValueError):
    """Raised when a mesh or cloud file cannot be parsed."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


@dataclass(frozen=True)
class TriangleMesh:
    """Indexed triangle soup with 0-based, counter-clockwise faces."""

    vertices: np.ndarray
    faces: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        f = np.asarray(self.faces, dtype=np.int64).reshape(-1, 3)
        if f.size and (f.min() < 0 or f.max() >= len(v)):
            raise ValueError("face index out of range")
        if f.size:
            distinct = (f[:, 0] != f[:, 1]) & (f[:, 1] != f[:, 2]) & (f[:, 0] != f[:, 2])
            if not distinct.all():
                raise ValueError("degenerate face (repeated vertex index)")
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "faces", f)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_faces(self) -> int:
        return len(self.faces)

    @property
    def triangles(self) -> np.ndarray:
        """(f, 3, 3) corner coordinates per face."""
        return self.vertices[self.faces]

    def with_vertices(self, vertices) -> "TriangleMesh":
        return TriangleMesh(vertices, self.faces)


@dataclass(frozen=True)
class OrientedPointCloud:
    """m points in R^3, each paired with a unit surface normal."""

    positions: np.ndarray
    normals: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.positions, dtype=np.float64)
        z = np.asarray(self.normals, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != 3 or z.shape != x.shape:
            raise ValueError(f"positions {x.shape} and normals {z.shape} must both be (m, 3)")
        if len(x) < 1:
            raise ValueError("point cloud must contain at least one point")
        norms = np.linalg.norm(z, axis=1)
        if np.any(np.abs(norms - 1.0) > 1e-6):
            raise ValueError("normals must have unit length (tolerance 1e-6)")
        object.__setattr__(self, "positions", x)
        object.__setattr__(self, "normals", z)

    def __len__(self) -> int:
        return len(self.positions)

    @property
    def features(self) -> np.ndarray:
        """(m, 6) rows [x | z]."""
        return np.hstack([self.positions, self.normals])

    def permuted(self, order) -> "OrientedPointCloud":
        return OrientedPointCloud(self.positions[order], self.normals[order])


# ---------------------------------------------------------------- file I/O


def _drop_degenerate(faces: list[tuple[int, int, int]]) -> np.ndarray:
    f = np.asarray(faces, dtype=np.int64).reshape(-1, 3)
    keep = (f[:, 0] != f[:, 1]) & (f[:, 1] != f[:, 2]) & (f[:, 0] != f[:, 2])
    dropped = int((~keep).sum())
    if dropped:
        warnings.warn(f"dropped {dropped} degenerate face(s)", stacklevel=3)
    return f[keep]


def _fan(poly: list[int]) -> list[tuple[int, int, int]]:
    return [(poly[0], poly[k], poly[k + 1]) for k in range(1, len(poly) - 1)]


def _parse_floats(tokens, lineno, count=3):
    try:
        vals = [float(t) for t in tokens[:count]]
    except ValueError:
        raise MeshFormatError(f"malformed number in {' '.join(tokens)!r}", lineno) from None
    if len(vals) != count:
        raise MeshFormatError(f"expected {count} coordinates", lineno)
    return vals


def _read_off(lines: list[str]) -> TriangleMesh:
    # strip comments and blank lines but keep original line numbers
    rows = []
    for lineno, raw in enumerate(lines, start=1):
        text = raw.split("#", 1)[0].strip()
        if text:
            rows.append((lineno, text.split()))
    if not rows or not rows[0][1][0].upper().endswith("OFF"):
        raise MeshFormatError("missing OFF header", rows[0][0] if rows else 1)
    header = rows[0][1][1:]
    body = rows[1:]
    if not header:
        if not body:
            raise MeshFormatError("missing element counts", rows[0][0])
        header = body[0][1]
        counts_line = body[0][0]
        body = body[1:]
    else:
        counts_line = rows[0][0]
    try:
        nv, nf = int(header[0]), int(header[1])
    except (ValueError, IndexError):
        raise MeshFormatError("malformed element counts", counts_line) from None
    if len(body) < nv + nf:
        raise MeshFormatError(f"expected {nv} vertices and {nf} faces", body[-1][0] if body else counts_line)
    verts = [_parse_floats(tok, ln) for ln, tok in body[:nv]]
    faces: list[tuple[int, int, int]] = []
    for ln, tok in body[nv : nv + nf]:
        try:
            k = int(tok[0])
            idx = [int(t) for t in tok[1 : 1 + k]]
        except (ValueError, IndexError):
            raise MeshFormatError("malformed face record", ln) from None
        if len(idx) != k or k < 3:
            raise MeshFormatError("face must list at least 3 indices", ln)
        if min(idx) < 0 or max(idx) >= nv:
            raise MeshFormatError(f"face index out of range (vertex count {nv})", ln)
        faces.extend(_fan(idx))
    return TriangleMesh(np.asarray(verts).reshape(-1, 3), _drop_degenerate(faces))


def _read_obj(lines: list[str]) -> TriangleMesh:
    verts = []
    polys = []
    for lineno, raw in enumerate(lines, start=1):
        tok = raw.split("#", 1)[0].split()
        if not tok:
            continue
        if tok[0] == "v":
            verts.append(_parse_floats(tok[1:], lineno))
        elif tok[0] == "f":
            try:
                idx = [int(t.split("/")[0]) for t in tok[1:]]
            except ValueError:
                raise MeshFormatError("malformed face record", lineno) from None
            if len(idx) < 3:
                raise MeshFormatError("face must list at least 3 indices", lineno)
            polys.append((lineno, idx))
    nv = len(verts)
    faces: list[tuple[int, int, int]] = []
    for lineno, idx in polys:
        # negative indices are relative to the end of the vertex list
        idx = [i - 1 if i > 0 else nv + i for i in idx]
        if min(idx) < 0 or max(idx) >= nv:
            raise MeshFormatError(f"face index out of range (vertex count {nv})", lineno)
        faces.extend(_fan(idx))
    return TriangleMesh(np.asarray(verts, dtype=np.float64).reshape(-1, 3), _drop_degenerate(faces))


def _format_from(path: Path, fmt: str | None) -> str:
    fmt = (fmt or path.suffix.lstrip(".")).upper()
    if fmt not in ("OBJ", "OFF"):
        raise ValueError(f"unsupported mesh format {fmt!r} (expected OBJ or OFF)")
    return fmt


def load_mesh(path, format: str | None = None) -> TriangleMesh:
    """Read an ASCII OBJ or OFF file.

    Only vertex and face records are honored; polygons are fan-triangulated
    and faces with repeated indices are dropped with a warning.
    """
    path = Path(path)
    fmt = _format_from(path, format)
    lines = path.read_text().splitlines()
    return _read_off(lines) if fmt == "OFF" else _read_obj(lines)


def save_mesh(mesh: TriangleMesh, path, format: str | None = None) -> None:
    path = Path(path)
    fmt = _format_from(path, format)
    out = []
    if fmt == "OFF":
        out.append("OFF")
        out.append(f"{mesh.n_vertices} {mesh.n_faces} 0")
        out.extend(f"{x!r} {y!r} {z!r}" for x, y, z in mesh.vertices.tolist())
        out.extend(f"3 {i} {j} {k}" for i, j, k in mesh.faces.tolist())
    else:
        out.extend(f"v {x!r} {y!r} {z!r}" for x, y, z in mesh.vertices.tolist())
        out.extend(f"f {i + 1} {j + 1} {k + 1}" for i, j, k in mesh.faces.tolist())
    path.write_text("\n".join(out) + "\n")


def load_cloud(path) -> OrientedPointCloud:
    """Read an XYZN file: one ``x y z nx ny nz`` row per point.

    Normals are renormalized to unit length; a zero normal is a parse error.
    """
    rows = []
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        tok = raw.split("#", 1)[0].split()
        if not tok:
            continue
        if len(tok) != 6:
            raise MeshFormatError(f"expected 6 values, got {len(tok)}", lineno)
        vals = _parse_floats(tok, lineno, count=6)
        if np.linalg.norm(vals[3:]) < _AREA_EPS:
            raise MeshFormatError("zero-length normal", lineno)
        rows.append(vals)
    if not rows:
        raise MeshFormatError("no points in file")
    data = np.asarray(rows)
    normals = data[:, 3:] / np.linalg.norm(data[:, 3:], axis=1, keepdims=True)
    return OrientedPointCloud(data[:, :3], normals)


def save_cloud(cloud: OrientedPointCloud, path) -> None:
    lines = [" ".join(repr(v) for v in row) for row in cloud.features.tolist()]
    Path(path).write_text("\n".join(lines) + "\n")


# ---------------------------------------------------------------- sampling


def face_normals(mesh: TriangleMesh) -> tuple[np.ndarray, np.ndarray]:
    """Unnormalized cross products (v1-v0)x(v2-v0) and their norms."""
    tri = mesh.triangles
    cross = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
    return cross, np.linalg.norm(cross, axis=1)


def face_areas(mesh: TriangleMesh) -> np.ndarray:
    return 0.5 * face_normals(mesh)[1]


def sample_face_centers(mesh: TriangleMesh) -> OrientedPointCloud:
    """One point per face at its barycenter with the winding-order normal.

    Faces with a cross-product norm below 1e-12 are skipped with a warning.
    """
    if mesh.n_faces < 1:
        raise ValueError("mesh has no faces")
    cross, norm = face_normals(mesh)
    keep = norm >= _AREA_EPS
    skipped = int((~keep).sum())
    if skipped:
        warnings.warn(f"skipped {skipped} zero-area face(s)", stacklevel=2)
    if not keep.any():
        raise ValueError("all faces have zero area")
    centers = mesh.triangles[keep].mean(axis=1)
    return OrientedPointCloud(centers, cross[keep] / norm[keep, None])


def sample_area_weighted(mesh: TriangleMesh, k: int, seed: int = 0) -> OrientedPointCloud:
    """Draw k surface points, faces chosen proportionally to area."""
    if k < 1:
        raise ValueError("k must be >= 1")
    cross, norm = face_normals(mesh) if mesh.n_faces else (np.zeros((0, 3)), np.zeros(0))
    total = norm.sum()
    if total < _AREA_EPS:
        raise ValueError("mesh has zero total area")
    rng = np.random.default_rng(seed)
    face = rng.choice(mesh.n_faces, size=k, p=norm / total)
    # uniform barycentric coordinates by reflecting the unit square
    u, v = rng.random((2, k))
    flip = u + v > 1.0
    u[flip], v[flip] = 1.0 - u[flip], 1.0 - v[flip]
    tri = mesh.triangles[face]
    pts = tri[:, 0] + u[:, None] * (tri[:, 1] - tri[:, 0]) + v[:, None] * (tri[:, 2] - tri[:, 0])
    return OrientedPointCloud(pts, cross[face] / norm[face, None])


def normalize_unit_sphere(cloud: OrientedPointCloud) -> tuple[OrientedPointCloud, np.ndarray, float]:
    """Center on the centroid and scale so the farthest point has norm 1.

    Returns the normalized cloud, the subtracted center and the divisor,
    so ``positions = normalized * scale + center`` undoes the transform.
    """
    center = cloud.positions.mean(axis=0)
    shifted = cloud.positions - center
    scale = float(np.linalg.norm(shifted, axis=1).max())
    if scale < _AREA_EPS:
        raise ValueError("all points coincide; cannot normalize")
    return OrientedPointCloud(shifted / scale, cloud.normals), center, scale


# ---------------------------------------------------------------- primitives


def icosahedron() -> TriangleMesh:
    """Regular icosahedron inscribed in the unit sphere, outward winding."""
    phi = (1.0 + np.sqrt(5.0)) / 2.0
    v = np.array(
        [
            [-1, phi, 0], [1, phi, 0], [-1, -phi, 0], [1, -phi, 0],
            [0, -1, phi], [0, 1, phi], [0, -1, -phi], [0, 1, -phi],
            [phi, 0, -1], [phi, 0, 1], [-phi, 0, -1], [-phi, 0, 1],
        ],
        dtype=np.float64,
    )
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    f = np.array(
        [
            [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
            [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
            [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
            [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
        ]
    )
    return TriangleMesh(v, f)


def icosphere(subdivisions: int = 2, radius: float = 1.0) -> TriangleMesh:
    """Loop-style midpoint subdivision of the icosahedron projected to a sphere."""
    mesh = icosahedron()
    verts = list(mesh.vertices)
    faces = mesh.faces
    for _ in range(subdivisions):
        cache: dict[tuple[int, int], int] = {}

        def midpoint(a, b):
            key = (a, b) if a < b else (b, a)
            if key not in cache:
                p = verts[a] + verts[b]
                verts.append(p / np.linalg.norm(p))
                cache[key] = len(verts) - 1
            return cache[key]

        new = []
        for a, b, c in faces.tolist():
            ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
            new += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        faces = np.asarray(new)
    return TriangleMesh(np.asarray(verts) * radius, faces)
