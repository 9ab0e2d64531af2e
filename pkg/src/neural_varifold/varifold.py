"""Varifold kernels between oriented point clouds.

Three pointwise kernels over (position, normal) pairs are available:

* ``ntk1`` - product of a positional NTK and a normal NTK,
* ``ntk2`` - one NTK over the concatenated 6-d rows ``[x | z]``,
* ``ct``   - Gaussian RBF on positions times the squared cosine of normals.

A cloud-level kernel averages (or sums) the pointwise block, and the
varifold distance is the RKHS norm of the difference of two clouds.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, asdict
from pathlib import Path
from typing import Sequence

import numpy as np

from .geometry import OrientedPointCloud
from .ntk import ntk_mlp, _check_depth

__all__ = [
    "FAMILIES",
    "KernelConfig",
    "pointwise_gram_ntk1",
    "pointwise_gram_ntk2",
    "pointwise_gram_ct",
    "pointwise_gram",
    "cloud_kernel",
    "varifold_distance",
    "varifold_distance_squared",
    "pairwise_cloud_gram",
    "save_gram_csv",
    "load_gram_csv",
]

FAMILIES = ("ntk1", "ntk2", "ct")
DEFAULT_DEPTH = {"ntk1": 5, "ntk2": 9}

# cap on pointwise entries evaluated per block when batching many clouds
_BLOCK_ENTRIES = 1 << 21


@dataclass(frozen=True)
class KernelConfig:
    family: str = "ntk1"
    depth: int | None = None
    ct_sigma: float = 0.3
    aggregation: str = "mean"

    def __post_init__(self):
        family = self.family.lower()
        if family not in FAMILIES:
            raise ValueError(f"unknown kernel family {self.family!r}; expected one of {FAMILIES}")
        object.__setattr__(self, "family", family)
        if self.depth is None and family in DEFAULT_DEPTH:
            object.__setattr__(self, "depth", DEFAULT_DEPTH[family])
        if family != "ct":
            _check_depth(self.depth)
        if not self.ct_sigma > 0:
            raise ValueError("ct_sigma must be positive")
        if self.aggregation not in ("mean", "sum"):
            raise ValueError("aggregation must be 'mean' or 'sum'")

    def to_dict(self) -> dict:
        return asdict(self)


def pointwise_gram_ntk1(a: OrientedPointCloud, b: OrientedPointCloud, depth: int = 5) -> np.ndarray:
    return ntk_mlp(a.positions, b.positions, depth) * ntk_mlp(a.normals, b.normals, depth)


def pointwise_gram_ntk2(a: OrientedPointCloud, b: OrientedPointCloud, depth: int = 9) -> np.ndarray:
    return ntk_mlp(a.features, b.features, depth)


def pointwise_gram_ct(a: OrientedPointCloud, b: OrientedPointCloud, ct_sigma: float = 0.3) -> np.ndarray:
    if not ct_sigma > 0:
        raise ValueError("ct_sigma must be positive")
    xa, xb = a.positions, b.positions
    sq = (xa**2).sum(1)[:, None] + (xb**2).sum(1)[None, :] - 2.0 * xa @ xb.T
    np.maximum(sq, 0.0, out=sq)
    return np.exp(-sq / ct_sigma**2) * (a.normals @ b.normals.T) ** 2


def pointwise_gram(a: OrientedPointCloud, b: OrientedPointCloud, config: KernelConfig) -> np.ndarray:
    if config.family == "ntk1":
        return pointwise_gram_ntk1(a, b, config.depth)
    if config.family == "ntk2":
        return pointwise_gram_ntk2(a, b, config.depth)
    return pointwise_gram_ct(a, b, config.ct_sigma)


def _aggregate(block: np.ndarray, config: KernelConfig) -> float:
    total = float(block.sum())
    return total / block.size if config.aggregation == "mean" else total


def cloud_kernel(a: OrientedPointCloud, b: OrientedPointCloud, config: KernelConfig | None = None) -> float:
    """Aggregated kernel value between two whole clouds."""
    config = config or KernelConfig()
    return _aggregate(pointwise_gram(a, b, config), config)


def varifold_distance_squared(a, b, config: KernelConfig | None = None) -> float:
    """K(a,a) - 2 K(a,b) + K(b,b), floored at zero."""
    config = config or KernelConfig()
    value = cloud_kernel(a, a, config) - 2.0 * cloud_kernel(a, b, config) + cloud_kernel(b, b, config)
    return max(0.0, value)


def varifold_distance(a, b, config: KernelConfig | None = None) -> float:
    return float(np.sqrt(varifold_distance_squared(a, b, config)))


def _concat(clouds: Sequence[OrientedPointCloud]) -> OrientedPointCloud:
    return OrientedPointCloud(
        np.concatenate([c.positions for c in clouds]), np.concatenate([c.normals for c in clouds])
    )


def _row_against(a: OrientedPointCloud, others: Sequence[OrientedPointCloud], config: KernelConfig) -> np.ndarray:
    """Cloud kernel of ``a`` against each cloud in ``others`` via batched blocks."""
    out = np.empty(len(others))
    start = 0
    while start < len(others):
        stop, entries = start, 0
        while stop < len(others) and (stop == start or entries + len(a) * len(others[stop]) <= _BLOCK_ENTRIES):
            entries += len(a) * len(others[stop])
            stop += 1
        chunk = others[start:stop]
        block = pointwise_gram(a, _concat(chunk), config)
        offsets = np.cumsum([0] + [len(c) for c in chunk])
        for k in range(len(chunk)):
            if chunk[k] is a:
                # self block on its own so the diagonal angle gets pinned
                out[start + k] = cloud_kernel(a, a, config)
            else:
                out[start + k] = _aggregate(block[:, offsets[k] : offsets[k + 1]], config)
        start = stop
    return out


def pairwise_cloud_gram(
    set_a: Sequence[OrientedPointCloud],
    set_b: Sequence[OrientedPointCloud] | None = None,
    config: KernelConfig | None = None,
    threads: int = 1,
) -> np.ndarray:
    """Matrix of cloud kernels between two sets of clouds.

    With ``set_b`` omitted the self-Gram of ``set_a`` is built from its
    upper triangle and mirrored, so it is exactly symmetric.
    """
    config = config or KernelConfig()
    set_a = list(set_a)
    symmetric = set_b is None
    set_b = set_a if symmetric else list(set_b)
    if not set_a or not set_b:
        raise ValueError("cloud sets must be nonempty")

    def row(i):
        others = set_b[i:] if symmetric else set_b
        return i, _row_against(set_a[i], others, config)

    gram = np.empty((len(set_a), len(set_b)))
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(row, range(len(set_a))))
    else:
        rows = [row(i) for i in range(len(set_a))]
    for i, values in rows:
        if symmetric:
            gram[i, i:] = values
            gram[i:, i] = values
        else:
            gram[i] = values
    return gram


def save_gram_csv(gram, path, config: KernelConfig) -> None:
    gram = np.atleast_2d(np.asarray(gram, dtype=np.float64))
    cfg = " ".join(f"{k}={v}" for k, v in config.to_dict().items())
    header = f"cloud_gram {cfg} n={gram.shape[0]} n2={gram.shape[1]}"
    np.savetxt(Path(path), gram, delimiter=",", fmt="%.17g", header=header, comments="# ")


def load_gram_csv(path) -> tuple[np.ndarray, KernelConfig]:
    path = Path(path)
    with path.open() as fh:
        tokens = fh.readline().lstrip("#").split()[1:]
    meta = dict(tok.split("=", 1) for tok in tokens)
    depth = None if meta.get("depth") in (None, "None") else int(meta["depth"])
    config = KernelConfig(meta["family"], depth, float(meta["ct_sigma"]), meta["aggregation"])
    return np.loadtxt(path, delimiter=",", comments="#", ndmin=2), config
