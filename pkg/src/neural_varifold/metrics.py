"""Chamfer and exact Earth Mover's distances between point sets."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.spatial import cKDTree
from scipy.spatial.distance import cdist

__all__ = ["TransportPlan", "chamfer", "emd_exact", "MAX_EMD_POINTS"]

MAX_EMD_POINTS = 4096


@dataclass(frozen=True)
class TransportPlan:
    """Optimal bijection ``a[i] -> b[assignment[i]]`` and its total cost."""

    assignment: np.ndarray
    cost: float


def _points(p, name):
    p = np.asarray(p, dtype=np.float64)
    if p.ndim != 2 or p.shape[1] != 3:
        raise ValueError(f"{name} must be an (m, 3) array")
    if len(p) == 0:
        raise ValueError(f"{name} is empty")
    return p


def chamfer(a, b, squared: bool = True, reduction: str = "mean") -> float:
    """Symmetric Chamfer distance.

    Default: mean over each side of the squared nearest-neighbour distance,
    summed over both directions.  ``squared=False`` uses plain distances and
    ``reduction="sum"`` drops the per-side normalization.
    """
    a, b = _points(a, "a"), _points(b, "b")
    if reduction not in ("mean", "sum"):
        raise ValueError("reduction must be 'mean' or 'sum'")
    d_ab = cKDTree(b).query(a)[0]
    d_ba = cKDTree(a).query(b)[0]
    if squared:
        d_ab, d_ba = d_ab**2, d_ba**2
    if reduction == "mean":
        return float(d_ab.mean() + d_ba.mean())
    return float(d_ab.sum() + d_ba.sum())


def emd_exact(a, b) -> TransportPlan:
    """Minimum-cost perfect matching under Euclidean ground cost."""
    a, b = _points(a, "a"), _points(b, "b")
    if len(a) != len(b):
        raise ValueError(f"EMD needs balanced clouds, got {len(a)} and {len(b)} points")
    if len(a) > MAX_EMD_POINTS:
        raise ValueError(f"exact EMD limited to {MAX_EMD_POINTS} points")
    cost = cdist(a, b)
    rows, cols = linear_sum_assignment(cost)
    assignment = np.empty(len(a), dtype=np.int64)
    assignment[rows] = cols
    return TransportPlan(assignment, float(cost[rows, cols].sum()))
