"""Finitely supported probability measures and their signed differences."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree

from .errors import BadWeights, DimensionMismatch, EmptySupport, NonFiniteInput

WEIGHT_SUM_TOL = 1e-9
DROP_TOL = 1e-15


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=np.float64)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class PointSet:
    """Sample coordinates, one row per point."""

    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim == 1:
            data = data[:, None]
        if data.ndim != 2:
            raise DimensionMismatch(f"point data must be 2-D, got shape {data.shape}")
        if data.shape[0] < 1 or data.shape[1] < 1:
            raise EmptySupport("point set needs at least one row and one column")
        if not np.all(np.isfinite(data)):
            raise NonFiniteInput("point coordinates contain NaN or Inf")
        object.__setattr__(self, "data", _frozen(data))

    @property
    def n_samples(self) -> int:
        return self.data.shape[0]

    @property
    def dim(self) -> int:
        return self.data.shape[1]

    def __len__(self) -> int:
        return self.n_samples


def as_pointset(points) -> PointSet:
    return points if isinstance(points, PointSet) else PointSet(points)


@dataclass(frozen=True, eq=False)
class DiscreteMeasure:
    points: PointSet
    weights: np.ndarray

    @property
    def n_samples(self) -> int:
        return self.points.n_samples

    @property
    def dim(self) -> int:
        return self.points.dim


@dataclass(frozen=True, eq=False)
class SignedSupport:
    """Joined support of two measures with signed coefficients.

    ``n_first`` is the number of leading rows that came from the first
    measure; it is ``None`` once duplicates have been merged.
    """

    points: PointSet | None
    coefficients: np.ndarray
    n_first: int | None = None

    @property
    def size(self) -> int:
        return len(self.coefficients)

    @property
    def is_empty(self) -> bool:
        return self.size == 0


def make_measure(points, weights: Sequence[float] | None = None) -> DiscreteMeasure:
    """Validate ``points`` and ``weights`` into a :class:`DiscreteMeasure`.

    Uniform weights are used when ``weights`` is omitted. Given weights must
    be positive and sum to one within 1e-9; they are then rescaled so the
    stored sum is one to machine precision.
    """
    points = as_pointset(points)
    n = points.n_samples
    if weights is None:
        w = np.full(n, 1.0 / n)
    else:
        w = np.asarray(weights, dtype=np.float64).ravel()
        if w.shape[0] != n:
            raise BadWeights(f"expected {n} weights, got {w.shape[0]}")
        if not np.all(np.isfinite(w)):
            raise NonFiniteInput("weights contain NaN or Inf")
        if np.any(w <= 0):
            raise BadWeights("weights must be strictly positive")
        total = math.fsum(w)
        if abs(total - 1.0) > WEIGHT_SUM_TOL:
            raise BadWeights(f"weights sum to {total!r}, not 1")
        w = w / total
    return DiscreteMeasure(points, _frozen(w))


def _merge_groups(data: np.ndarray, tol: float) -> tuple[np.ndarray, int]:
    """Label rows that coincide within ``tol`` in sup-norm.

    Groups are the connected components of the "within tol" relation, so the
    result does not depend on row order.
    """
    if tol == 0:
        _, labels = np.unique(data, axis=0, return_inverse=True)
        labels = labels.ravel()
        return labels, int(labels.max()) + 1
    pairs = cKDTree(data).query_pairs(r=tol, p=np.inf, output_type="ndarray")
    n = data.shape[0]
    adj = coo_matrix((np.ones(len(pairs)), (pairs[:, 0], pairs[:, 1])), shape=(n, n))
    count, labels = connected_components(adj, directed=False)
    return labels, count


def has_coincident_rows(points, tol: float = 0.0) -> bool:
    """True when two rows of ``points`` lie within ``tol`` of each other in sup-norm."""
    data = as_pointset(points).data
    if tol == 0:
        return np.unique(data, axis=0).shape[0] < data.shape[0]
    return cKDTree(data).count_neighbors(cKDTree(data), r=tol, p=np.inf) > data.shape[0]


def signed_difference(
    p: DiscreteMeasure,
    q: DiscreteMeasure,
    merge_duplicates: bool = False,
    merge_tolerance: float = 0.0,
) -> SignedSupport:
    """Join the supports of ``p`` and ``q`` with coefficients ``+p_i`` / ``-q_j``.

    With ``merge_duplicates`` set, rows within ``merge_tolerance`` of each
    other (sup-norm) collapse into one row carrying the summed coefficient;
    the representative is the lexicographically smallest row of its group and
    merged coefficients smaller than 1e-15 in magnitude are dropped.
    """
    if p.dim != q.dim:
        raise DimensionMismatch(f"dimension {p.dim} != {q.dim}")
    if merge_tolerance < 0:
        raise ValueError("merge_tolerance must be >= 0")
    data = np.vstack([p.points.data, q.points.data])
    coef = np.concatenate([p.weights, -q.weights])
    if not merge_duplicates:
        return SignedSupport(PointSet(data), _frozen(coef), n_first=p.n_samples)

    labels, count = _merge_groups(data, merge_tolerance)
    # sort by (label, coordinates) so each group's first row is its representative
    order = np.lexsort(np.vstack([data.T[::-1], labels]))
    starts = np.flatnonzero(np.r_[True, np.diff(labels[order]) != 0])
    reps = data[order[starts]]
    sizes = np.diff(np.r_[starts, order.size])
    merged = coef[order[starts]]
    for g in np.flatnonzero(sizes > 1):
        merged[g] = math.fsum(coef[order[starts[g]:starts[g] + sizes[g]]])
    order = np.lexsort(reps.T[::-1])
    reps, merged = reps[order], merged[order]
    keep = np.abs(merged) >= DROP_TOL
    if not keep.any():
        return SignedSupport(None, _frozen(np.empty(0)))
    return SignedSupport(PointSet(reps[keep]), _frozen(merged[keep]))
