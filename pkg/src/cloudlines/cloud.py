"""Point cloud container, exact k-nearest-neighbour index, per-point surface attributes.

Attributes (normal, curvature, scale) are estimated from the PCA of each
point's neighbourhood: the normal is the eigenvector of the smallest
eigenvalue of the neighbourhood covariance, the curvature is that smallest
eigenvalue, and the scale is the distance to the third-closest neighbour.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.spatial import cKDTree

# Extra neighbours fetched per query so distance ties at the cut can be
# resolved by index without an immediate re-query.
_TIE_PAD = 4
# Mantissa bits kept when comparing distances. Points that are equidistant
# in exact arithmetic (lattice clouds are full of them) come out of the
# tree a few ulps apart, with the ordering depending on the coordinate
# scale; rounding the comparison key makes such pairs true ties, which are
# then broken by index.
_KEY_BITS = 21


def _round_mantissa(values: np.ndarray, bits: int = _KEY_BITS) -> np.ndarray:
    """Values rounded to `bits` mantissa bits (all operations exact)."""
    m, e = np.frexp(np.asarray(values, dtype=np.float64))
    return np.ldexp(np.round(np.ldexp(m, bits)), e - bits)
# Relative eigenvalue below which curvature is treated as round-off and
# snapped to zero, keeping seed ordering stable on exact planes.
_CURVATURE_EPS = 1e-12
# Relative floor applied to per-point scale so duplicate points keep a
# usable (positive) scale.
_SCALE_FLOOR = 1e-9


@dataclass
class PointCloud:
    """Unorganized 3D points. The row index is the point's identity everywhere."""

    points: np.ndarray                   # (N, 3) float64
    colors: Optional[np.ndarray] = None  # opaque per-point payload, passed through untouched

    def __post_init__(self) -> None:
        pts = np.ascontiguousarray(np.asarray(self.points, dtype=np.float64))
        if pts.ndim != 2 or pts.shape[1] != 3:
            raise ValueError(f"points must have shape (N, 3), got {pts.shape}")
        if pts.size and not np.isfinite(pts).all():
            raise ValueError("points contain non-finite coordinates")
        self.points = pts

    def __len__(self) -> int:
        return len(self.points)

    @property
    def bbox_diagonal(self) -> float:
        if len(self.points) == 0:
            return 0.0
        return float(np.linalg.norm(self.points.max(axis=0) - self.points.min(axis=0)))


@dataclass
class PointAttributes:
    """Per-point surface attributes, stored as parallel arrays."""

    normals: np.ndarray    # (N, 3) unit vectors, sign arbitrary
    curvature: np.ndarray  # (N,) smallest covariance eigenvalue, >= 0
    scale: np.ndarray      # (N,) distance to the 3rd-closest neighbour, > 0
    neighbors: np.ndarray  # (N, k) int32, ascending distance, ties by lower index
    valid: np.ndarray      # (N,) bool, False where the neighbourhood is degenerate


class SpatialIndex:
    """Exact KNN over a fixed cloud.

    Queries return neighbours in ascending distance order and never include
    the queried point itself. Distances that agree to _KEY_BITS mantissa
    bits count as tied and are ordered by lower point index.
    """

    def __init__(self, points: np.ndarray):
        if len(points) == 0:
            raise ValueError("empty input: cannot build a spatial index over zero points")
        self._points = points
        self._tree = cKDTree(points)
        self._n = len(points)

    def __len__(self) -> int:
        return self._n

    def neighbors(self, i: int, k: int) -> np.ndarray:
        """Indices of the k nearest neighbours of cloud point i (self excluded)."""
        idx, _ = self._row(i, min(k, self._n - 1))
        return idx

    def knn_table(self, k: int, workers: int = 1) -> tuple[np.ndarray, np.ndarray]:
        """(indices, distances) of the k nearest neighbours for every point.

        k is clamped to N-1. Results are independent of `workers`.
        """
        n = self._n
        kk = min(k, n - 1)
        if kk < 1:
            return np.empty((n, 0), np.int32), np.empty((n, 0))
        out_i = np.empty((n, kk), np.int32)
        out_d = np.empty((n, kk))
        kq = min(n, kk + 1 + _TIE_PAD)
        chunk = max(1, int(4e6) // kq)
        for s in range(0, n, chunk):
            e = min(n, s + chunk)
            d, idx = self._tree.query(self._points[s:e], k=kq, workers=workers)
            rows = np.arange(s, e)
            idx_s, d_s = _sort_rows(idx, d)
            kept_i, kept_d = _drop_self(idx_s, d_s, rows)
            # The tie group at the cut is fully present only if the largest
            # returned distance exceeds the cut distance.
            safe = (kq >= n) | (_round_mantissa(d[:, -1]) > _round_mantissa(kept_d[:, kk - 1]))
            out_i[s:e] = kept_i[:, :kk]
            out_d[s:e] = kept_d[:, :kk]
            for r in np.nonzero(~safe)[0]:
                out_i[s + r], out_d[s + r] = self._row(s + r, kk)
        return out_i, out_d

    def _row(self, i: int, kk: int) -> tuple[np.ndarray, np.ndarray]:
        """Single-row exact query, expanding until the cut tie group is complete."""
        m = min(self._n, kk + 1 + _TIE_PAD)
        while True:
            d, idx = self._tree.query(self._points[i], k=m)
            order = np.lexsort((idx, _round_mantissa(d)))
            idx, d = idx[order], d[order]
            sel = idx != i
            if sel.all():
                idx2, d2 = idx[:-1], d[:-1]  # self pushed out by duplicates: drop farthest
            else:
                idx2, d2 = idx[sel], d[sel]
            complete = m >= self._n
            if complete or (len(d2) > kk and _round_mantissa(d[-1]) > _round_mantissa(d2[kk - 1])):
                return idx2[:kk].astype(np.int32), d2[:kk]
            m = min(self._n, m * 2)


def _sort_rows(idx: np.ndarray, d: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Row-wise sort by (rounded distance, index)."""
    m, kq = idx.shape
    rows = np.repeat(np.arange(m), kq)
    order = np.lexsort((idx.ravel(), _round_mantissa(d.ravel()), rows))
    return idx.ravel()[order].reshape(m, kq), d.ravel()[order].reshape(m, kq)


def _drop_self(idx: np.ndarray, d: np.ndarray, self_ids: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Remove each row's own index (exactly one entry per row)."""
    keep = idx != self_ids[:, None]
    # Rows of pure duplicates may have pushed self out of the result; drop
    # the farthest entry there instead so every row loses exactly one.
    full = keep.all(axis=1)
    if full.any():
        keep[full, -1] = False
    order = np.argsort(~keep, axis=1, kind="stable")
    return (
        np.take_along_axis(idx, order, axis=1)[:, :-1],
        np.take_along_axis(d, order, axis=1)[:, :-1],
    )


def build_index(cloud: PointCloud) -> SpatialIndex:
    if len(cloud) == 0:
        raise ValueError("empty input: point cloud has no points")
    return SpatialIndex(cloud.points)


def compute_attributes(
    cloud: PointCloud,
    index: SpatialIndex,
    k: int = 20,
    workers: int = 1,
) -> PointAttributes:
    """Estimate normal, curvature and scale for every point from its KNN.

    The covariance is taken over the point itself plus its k nearest
    neighbours. Points whose neighbourhood collapses to a single location
    are flagged invalid; k must be at least 3 because the scale is the
    distance to the third-closest neighbour.
    """
    if k < 3:
        raise ValueError(f"k must be >= 3 (scale uses the 3rd-closest neighbour), got {k}")
    n = len(cloud)
    if n < 4:
        raise ValueError(f"need at least 4 points to estimate attributes, got {n}")
    nbr_idx, nbr_dist = index.knn_table(k, workers=workers)
    kk = nbr_idx.shape[1]

    diag = cloud.bbox_diagonal
    # A cloud of coincident points has no extent to derive a floor from;
    # any positive constant keeps downstream threshold arithmetic finite.
    scale_floor = _SCALE_FLOOR * diag if diag > 0.0 else 1.0
    scale = np.maximum(nbr_dist[:, 2].copy(), scale_floor)

    pts = cloud.points
    normals = np.empty((n, 3))
    curvature = np.empty(n)
    valid = np.empty(n, bool)
    degenerate_var = (_SCALE_FLOOR * diag) ** 2

    chunk = max(1, int(6e6) // (kk + 1))
    for s in range(0, n, chunk):
        e = min(n, s + chunk)
        nb = pts[nbr_idx[s:e]]                       # (c, kk, 3)
        own = pts[s:e]
        mean = (nb.sum(axis=1) + own) / (kk + 1)
        c_nb = nb - mean[:, None, :]
        c_own = own - mean
        cov = np.einsum("cki,ckj->cij", c_nb, c_nb)
        cov += np.einsum("ci,cj->cij", c_own, c_own)
        cov /= kk + 1
        w, v = np.linalg.eigh(cov)                   # ascending eigenvalues
        lam3, lam1 = w[:, 0], w[:, 2]
        lam3 = np.where(lam3 < _CURVATURE_EPS * lam1, 0.0, lam3)
        normals[s:e] = v[:, :, 0]
        curvature[s:e] = np.maximum(lam3, 0.0)
        valid[s:e] = lam1 > degenerate_var

    return PointAttributes(
        normals=normals,
        curvature=curvature,
        scale=scale,
        neighbors=nbr_idx,
        valid=valid,
    )
