"""Plane extraction: seeded region growing followed by region merging.

Growing starts from the lowest-curvature unassigned point and admits a
neighbour when, measured against the seed, the normal deviation, orthogonal
offset and euclidean distance are all below their thresholds. Merging then
joins adjacent regions that are coplanar with the merge seed, dropping the
distance cap, and refits each merged group by PCA over all member points.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .cloud import PointCloud, PointAttributes, _round_mantissa

# Member count below which a merged group is not reported as a plane.
MIN_PLANE_MEMBERS = 30
# Minimum in-plane anisotropy sqrt(lam2/lam1); groups at or below this are
# line-like (rank-deficient for plane fitting) and are rejected.
MIN_EXTENT_RATIO = 0.01


def _lt(a, b):
    """a < b on round-off-insensitive keys.

    Regular sampling loves to park points exactly on a threshold (a grid
    corner whose distance cap equals the far diagonal, say). Comparing
    rounded keys makes such boundary cases land on the same side no matter
    how the coordinates were scaled.
    """
    return _round_mantissa(a) < _round_mantissa(b)


@dataclass
class Region:
    """A connected, roughly coplanar group of points produced by growing."""

    id: int
    members: np.ndarray  # int32 point indices, ascending
    seed: int
    normal: np.ndarray | None = None
    centroid: np.ndarray | None = None
    curvature: float = 0.0
    scale: float = 0.0


@dataclass
class Plane:
    """A merged, refitted planar group ready for rasterization."""

    id: int
    normal: np.ndarray    # unit, sign arbitrary
    centroid: np.ndarray
    members: np.ndarray   # int32 point indices, ascending
    scale: float          # raster cell size for this plane
    adjacent: list[int] = field(default_factory=list)


def grow_regions(
    cloud: PointCloud,
    attrs: PointAttributes,
    theta_deg: float = 15.0,
    th_o_mult: float = 1.0,
    th_p_mult: float = 50.0,
) -> tuple[list[Region], np.ndarray]:
    """Partition the cloud into regions by curvature-seeded BFS growing.

    Returns the regions plus a per-point label array (-1 for points that
    joined nothing, which only happens for degenerate-attribute points).
    Membership conditions are always evaluated against the region seed, so
    the result does not depend on traversal order within a region.
    """
    pts = cloud.points
    nrm = attrs.normals
    nbr = attrs.neighbors
    n = len(pts)
    cos_th = math.cos(math.radians(theta_deg))

    order = np.argsort(_round_mantissa(attrs.curvature), kind="stable")
    labels = np.full(n, -1, np.int32)
    regions: list[Region] = []

    for seed in order:
        if labels[seed] != -1 or not attrs.valid[seed]:
            continue
        rid = len(regions)
        n_s = nrm[seed]
        p_s = pts[seed]
        th_o = th_o_mult * attrs.scale[seed]
        th_p_sq = (th_p_mult * attrs.scale[seed]) ** 2
        labels[seed] = rid
        chunks = [np.array([seed], np.int32)]
        frontier = chunks[0]
        while frontier.size:
            cand = nbr[frontier].ravel()
            cand = cand[labels[cand] == -1]
            cand = np.unique(cand)
            cand = cand[attrs.valid[cand]]
            if cand.size == 0:
                break
            d = pts[cand] - p_s
            ok = _lt(cos_th, np.abs(nrm[cand] @ n_s))
            ok &= _lt(np.abs(d @ n_s), th_o)
            ok &= _lt(np.einsum("ij,ij->i", d, d), th_p_sq)
            frontier = cand[ok]
            if frontier.size:
                labels[frontier] = rid
                chunks.append(frontier)
        members = np.concatenate(chunks) if len(chunks) > 1 else chunks[0]
        regions.append(Region(id=rid, members=np.sort(members), seed=int(seed)))

    return regions, labels


def find_adjacent_regions(
    attrs: PointAttributes,
    regions: list[Region],
    labels: np.ndarray,
) -> list[list[int]]:
    """Symmetric region adjacency: some member of one has a KNN member of the other."""
    nbr = attrs.neighbors
    n, kk = nbr.shape
    adj: list[set[int]] = [set() for _ in regions]
    chunk = max(1, int(8e6) // max(kk, 1))
    for s in range(0, n, chunk):
        e = min(n, s + chunk)
        l_src = np.repeat(labels[s:e], kk)
        l_dst = labels[nbr[s:e].ravel()]
        m = (l_src >= 0) & (l_dst >= 0) & (l_src != l_dst)
        if not m.any():
            continue
        pairs = np.unique(np.stack([l_src[m], l_dst[m]], axis=1), axis=0)
        for a, b in pairs:
            adj[a].add(int(b))
            adj[b].add(int(a))
    return [sorted(s) for s in adj]


def _rank90(sorted_vals: np.ndarray) -> float:
    """The 90th-percentile entry of an ascending array (nearest rank)."""
    m = len(sorted_vals)
    idx = max(0, min(m - 1, math.ceil(0.9 * m - 1e-9) - 1))
    return float(sorted_vals[idx])


def cell_size_for(point_scales: np.ndarray) -> float:
    """Raster cell size from member point scales: 0.75 x their 90th percentile."""
    return 0.75 * _rank90(np.sort(point_scales))


def _region_moments(pts: np.ndarray, labels: np.ndarray, n_regions: int):
    """Per-region count, coordinate sums and centered scatter matrices.

    The scatter is accumulated around each region's own centroid rather than
    as raw second moments: subtracting mean products afterwards would leave
    cancellation noise of order eps * |p|^2 in the small eigenvalues, which
    for distant coordinates swamps the curvature of a flat region.
    """
    m = labels >= 0
    lab = labels[m]
    p = pts[m]
    cnt = np.bincount(lab, minlength=n_regions).astype(np.float64)
    sx = np.stack([np.bincount(lab, weights=p[:, a], minlength=n_regions) for a in range(3)], axis=1)
    mean = sx / np.maximum(cnt, 1.0)[:, None]
    centered = p - mean[lab]
    scatter = np.empty((n_regions, 3, 3))
    for a in range(3):
        for b in range(a, 3):
            v = np.bincount(lab, weights=centered[:, a] * centered[:, b], minlength=n_regions)
            scatter[:, a, b] = v
            scatter[:, b, a] = v
    return cnt, sx, scatter


def _combine_scatter(cnt: np.ndarray, sx: np.ndarray, scatter: np.ndarray, members: list[int]):
    """Count, mean and centered scatter of a union of regions.

    Per-region scatters shift to the union centroid with the parallel-axis
    term cnt * (mean_r - mean)^T (mean_r - mean), which is exact and keeps
    the union fit as well-conditioned as the per-region ones.
    """
    g_cnt = cnt[members].sum()
    g_mean = sx[members].sum(axis=0) / g_cnt
    shift = sx[members] / cnt[members][:, None] - g_mean
    g_scatter = scatter[members].sum(axis=0)
    g_scatter += np.einsum("m,ma,mb->ab", cnt[members], shift, shift)
    return g_cnt, g_mean, g_scatter


def _fit_from_moments(cnt: float, mean: np.ndarray, scatter: np.ndarray):
    """Mean, covariance eigenvalues (ascending) and eigenvectors.

    Eigenvalues below the centering round-off floor are zeroed: coincident
    members far from the origin leave residue of order (eps * |mean|)^2 in
    the scatter, and without the clamp that residue would make the same
    group read as degenerate at one coordinate offset and not at another.
    """
    cov = scatter / cnt
    cov = (cov + cov.T) / 2.0
    w, v = np.linalg.eigh(cov)
    w = np.maximum(w, 0.0)
    floor = (4.0 * np.finfo(np.float64).eps) ** 2 * float(mean @ mean)
    w[w <= floor] = 0.0
    return mean, w, v


def _stable_normal(w: np.ndarray, v: np.ndarray) -> np.ndarray:
    """A fit normal that does not depend on round-off for degenerate groups.

    Collinear members leave the two minor eigenvalues near zero, so the
    smallest eigenvector is solver noise. Such groups get a canonical
    perpendicular of their (well-conditioned) major axis instead; fully
    degenerate groups get the z axis.
    """
    if w[2] <= 0.0:
        return np.array([0.0, 0.0, 1.0])
    if w[1] < MIN_EXTENT_RATIO ** 2 * w[2]:
        # Snap round-off components so axis-aligned lines give exact axes,
        # then fix the sign; both would otherwise leak solver noise into
        # the choice of reference axis.
        direction = v[:, 2].copy()
        direction[np.abs(direction) < 1e-6] = 0.0
        direction /= np.linalg.norm(direction)
        first = int(np.nonzero(direction)[0][0])
        if direction[first] < 0.0:
            direction = -direction
        ref = np.zeros(3)
        ref[int(np.argmin(_round_mantissa(np.abs(direction))))] = 1.0
        perp = np.cross(direction, ref)
        return perp / np.linalg.norm(perp)
    return v[:, 0]


def fit_regions(cloud: PointCloud, attrs: PointAttributes, regions: list[Region], labels: np.ndarray) -> None:
    """Fill each region's fitted normal, centroid, curvature and scale in place.

    Regions too small for a meaningful PCA fall back to their seed point's
    attributes.
    """
    cnt, sx, scatter = _region_moments(cloud.points, labels, len(regions))
    for r in regions:
        c = cnt[r.id]
        if c >= 3:
            mean, w, v = _fit_from_moments(c, sx[r.id] / c, scatter[r.id])
            r.normal = _stable_normal(w, v)
            r.centroid = mean
            # Exactly flat groups give a smallest eigenvalue made of solver
            # noise; clamp it so their merge order falls back to region id.
            r.curvature = float(w[0]) if w[0] >= 1e-12 * w[2] else 0.0
        else:
            r.normal = attrs.normals[r.seed].copy()
            r.centroid = cloud.points[r.members].mean(axis=0)
            r.curvature = float(attrs.curvature[r.seed])
        r.scale = cell_size_for(attrs.scale[r.members])


def merge_regions(
    cloud: PointCloud,
    attrs: PointAttributes,
    regions: list[Region],
    adjacency: list[list[int]],
    labels: np.ndarray,
    theta_deg: float = 15.0,
    min_members: int = MIN_PLANE_MEMBERS,
    min_extent_ratio: float = MIN_EXTENT_RATIO,
    plane_scale_mult: float = 1.0,
) -> tuple[list[Plane], list[tuple[int, str]]]:
    """Merge adjacent coplanar regions and refit each group into a Plane.

    Groups are seeded in ascending region-curvature order; a neighbour joins
    when its normal deviates less than theta from the seed region's and its
    centroid lies within the seed region's scale of the seed plane. Returns
    the kept planes and (group_index, reason) diagnostics for dropped groups.
    """
    if any(r.normal is None for r in regions):
        fit_regions(cloud, attrs, regions, labels)
    n_regions = len(regions)
    cnt, sx, scatter = _region_moments(cloud.points, labels, n_regions)
    cos_th = math.cos(math.radians(theta_deg))
    curvatures = np.array([r.curvature for r in regions])
    order = np.argsort(_round_mantissa(curvatures), kind="stable")

    group = np.full(n_regions, -1, np.int32)
    groups: list[list[int]] = []
    for s_r in order:
        if group[s_r] != -1:
            continue
        gid = len(groups)
        seed_reg = regions[s_r]
        n_s = seed_reg.normal
        c_s = seed_reg.centroid
        th = seed_reg.scale
        group[s_r] = gid
        glist = [int(s_r)]
        queue = deque([int(s_r)])
        while queue:
            r = queue.popleft()
            for j in adjacency[r]:
                if group[j] != -1:
                    continue
                rj = regions[j]
                if _lt(cos_th, abs(float(n_s @ rj.normal))) and _lt(abs(float(n_s @ (rj.centroid - c_s))), th):
                    group[j] = gid
                    glist.append(j)
                    queue.append(j)
        groups.append(glist)

    planes: list[Plane] = []
    dropped: list[tuple[int, str]] = []
    kept_gid: dict[int, int] = {}
    for gid, glist in enumerate(groups):
        members = np.concatenate([regions[r].members for r in glist])
        if len(members) < min_members:
            dropped.append((gid, f"too few members ({len(members)} < {min_members})"))
            continue
        g_cnt, g_mean, g_scatter = _combine_scatter(cnt, sx, scatter, glist)
        mean, w, v = _fit_from_moments(g_cnt, g_mean, g_scatter)
        lam1, lam2 = w[2], w[1]
        if lam1 <= 0.0 or math.sqrt(lam2 / lam1) <= min_extent_ratio:
            dropped.append((gid, "degenerate extent: members are collinear"))
            continue
        pid = len(planes)
        kept_gid[gid] = pid
        planes.append(
            Plane(
                id=pid,
                normal=v[:, 0],
                centroid=mean,
                members=np.sort(members).astype(np.int32),
                scale=cell_size_for(attrs.scale[members]) * plane_scale_mult,
            )
        )

    for gid, pid in kept_gid.items():
        seen: set[int] = set()
        for r in groups[gid]:
            for j in adjacency[r]:
                g2 = int(group[j])
                if g2 != gid and g2 in kept_gid:
                    seen.add(kept_gid[g2])
        planes[pid].adjacent = sorted(seen)

    return planes, dropped
