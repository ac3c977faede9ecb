"""Structure-aware cleanup of raw detections.

Per plane, segments are clustered by orientation; planes whose two dominant
clusters carry too little of the total segment length are rejected, and the
remaining segments are length-filtered per contour against a threshold tied
to how structured the contour is. Finally, near-collinear segments across
the whole scene are merged by extending the longer one, never refitting its
direction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .lines2d import LineSegment3D


@dataclass
class OrientationCluster:
    """Segments grouped around the direction of their longest member."""

    referring_id: int
    direction: np.ndarray  # unit direction of the referring segment
    member_ids: list[int] = field(default_factory=list)
    total_length: float = 0.0


@dataclass
class MergeCandidate:
    """A merge hypothesis: candidate passed the origin-distance gate of the target."""

    target_id: int
    candidate_id: int
    distance_gap_ratio: float   # |d_i - d_j| / mag, < the gate by construction
    endpoint_perp: tuple[float, float]  # candidate endpoint distances to the target line
    longitudinal_gap: float     # 0 when the 1D projections overlap
    merged: bool = False


def _by_length(segments: list[LineSegment3D]) -> list[LineSegment3D]:
    return sorted(segments, key=lambda s: (-s.length, s.id))


def cluster_plane_lines(
    segments: list[LineSegment3D],
    join_deg: float = 10.0,
    new_deg: float = 30.0,
) -> tuple[list[OrientationCluster], list[int], list[np.ndarray]]:
    """Greedy orientation clustering of one plane's segments.

    Walking segments in descending length order, a segment joins the first
    cluster whose referring direction deviates less than join_deg, seeds a
    new cluster when it deviates more than new_deg from every cluster, and
    stays unclustered otherwise. Returns the clusters sorted by descending
    total length, the unclustered segment ids, and the structural directions
    (referring directions of the top one or two clusters).
    """
    cos_join = math.cos(math.radians(join_deg))
    cos_new = math.cos(math.radians(new_deg))
    clusters: list[OrientationCluster] = []
    unclustered: list[int] = []
    for s in _by_length(segments):
        devs = [abs(float(c.direction @ s.direction)) for c in clusters]
        joined = False
        for c, dot in zip(clusters, devs):
            if dot > cos_join:
                c.member_ids.append(s.id)
                c.total_length += s.length
                joined = True
                break
        if joined:
            continue
        if all(dot < cos_new for dot in devs):
            clusters.append(
                OrientationCluster(
                    referring_id=s.id,
                    direction=s.direction,
                    member_ids=[s.id],
                    total_length=s.length,
                )
            )
        else:
            unclustered.append(s.id)
    clusters.sort(key=lambda c: -c.total_length)
    structural = [c.direction for c in clusters[:2]]
    return clusters, unclustered, structural


def plane_is_outlier(
    clusters: list[OrientationCluster],
    total_length: float,
    min_ratio: float = 0.3,
) -> bool:
    """True when the two dominant clusters carry less than min_ratio of the
    plane's total segment length."""
    l1 = clusters[0].total_length if clusters else 0.0
    l2 = clusters[1].total_length if len(clusters) > 1 else 0.0
    return l1 + l2 < min_ratio * total_length


def reject_outlier_segments(
    segments: list[LineSegment3D],
    structural_directions: list[np.ndarray],
    plane_scale: float,
    structural_deg: float = 10.0,
) -> list[LineSegment3D]:
    """Per-contour length filter with a structure-dependent threshold.

    A contour's structural ratio t is the length share of segments within
    structural_deg of a structural direction. The minimum kept length is
    10, 20 or 40 plane scales for t > 75%, 50% <= t <= 75% and t < 50%.
    """
    cos_s = math.cos(math.radians(structural_deg))
    by_contour: dict[int, list[LineSegment3D]] = {}
    for s in segments:
        by_contour.setdefault(s.contour_id, []).append(s)
    kept: list[LineSegment3D] = []
    for segs in by_contour.values():
        total = sum(s.length for s in segs)
        structural = sum(
            s.length
            for s in segs
            if any(abs(float(s.direction @ o)) > cos_s for o in structural_directions)
        )
        if total <= 0.0:
            continue
        t = structural / total
        if t > 0.75:
            th_l = 10.0 * plane_scale
        elif t >= 0.5:
            th_l = 20.0 * plane_scale
        else:
            th_l = 40.0 * plane_scale
        kept.extend(s for s in segs if s.length >= th_l)
    kept.sort(key=lambda s: s.id)
    return kept


def _latitude_bin(direction: np.ndarray, bin_deg: float, n_bins: int) -> int:
    lat = math.degrees(math.asin(min(1.0, max(0.0, float(direction[2])))))
    return min(int(lat / bin_deg + 1e-9), n_bins - 1)


def merge_segments(
    segments: list[LineSegment3D],
    mag: float,
    plane_scales: dict[int, float],
    bin_deg: float = 6.0,
    dist_ratio: float = 0.1,
    perp_mult: float = 4.0,
    gap_mult: float = 10.0,
    record: list[MergeCandidate] | None = None,
) -> list[LineSegment3D]:
    """Merge near-collinear segments scene-wide; idempotent.

    Segments are histogrammed by direction latitude into bin_deg bins.
    Working in descending length order, each unconsumed segment sweeps its
    own and the adjacent bins for candidates whose origin distance is within
    dist_ratio * mag, whose endpoints both lie within perp_mult plane scales
    of its line, and whose 1D projection overlaps or leaves a gap of at most
    gap_mult plane scales. Absorbing a candidate extends the segment's
    endpoints along its own (never refitted) line; sweeps repeat until no
    candidate is absorbed. A segment that has led its own sweep is final.
    """
    if mag <= 0.0:
        raise ValueError("mag must be positive")
    if not segments:
        return []
    order = _by_length(segments)
    n_bins = max(1, math.ceil(90.0 / bin_deg))
    bins = [_latitude_bin(s.direction, bin_deg, n_bins) for s in order]
    by_bin: dict[int, list[int]] = {}
    for pos, b in enumerate(bins):
        by_bin.setdefault(b, []).append(pos)

    consumed: set[int] = set()
    finalized: set[int] = set()
    out: dict[int, LineSegment3D] = {}
    for pos, seg in enumerate(order):
        if seg.id in consumed:
            continue
        finalized.add(seg.id)
        s_pi = plane_scales[seg.plane_id]
        u = seg.direction
        a0 = seg.a
        t_a0 = 0.0 if u @ (seg.b - seg.a) >= 0 else -seg.length
        lo, hi = t_a0, t_a0 + seg.length
        cand_positions = sorted(
            p
            for b in (bins[pos] - 1, bins[pos], bins[pos] + 1)
            for p in by_bin.get(b, [])
            if p != pos
        )
        changed = True
        while changed:
            changed = False
            for p in cand_positions:
                other = order[p]
                if other.id in consumed or other.id in finalized:
                    continue
                gap_ratio = abs(seg.origin_distance - other.origin_distance) / mag
                if gap_ratio >= dist_ratio:
                    continue
                w_a = other.a - a0
                w_b = other.b - a0
                perp_a = float(np.linalg.norm(w_a - (w_a @ u) * u))
                perp_b = float(np.linalg.norm(w_b - (w_b @ u) * u))
                hypothesis = MergeCandidate(
                    target_id=seg.id,
                    candidate_id=other.id,
                    distance_gap_ratio=gap_ratio,
                    endpoint_perp=(perp_a, perp_b),
                    longitudinal_gap=0.0,
                )
                if record is not None:
                    record.append(hypothesis)
                if perp_a > perp_mult * s_pi or perp_b > perp_mult * s_pi:
                    continue
                t0, t1 = sorted((float(w_a @ u), float(w_b @ u)))
                gap = max(t0 - hi, lo - t1, 0.0)
                hypothesis.longitudinal_gap = gap
                if gap <= gap_mult * s_pi:
                    lo, hi = min(lo, t0), max(hi, t1)
                    consumed.add(other.id)
                    hypothesis.merged = True
                    changed = True
        if lo == t_a0 and hi == t_a0 + seg.length:
            out[seg.id] = seg
        else:
            out[seg.id] = LineSegment3D(
                a=a0 + lo * u,
                b=a0 + hi * u,
                plane_id=seg.plane_id,
                contour_id=seg.contour_id,
                id=seg.id,
            )
    return [out[s.id] for s in segments if s.id in out]
