"""End-to-end detection: segmentation, per-plane line extraction, postprocessing.

Per-plane work is independent and can run on a thread pool; results are
assembled in plane-id order, so the output does not depend on the thread
count. Timings are wall-clock per stage.
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .cloud import PointCloud, build_index, compute_attributes
from .config import PipelineConfig
from .lines2d import Contour, LineSegment2D, LineSegment3D, fit_segment, split_contour, trace_contours, unproject
from .postprocess import cluster_plane_lines, merge_segments, plane_is_outlier, reject_outlier_segments
from .raster import DegeneratePlaneError, PlaneFrame, Raster, RasterTooLargeError, build_frame, rasterize
from .segmentation import Plane, find_adjacent_regions, grow_regions, merge_regions

# Below this fraction of the bounding-box diagonal the first point is too
# close to the origin to normalize merge distances; fall back to the diagonal.
_MAG_EPS = 1e-6


class PipelineStageError(RuntimeError):
    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"{stage}: {cause}")
        self.stage = stage
        self.cause = cause


@dataclass
class StageTimings:
    segmentation_s: float = 0.0
    line_detection_s: float = 0.0
    postprocess_s: float = 0.0
    total_s: float = 0.0


@dataclass
class PlaneLines:
    """Per-plane intermediate products, kept when diagnostics are requested."""

    plane: Plane
    frame: PlaneFrame
    raster: Raster | None
    contours: list[Contour]
    segments2d: list[LineSegment2D]


@dataclass
class DetectionResult:
    planes: list[Plane]
    segments: list[LineSegment3D]
    timings: StageTimings
    stats: dict = field(default_factory=dict)
    point_labels: np.ndarray | None = None
    plane_lines: list[PlaneLines] | None = None


def _detect_plane(plane: Plane, cloud: PointCloud, cfg: PipelineConfig, keep_detail: bool):
    """Frame, raster, contours and fitted segments for one plane.

    Returns (PlaneLines, segments3d) or a string reason when the plane
    cannot be rasterized.
    """
    try:
        frame = build_frame(plane, cloud)
        raster = rasterize(plane, frame, cloud, max_dim=cfg.max_raster_dim)
    except (DegeneratePlaneError, RasterTooLargeError) as exc:
        return str(exc)
    contours = trace_contours(raster.occupancy, plane_id=plane.id, min_length=cfg.min_contour_px)
    segs2d: list[LineSegment2D] = []
    segs3d: list[LineSegment3D] = []
    for contour in contours:
        for run in split_contour(contour.chain, tolerance=cfg.split_tol_px, min_run=cfg.min_run_px):
            seg2d = fit_segment(run, contour_id=contour.id)
            if seg2d is None:
                continue
            segs2d.append(seg2d)
            segs3d.append(unproject(seg2d, raster, frame, plane.id))
    detail = PlaneLines(
        plane=plane,
        frame=frame,
        raster=raster if keep_detail else None,
        contours=contours,
        segments2d=segs2d,
    )
    return detail, segs3d


def run_pipeline(
    cloud: PointCloud,
    config: PipelineConfig | None = None,
    keep_detail: bool = False,
) -> DetectionResult:
    """Detect 3D line segments in a point cloud.

    Stages: attribute estimation + region growing + merging (segmentation),
    per-plane rasterization and 2D line fitting (line detection), then
    outlier rejection and scene-wide merging (postprocess) unless disabled.
    """
    cfg = (config or PipelineConfig()).validate()
    t_start = time.perf_counter()

    try:
        index = build_index(cloud)
        attrs = compute_attributes(cloud, index, k=cfg.k, workers=cfg.threads)
        regions, labels = grow_regions(
            cloud, attrs, theta_deg=cfg.theta_deg, th_o_mult=cfg.th_o_mult, th_p_mult=cfg.th_p_mult
        )
        adjacency = find_adjacent_regions(attrs, regions, labels)
        planes, dropped_groups = merge_regions(
            cloud, attrs, regions, adjacency, labels,
            theta_deg=cfg.theta_deg,
            min_members=cfg.min_region_size,
            min_extent_ratio=cfg.plane_min_extent_ratio,
            plane_scale_mult=cfg.plane_scale_mult,
        )
    except Exception as exc:
        raise PipelineStageError("segmentation", exc) from exc
    t_seg = time.perf_counter()

    try:
        if cfg.threads > 1 and len(planes) > 1:
            with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
                outcomes = list(pool.map(lambda p: _detect_plane(p, cloud, cfg, keep_detail), planes))
        else:
            outcomes = [_detect_plane(p, cloud, cfg, keep_detail) for p in planes]
    except Exception as exc:
        raise PipelineStageError("line-detection", exc) from exc

    kept_planes: list[Plane] = []
    details: list[PlaneLines] = []
    segments: list[LineSegment3D] = []
    dropped_planes: list[dict] = []
    for plane, outcome in zip(planes, outcomes):
        if isinstance(outcome, str):
            dropped_planes.append({"plane_id": plane.id, "reason": outcome})
            continue
        detail, segs3d = outcome
        kept_planes.append(plane)
        details.append(detail)
        segments.extend(segs3d)
    for sid, seg in enumerate(segments):
        seg.id = sid
    t_line = time.perf_counter()

    stats = {
        "point_count": len(cloud),
        "region_count": len(regions),
        "plane_count_raw": len(planes),
        "dropped_region_groups": len(dropped_groups),
        "dropped_planes": dropped_planes,
        "segment_count_raw": len(segments),
        "postprocess_enabled": cfg.postprocess_enabled,
    }

    final_planes = kept_planes
    final_segments = segments
    if cfg.postprocess_enabled and segments:
        try:
            diag = cloud.bbox_diagonal
            mag = float(np.linalg.norm(cloud.points[0]))
            if mag < _MAG_EPS * diag or mag <= 0.0:
                mag = diag
            by_plane: dict[int, list[LineSegment3D]] = {}
            for s in segments:
                by_plane.setdefault(s.plane_id, []).append(s)
            final_planes = []
            structural: dict[int, list[np.ndarray]] = {}
            rejected_plane_ids = []
            for plane in kept_planes:
                segs = by_plane.get(plane.id, [])
                if segs:
                    clusters, _, orientations = cluster_plane_lines(
                        segs, join_deg=cfg.cluster_join_deg, new_deg=cfg.cluster_new_deg
                    )
                    total = sum(s.length for s in segs)
                    if plane_is_outlier(clusters, total, min_ratio=cfg.plane_reject_ratio):
                        rejected_plane_ids.append(plane.id)
                        continue
                    structural[plane.id] = orientations
                else:
                    structural[plane.id] = []
                final_planes.append(plane)
            survivors: list[LineSegment3D] = []
            for plane in final_planes:
                survivors.extend(
                    reject_outlier_segments(
                        by_plane.get(plane.id, []),
                        structural[plane.id],
                        plane.scale,
                        structural_deg=cfg.cluster_join_deg,
                    )
                )
            scales = {p.id: p.scale for p in final_planes}
            final_segments = merge_segments(
                survivors, mag, scales,
                bin_deg=cfg.latitude_bin_deg,
                dist_ratio=cfg.merge_dist_ratio,
                perp_mult=cfg.merge_perp_mult,
                gap_mult=cfg.merge_gap_mult,
            )
            stats["rejected_planes"] = rejected_plane_ids
            stats["segment_count_filtered"] = len(survivors)
        except Exception as exc:
            raise PipelineStageError("postprocess", exc) from exc
    t_end = time.perf_counter()

    timings = StageTimings(
        segmentation_s=t_seg - t_start,
        line_detection_s=t_line - t_seg,
        postprocess_s=t_end - t_line,
        total_s=t_end - t_start,
    )
    return DetectionResult(
        planes=final_planes,
        segments=final_segments,
        timings=timings,
        stats=stats,
        point_labels=labels,
        plane_lines=details if keep_detail else None,
    )
