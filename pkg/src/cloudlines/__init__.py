"""Line segment detection in large unorganized 3D point clouds.

The pipeline groups points into planar regions, rasterizes each plane's
members into a binary image, traces the occupied-area contours, fits 2D
line segments to the straight contour runs, lifts them back to 3D, and
finally removes outlier planes/segments and merges collinear detections
across the whole scene.
"""

from __future__ import annotations

from .cloud import PointAttributes, PointCloud, SpatialIndex, build_index, compute_attributes
from .config import ConfigError, PipelineConfig, load_config
from .io import CloudFormatError, load_cloud, load_result_segments, load_truth, save_cloud, save_result, save_truth
from .lines2d import (
    Contour,
    LineSegment2D,
    LineSegment3D,
    fit_segment,
    split_contour,
    trace_contours,
    unproject,
)
from .pipeline import DetectionResult, PipelineStageError, StageTimings, run_pipeline
from .postprocess import (
    MergeCandidate,
    OrientationCluster,
    cluster_plane_lines,
    merge_segments,
    plane_is_outlier,
    reject_outlier_segments,
)
from .raster import (
    DegeneratePlaneError,
    PlaneFrame,
    Raster,
    RasterTooLargeError,
    build_frame,
    close_bitmap,
    grid_coord,
    project_to_plane,
    rasterize,
)
from .scenes import SCENE_NAMES, Scene, evaluate, generate_scene
from .segmentation import (
    Plane,
    Region,
    cell_size_for,
    find_adjacent_regions,
    grow_regions,
    merge_regions,
)

__version__ = "0.1.0"

__all__ = [
    "PointCloud",
    "PointAttributes",
    "SpatialIndex",
    "build_index",
    "compute_attributes",
    "Region",
    "Plane",
    "grow_regions",
    "find_adjacent_regions",
    "merge_regions",
    "cell_size_for",
    "PlaneFrame",
    "Raster",
    "DegeneratePlaneError",
    "RasterTooLargeError",
    "build_frame",
    "project_to_plane",
    "grid_coord",
    "close_bitmap",
    "rasterize",
    "Contour",
    "LineSegment2D",
    "LineSegment3D",
    "trace_contours",
    "split_contour",
    "fit_segment",
    "unproject",
    "OrientationCluster",
    "MergeCandidate",
    "cluster_plane_lines",
    "plane_is_outlier",
    "reject_outlier_segments",
    "merge_segments",
    "PipelineConfig",
    "ConfigError",
    "load_config",
    "run_pipeline",
    "DetectionResult",
    "StageTimings",
    "PipelineStageError",
    "CloudFormatError",
    "load_cloud",
    "save_cloud",
    "save_result",
    "load_result_segments",
    "save_truth",
    "load_truth",
    "Scene",
    "SCENE_NAMES",
    "generate_scene",
    "evaluate",
    "__version__",
]
