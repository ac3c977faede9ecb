"""Per-plane 2D frames and binary rasterization.

Each plane gets an orthonormal frame anchored at its centroid; member points
project into that frame and are binned into a binary image whose cell size
is the plane's scale. A single 3x3 morphological closing bridges the small
gaps left by uneven sampling.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import binary_dilation, binary_erosion

from .cloud import PointCloud, _round_mantissa
from .segmentation import Plane

# Nudge added before floor() so values that land exactly on a cell boundary
# bin identically regardless of global coordinate scale.
_GRID_EPS = 1e-9
# Relative threshold for "first member coincides with the centroid".
_AXIS_EPS = 1e-9

_STRUCT3 = np.ones((3, 3), bool)


class DegeneratePlaneError(ValueError):
    """All member points coincide with the plane centroid."""


class RasterTooLargeError(ValueError):
    """The raster would exceed the configured dimension cap."""


@dataclass
class PlaneFrame:
    """Orthonormal 2D coordinate frame on a plane: {v_x, v_y = v_x x n, n}."""

    origin: np.ndarray  # plane centroid
    v_x: np.ndarray
    v_y: np.ndarray
    normal: np.ndarray


@dataclass
class Raster:
    """Binary occupancy image of one plane's member points."""

    plane_id: int
    width: int
    height: int
    cell: float
    x_min: float
    y_min: float
    occupancy: np.ndarray     # (height, width) bool, after closing
    point_pixels: np.ndarray  # (M, 2) int32 (u, v), pre-morphology assignment per member

    def points_in_pixel(self, u: int, v: int) -> np.ndarray:
        """Member positions (indices into the plane's member list) binned to (u, v)."""
        return np.nonzero((self.point_pixels[:, 0] == u) & (self.point_pixels[:, 1] == v))[0]


def _canonical_sign(n: np.ndarray) -> np.ndarray:
    """The normal or its negation, whichever has a positive leading component.

    Eigensolvers hand back either sign at random; picking one from the
    geometry (largest component, round-off snapped away) keeps the frame,
    and with it every pixel index, reproducible.
    """
    s = n.copy()
    s[np.abs(s) < 1e-6] = 0.0
    lead = int(np.argmax(_round_mantissa(np.abs(s))))
    return -n if s[lead] < 0.0 else n


def build_frame(plane: Plane, cloud: PointCloud) -> PlaneFrame:
    """Frame from the plane normal and the lowest-index member that projects
    away from the centroid. The normal's sign is canonicalized first so the
    frame is a pure function of the member set and the fitted plane."""
    n = plane.normal / np.linalg.norm(plane.normal)
    n = _canonical_sign(n)
    pc = plane.centroid
    pts = cloud.points[plane.members]
    eps = _AXIS_EPS * plane.scale
    v_x = None
    for p in pts:
        v = p - pc
        v = v - (v @ n) * n
        norm = np.linalg.norm(v)
        if norm > eps:
            v_x = v / norm
            break
    if v_x is None:
        raise DegeneratePlaneError(
            f"plane {plane.id}: every member projects onto the centroid"
        )
    v_y = np.cross(v_x, n)
    return PlaneFrame(origin=pc, v_x=v_x, v_y=v_y, normal=n)


def project_to_plane(frame: PlaneFrame, points: np.ndarray) -> np.ndarray:
    """2D frame coordinates of 3D points: drop the normal component, then
    read off the v_x / v_y components. Returns (M, 2)."""
    p = np.atleast_2d(points)
    d = p - frame.origin
    dp = d - (d @ frame.normal)[:, None] * frame.normal
    return np.stack([dp @ frame.v_x, dp @ frame.v_y], axis=1)


def grid_coord(x: np.ndarray | float, x_min: float, cell: float) -> np.ndarray | int:
    """Cell index of a frame coordinate: floor((x - x_min) / cell)."""
    t = np.floor((np.asarray(x) - x_min) / cell + _GRID_EPS).astype(np.int64)
    return t if t.ndim else int(t)


def close_bitmap(bitmap: np.ndarray) -> np.ndarray:
    """3x3 dilation followed by 3x3 erosion, on a 1-pixel padded canvas so
    border pixels behave as in an unbounded image. Never removes occupied
    pixels."""
    p = np.pad(bitmap, 1)
    d = binary_dilation(p, _STRUCT3)
    e = binary_erosion(d, _STRUCT3, border_value=0)
    return e[1:-1, 1:-1]


def rasterize(
    plane: Plane,
    frame: PlaneFrame,
    cloud: PointCloud,
    max_dim: int = 16384,
) -> Raster:
    """Bin the plane's members into a binary image and close it.

    Raises RasterTooLargeError if either dimension would exceed max_dim.
    """
    xy = project_to_plane(frame, cloud.points[plane.members])
    x, y = xy[:, 0], xy[:, 1]
    x_min, y_min = float(x.min()), float(y.min())
    s = plane.scale
    width = int(grid_coord(float(x.max()), x_min, s)) + 1
    height = int(grid_coord(float(y.max()), y_min, s)) + 1
    if width > max_dim or height > max_dim:
        raise RasterTooLargeError(
            f"plane {plane.id}: raster {width}x{height} exceeds cap {max_dim}"
        )
    u = np.asarray(grid_coord(x, x_min, s), dtype=np.int32)
    v = np.asarray(grid_coord(y, y_min, s), dtype=np.int32)
    bitmap = np.zeros((height, width), bool)
    bitmap[v, u] = True
    return Raster(
        plane_id=plane.id,
        width=width,
        height=height,
        cell=s,
        x_min=x_min,
        y_min=y_min,
        occupancy=close_bitmap(bitmap),
        point_pixels=np.stack([u, v], axis=1),
    )
