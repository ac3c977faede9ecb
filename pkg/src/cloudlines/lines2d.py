"""Contour tracing, polyline splitting and line fitting in raster space.

Contours are closed 8-connected border chains (outer and hole boundaries)
traced by border following. Each chain is recursively split at its point of
maximum chord deviation, and every sufficiently long run is fitted with a
total-least-squares line whose endpoints map back onto the source plane
through the pixel-center transform.
"""

from __future__ import annotations

from dataclasses import dataclass

import cv2
import numpy as np

from .raster import PlaneFrame, Raster


@dataclass
class Contour:
    """A closed boundary chain in pixel coordinates."""

    id: int
    plane_id: int
    chain: np.ndarray  # (L, 2) int32 (u, v)
    is_hole: bool = False
    parent: int = -1   # id of the enclosing contour, -1 for outermost

    @property
    def length(self) -> int:
        return len(self.chain)


@dataclass
class LineSegment2D:
    """A fitted straight stretch of one contour, in continuous pixel coords."""

    contour_id: int
    e0: np.ndarray  # (2,) (u, v)
    e1: np.ndarray
    inlier_count: int
    rms: float

    @property
    def length(self) -> float:
        return float(np.linalg.norm(self.e1 - self.e0))


@dataclass
class LineSegment3D:
    """A line segment on a detected plane, with provenance back to its contour."""

    a: np.ndarray  # (3,)
    b: np.ndarray
    plane_id: int
    contour_id: int
    id: int = -1

    def __post_init__(self) -> None:
        d = self.b - self.a
        length = float(np.linalg.norm(d))
        if length <= 0.0:
            raise ValueError("degenerate segment: endpoints coincide")
        u = d / length
        # Canonical sign (z up, then x, then y) so direction-derived
        # quantities ignore endpoint order.
        if u[2] < 0 or (u[2] == 0 and (u[0] < 0 or (u[0] == 0 and u[1] < 0))):
            u = -u
        self.length = length
        self.direction = u
        self.origin_distance = float(np.linalg.norm(self.a - (self.a @ u) * u))


def trace_contours(occupancy: np.ndarray, plane_id: int = -1, min_length: int = 40) -> list[Contour]:
    """All outer and hole boundary chains of the occupied pixels.

    Chains are 8-connected and closed; the traced pixel set equals the set
    of occupied pixels with at least one unoccupied 4-neighbour. Chains
    shorter than min_length pixels are discarded (hierarchy links are
    remapped onto the survivors).
    """
    img = np.pad(occupancy, 1).astype(np.uint8)
    raw, hierarchy = cv2.findContours(img, cv2.RETR_CCOMP, cv2.CHAIN_APPROX_NONE)
    if not raw:
        return []
    hierarchy = hierarchy[0]
    kept: list[Contour] = []
    remap = {}
    for i, c in enumerate(raw):
        chain = (c[:, 0, :] - 1).astype(np.int32)  # undo pad; columns are (u, v)
        if len(chain) < min_length:
            continue
        remap[i] = len(kept)
        kept.append(
            Contour(
                id=len(kept),
                plane_id=plane_id,
                chain=chain,
                is_hole=bool(hierarchy[i][3] != -1),
                parent=int(hierarchy[i][3]),
            )
        )
    for c in kept:
        c.parent = remap.get(c.parent, -1)
    return kept


def _max_deviation(pts: np.ndarray) -> tuple[float, int]:
    """Largest perpendicular distance of interior points to the chord, and
    its position within pts."""
    a, b = pts[0], pts[-1]
    ab = b - a
    norm = float(np.hypot(ab[0], ab[1]))
    rel = pts[1:-1] - a
    if norm < 1e-12:
        dev = np.hypot(rel[:, 0], rel[:, 1])
    else:
        dev = np.abs(rel[:, 0] * ab[1] - rel[:, 1] * ab[0]) / norm
    m = int(np.argmax(dev))
    return float(dev[m]), m + 1


def split_contour(chain: np.ndarray, tolerance: float = 2.0, min_run: int = 8) -> list[np.ndarray]:
    """Split a closed chain into maximal straight runs.

    The chain is first cut at its start and at the point farthest from it,
    then each piece is split recursively at the pixel of maximum chord
    deviation while that deviation exceeds the tolerance. Adjacent runs that
    jointly stay within tolerance are re-merged (cyclically), and runs
    shorter than min_run pixels are dropped.
    """
    n = len(chain)
    pts = chain.astype(np.float64)
    if n < 2:
        return [pts] if n >= min_run else []
    d0 = ((pts - pts[0]) ** 2).sum(axis=1)
    cut = int(np.argmax(d0))
    if d0[cut] == 0.0:
        return []
    ext = np.vstack([pts, pts[:1]])  # ext[n] == ext[0] closes the loop

    ranges: list[tuple[int, int]] = []
    stack = [(cut, len(ext) - 1), (0, cut)]
    while stack:
        i, j = stack.pop()
        if j - i < 2:
            ranges.append((i, j))
            continue
        dev, m = _max_deviation(ext[i : j + 1])
        if dev > tolerance:
            stack.append((i + m, j))
            stack.append((i, i + m))
        else:
            ranges.append((i, j))
    ranges.sort()
    runs = [ext[i : j + 1] for i, j in ranges]

    # Re-merge neighbours (including across the seam) whose union still fits
    # one chord, so runs are maximal regardless of where the chain started.
    merged = True
    while merged and len(runs) > 1:
        merged = False
        i = 0
        while len(runs) > 1 and i < len(runs):
            j = (i + 1) % len(runs)
            if j == i:
                break
            cand = np.vstack([runs[i], runs[j][1:]])
            dev, _ = _max_deviation(cand)
            if dev <= tolerance:
                runs[i] = cand
                del runs[j]
                if j < i:
                    i -= 1
                merged = True
            else:
                i += 1

    return [r for r in runs if len(r) >= min_run]


def fit_segment(run: np.ndarray, contour_id: int = -1) -> LineSegment2D | None:
    """Total-least-squares line through a pixel run.

    The direction is the principal axis of the run's 2D scatter; endpoints
    are the first and last pixel projected onto that line. Returns None for
    zero-variance (coincident) runs.
    """
    pts = run.astype(np.float64)
    mean = pts.mean(axis=0)
    x = pts - mean
    cov = x.T @ x / len(pts)
    w, v = np.linalg.eigh(cov)
    if w[1] <= 1e-12:
        return None
    direction = v[:, 1]
    t = x @ direction
    e0 = mean + t[0] * direction
    e1 = mean + t[-1] * direction
    if np.linalg.norm(e1 - e0) <= 0.0:
        return None
    perp = x @ v[:, 0]
    return LineSegment2D(
        contour_id=contour_id,
        e0=e0,
        e1=e1,
        inlier_count=len(pts),
        rms=float(np.sqrt(np.mean(perp**2))),
    )


def pixel_to_plane(uv: np.ndarray, raster: Raster) -> np.ndarray:
    """Frame coordinates of (possibly fractional) pixel coordinates, using
    pixel centers: x = (u + 0.5) * cell + x_min."""
    uv = np.atleast_2d(uv)
    return np.stack(
        [
            (uv[:, 0] + 0.5) * raster.cell + raster.x_min,
            (uv[:, 1] + 0.5) * raster.cell + raster.y_min,
        ],
        axis=1,
    )


def plane_to_world(xy: np.ndarray, frame: PlaneFrame) -> np.ndarray:
    """3D positions of frame coordinates: origin + x * v_x + y * v_y."""
    xy = np.atleast_2d(xy)
    return frame.origin + xy[:, :1] * frame.v_x + xy[:, 1:2] * frame.v_y


def unproject(
    seg: LineSegment2D,
    raster: Raster,
    frame: PlaneFrame,
    plane_id: int,
    seg_id: int = -1,
) -> LineSegment3D:
    """Lift a fitted 2D segment back onto its source plane in 3D."""
    xy = pixel_to_plane(np.stack([seg.e0, seg.e1]), raster)
    p = plane_to_world(xy, frame)
    return LineSegment3D(
        a=p[0],
        b=p[1],
        plane_id=plane_id,
        contour_id=seg.contour_id,
        id=seg_id,
    )
