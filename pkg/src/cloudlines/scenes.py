"""Synthetic benchmark scenes with ground-truth edges, and result scoring.

Scenes are sampled on regular grids with optional Gaussian noise along each
face normal; generation is deterministic for a given seed. The evaluator
scores detected segments against ground-truth edges with angle, distance
and coverage gates (coverage is the union over all matching segments).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cloud import PointCloud

SCENE_NAMES = ("cube", "room", "facade", "two-planes")


@dataclass
class Scene:
    name: str
    cloud: PointCloud
    edges: np.ndarray  # (E, 2, 3) ground-truth segment endpoints
    spacing: float
    noise: float
    seed: int


def _grid(extent_a: float, extent_b: float, spacing: float):
    a = np.arange(round(extent_a / spacing) + 1) * spacing
    b = np.arange(round(extent_b / spacing) + 1) * spacing
    aa, bb = np.meshgrid(a, b, indexing="ij")
    return aa.ravel(), bb.ravel()


def _box_faces(dims: tuple[float, float, float], spacing: float, rng, noise: float):
    """Sample all 6 faces of an axis-aligned box cornered at the origin.

    Faces include their edges, so edge and corner samples repeat across the
    faces that share them, as a real multi-view scan would.
    """
    w, d, h = dims
    pts = []
    # (fixed axis, fixed value, free axes, extents, outward normal axis)
    faces = [
        (2, 0.0, (0, 1), (w, d)),
        (2, h, (0, 1), (w, d)),
        (1, 0.0, (0, 2), (w, h)),
        (1, d, (0, 2), (w, h)),
        (0, 0.0, (1, 2), (d, h)),
        (0, w, (1, 2), (d, h)),
    ]
    for axis, value, (fa, fb), (ea, eb) in faces:
        aa, bb = _grid(ea, eb, spacing)
        p = np.empty((len(aa), 3))
        p[:, fa] = aa
        p[:, fb] = bb
        p[:, axis] = value
        if noise > 0.0:
            p[:, axis] += noise * rng.standard_normal(len(aa))
        pts.append(p)
    return np.vstack(pts)


def _box_edges(dims: tuple[float, float, float]) -> np.ndarray:
    w, d, h = dims
    c = np.array(
        [[x, y, z] for x in (0.0, w) for y in (0.0, d) for z in (0.0, h)]
    )
    pairs = []
    for i in range(8):
        for j in range(i + 1, 8):
            if np.sum(c[i] != c[j]) == 1:
                pairs.append((c[i], c[j]))
    return np.array(pairs)


# Facade layout: one vertical wall with a grid of rectangular window openings.
_FACADE_W, _FACADE_H = 10.0, 6.0
_WIN_W, _WIN_H = 1.0, 1.5
_WIN_COLS, _WIN_ROWS = 3, 2


def _facade_windows() -> list[tuple[float, float, float, float]]:
    rects = []
    for i in range(_WIN_COLS):
        for j in range(_WIN_ROWS):
            x0 = 1.5 + i * 3.0
            z0 = 1.0 + j * 2.5
            rects.append((x0, x0 + _WIN_W, z0, z0 + _WIN_H))
    return rects


def generate_scene(name: str, spacing: float, noise: float = 0.0, seed: int = 0) -> Scene:
    """Deterministic synthetic scene with ground-truth edges.

    cube: unit cube, 12 edges. room: 4 x 3 x 2.5 box, 12 edges.
    facade: 10 x 6 wall with 6 window openings, 28 edges.
    two-planes: parallel unit squares at z = 0 and z = 0.5, 8 edges.
    """
    rng = np.random.default_rng(seed)
    if name == "cube":
        dims = (1.0, 1.0, 1.0)
        pts = _box_faces(dims, spacing, rng, noise)
        edges = _box_edges(dims)
    elif name == "room":
        dims = (4.0, 3.0, 2.5)
        pts = _box_faces(dims, spacing, rng, noise)
        edges = _box_edges(dims)
    elif name == "facade":
        xx, zz = _grid(_FACADE_W, _FACADE_H, spacing)
        keep = np.ones(len(xx), bool)
        for x0, x1, z0, z1 in _facade_windows():
            keep &= ~((xx > x0) & (xx < x1) & (zz > z0) & (zz < z1))
        pts = np.zeros((int(keep.sum()), 3))
        pts[:, 0] = xx[keep]
        pts[:, 2] = zz[keep]
        if noise > 0.0:
            pts[:, 1] += noise * rng.standard_normal(len(pts))
        edges = [
            ((0, 0, 0), (_FACADE_W, 0, 0)),
            ((0, 0, _FACADE_H), (_FACADE_W, 0, _FACADE_H)),
            ((0, 0, 0), (0, 0, _FACADE_H)),
            ((_FACADE_W, 0, 0), (_FACADE_W, 0, _FACADE_H)),
        ]
        for x0, x1, z0, z1 in _facade_windows():
            edges += [
                ((x0, 0, z0), (x1, 0, z0)),
                ((x0, 0, z1), (x1, 0, z1)),
                ((x0, 0, z0), (x0, 0, z1)),
                ((x1, 0, z0), (x1, 0, z1)),
            ]
        edges = np.array(edges, dtype=np.float64)
    elif name == "two-planes":
        pts_list = []
        edges = []
        for z in (0.0, 0.5):
            aa, bb = _grid(1.0, 1.0, spacing)
            p = np.empty((len(aa), 3))
            p[:, 0] = aa
            p[:, 1] = bb
            p[:, 2] = z
            if noise > 0.0:
                p[:, 2] += noise * rng.standard_normal(len(aa))
            pts_list.append(p)
            edges += [
                ((0, 0, z), (1, 0, z)),
                ((0, 1, z), (1, 1, z)),
                ((0, 0, z), (0, 1, z)),
                ((1, 0, z), (1, 1, z)),
            ]
        pts = np.vstack(pts_list)
        edges = np.array(edges, dtype=np.float64)
    else:
        raise ValueError(f"unknown scene {name!r}; expected one of {SCENE_NAMES}")
    return Scene(name=name, cloud=PointCloud(pts), edges=edges, spacing=spacing, noise=noise, seed=seed)


def _segment_array(segments) -> np.ndarray:
    """(S, 2, 3) endpoint array from segment objects or an array-like."""
    if isinstance(segments, np.ndarray):
        return segments.reshape(-1, 2, 3)
    return np.array([[s.a, s.b] for s in segments], dtype=np.float64).reshape(-1, 2, 3)


def _union_length(intervals: list[tuple[float, float]]) -> float:
    total = 0.0
    end = -np.inf
    for lo, hi in sorted(intervals):
        if hi <= end:
            continue
        total += hi - max(lo, end)
        end = hi
    return total


def evaluate(
    segments,
    edges: np.ndarray,
    tol: float,
    angle_deg: float = 5.0,
    min_coverage: float = 0.7,
) -> dict:
    """Score detected segments against ground-truth edges.

    An edge is recovered when segments within angle_deg and tol of its line
    jointly cover at least min_coverage of its length. The endpoint error
    averages, over recovered edges, the distance from the outermost matched
    segment endpoints to the edge endpoints. The spurious ratio is the total
    length of segments that matched no edge, normalized by the ground-truth
    total length.
    """
    seg = _segment_array(segments)
    edges = np.asarray(edges, dtype=np.float64).reshape(-1, 2, 3)
    cos_gate = np.cos(np.radians(angle_deg))
    recovered = 0
    endpoint_errors = []
    matched = np.zeros(len(seg), bool)
    gt_total = 0.0
    for a, b in edges:
        e = b - a
        length = float(np.linalg.norm(e))
        gt_total += length
        if length <= 0.0 or len(seg) == 0:
            continue
        e = e / length
        d = seg.reshape(-1, 3) - a
        t = (d @ e).reshape(-1, 2)
        perp = np.linalg.norm(d - np.outer(d @ e, e), axis=1).reshape(-1, 2)
        sdir = seg[:, 1] - seg[:, 0]
        sdir = sdir / np.linalg.norm(sdir, axis=1, keepdims=True)
        ok = (np.abs(sdir @ e) > cos_gate) & (perp < tol).all(axis=1)
        intervals = []
        ends = []  # (t, 3D endpoint) of matching segments
        for i in np.nonzero(ok)[0]:
            lo, hi = sorted(t[i])
            lo_c, hi_c = max(lo, 0.0), min(hi, length)
            if hi_c <= lo_c:
                continue
            intervals.append((lo_c, hi_c))
            matched[i] = True
            for j in range(2):
                ends.append((float(t[i, j]), seg[i, j]))
        if intervals and _union_length(intervals) >= min_coverage * length:
            recovered += 1
            ends.sort(key=lambda p: p[0])
            err_a = float(np.linalg.norm(ends[0][1] - a))
            err_b = float(np.linalg.norm(ends[-1][1] - b))
            endpoint_errors.append((err_a + err_b) / 2.0)
    seg_lengths = np.linalg.norm(seg[:, 1] - seg[:, 0], axis=1) if len(seg) else np.zeros(0)
    spurious = float(seg_lengths[~matched].sum() / gt_total) if gt_total > 0 else 0.0
    return {
        "edges_total": int(len(edges)),
        "edges_recovered": recovered,
        "recall": recovered / len(edges) if len(edges) else 0.0,
        "mean_endpoint_error": float(np.mean(endpoint_errors)) if endpoint_errors else 0.0,
        "spurious_ratio": spurious,
    }
