"""Contour tracing, chain splitting, line fitting, and 2D-to-3D lifting."""

import numpy as np
import pytest

from cloudlines import fit_segment, split_contour, trace_contours, unproject
from cloudlines.lines2d import LineSegment2D, LineSegment3D, pixel_to_plane, plane_to_world
from cloudlines.raster import PlaneFrame, Raster


def _boundary_pixels(bitmap: np.ndarray) -> set[tuple[int, int]]:
    """Occupied pixels with at least one unoccupied 4-neighbour (outside counts)."""
    p = np.pad(bitmap, 1)
    inner = p[1:-1, 1:-1]
    hole = ~p[:-2, 1:-1] | ~p[2:, 1:-1] | ~p[1:-1, :-2] | ~p[1:-1, 2:]
    vs, us = np.nonzero(inner & hole)
    return set(zip(us.tolist(), vs.tolist()))


def _traced_pixels(contours) -> set[tuple[int, int]]:
    out: set[tuple[int, int]] = set()
    for c in contours:
        out.update(map(tuple, c.chain.tolist()))
    return out


def test_single_pixel_contour_is_filtered_by_default():
    bitmap = np.zeros((5, 5), bool)
    bitmap[2, 2] = True
    assert trace_contours(bitmap) == []
    kept = trace_contours(bitmap, min_length=1)
    assert len(kept) == 1
    assert kept[0].length == 1


def test_solid_square_boundary_chain():
    contours = trace_contours(np.ones((20, 20), bool))
    assert len(contours) == 1
    assert contours[0].length == 76
    assert not contours[0].is_hole
    assert _traced_pixels(contours) == _boundary_pixels(np.ones((20, 20), bool))


def test_square_with_hole_yields_outer_and_inner_contours():
    bitmap = np.ones((20, 20), bool)
    bitmap[7:13, 7:13] = False
    contours = trace_contours(bitmap, min_length=1)
    assert [c.is_hole for c in contours] == [False, True]
    assert contours[1].parent == contours[0].id
    assert _traced_pixels(contours) == _boundary_pixels(bitmap)

    big = np.ones((24, 24), bool)
    big[7:17, 7:17] = False
    survivors = trace_contours(big)
    assert sorted((c.length, c.is_hole) for c in survivors) == [(40, True), (92, False)]


def test_tracing_matches_boundary_predicate_on_random_bitmaps():
    rng = np.random.default_rng(31)
    for _ in range(40):
        h, w = rng.integers(1, 33, 2)
        bitmap = rng.random((h, w)) < rng.uniform(0.1, 0.9)
        for _ in range(rng.integers(0, 4)):
            v, u = rng.integers(0, h), rng.integers(0, w)
            bitmap[v : v + rng.integers(2, 8), u : u + rng.integers(2, 8)] = True
        got = _traced_pixels(trace_contours(bitmap, min_length=1))
        assert got == _boundary_pixels(bitmap)


def test_empty_bitmap_has_no_contours():
    assert trace_contours(np.zeros((8, 8), bool), min_length=1) == []


def test_rectangle_contour_splits_into_four_side_runs():
    contours = trace_contours(np.ones((12, 30), bool))
    runs = split_contour(contours[0].chain)
    assert sorted(len(r) for r in runs) == [12, 12, 30, 30]
    for run in runs:
        du = np.ptp(run[:, 0])
        dv = np.ptp(run[:, 1])
        assert min(du, dv) == 0.0


def test_straight_chain_is_a_single_run():
    chain = np.stack([np.arange(30), np.zeros(30, int)], axis=1).astype(np.int32)
    runs = split_contour(chain)
    assert len(runs) == 1
    assert len(runs[0]) == 30


def test_l_chain_splits_at_the_corner():
    chain = np.array([(u, 0) for u in range(21)] + [(20, v) for v in range(1, 16)], np.int32)
    runs = split_contour(chain)
    assert sorted(len(r) for r in runs) == [16, 21]


def test_short_runs_are_dropped():
    chain = np.array([(u, 0) for u in range(5)], np.int32)
    assert split_contour(chain) == []


def test_fit_exact_diagonal():
    seg = fit_segment(np.array([[0.0, 0], [1, 1], [2, 2]]))
    assert np.allclose(seg.e0, [0, 0])
    assert np.allclose(seg.e1, [2, 2])
    assert seg.rms < 1e-12
    assert seg.inlier_count == 3


def test_fit_handles_vertical_runs():
    run = np.stack([np.full(10, 5.0), np.arange(10.0)], axis=1)
    seg = fit_segment(run)
    direction = (seg.e1 - seg.e0) / seg.length
    assert abs(direction @ np.array([0.0, 1.0])) == pytest.approx(1.0)
    assert np.allclose(seg.e0, [5, 0])
    assert np.allclose(seg.e1, [5, 9])


def test_fit_noisy_horizontal_within_two_degrees():
    rng = np.random.default_rng(42)
    for _ in range(50):
        run = np.stack([np.arange(50.0), 0.3 * rng.standard_normal(50)], axis=1)
        seg = fit_segment(run)
        angle = np.degrees(np.arctan2(abs(seg.e1[1] - seg.e0[1]), abs(seg.e1[0] - seg.e0[0])))
        assert angle < 2.0


def test_fit_rejects_zero_variance_runs():
    assert fit_segment(np.full((10, 2), 3.0)) is None


def test_pixel_center_convention():
    raster = Raster(
        plane_id=0, width=4, height=4, cell=1.0, x_min=0.0, y_min=0.0,
        occupancy=np.ones((4, 4), bool), point_pixels=np.zeros((0, 2), np.int32),
    )
    assert np.allclose(pixel_to_plane(np.array([0.0, 0.0]), raster), [[0.5, 0.5]])
    half = Raster(
        plane_id=0, width=4, height=4, cell=0.5, x_min=-1.0, y_min=2.0,
        occupancy=np.ones((4, 4), bool), point_pixels=np.zeros((0, 2), np.int32),
    )
    assert np.allclose(pixel_to_plane(np.array([2.0, 0.0]), half), [[0.25, 2.25]])


def _random_frame(rng) -> PlaneFrame:
    q = np.linalg.qr(rng.standard_normal((3, 3)))[0]
    return PlaneFrame(origin=5.0 * rng.standard_normal(3), v_x=q[:, 0], v_y=q[:, 1], normal=q[:, 2])


def test_unproject_round_trip_and_in_plane():
    from cloudlines import project_to_plane

    rng = np.random.default_rng(9)
    for _ in range(50):
        frame = _random_frame(rng)
        raster = Raster(
            plane_id=3, width=64, height=64, cell=rng.uniform(0.01, 2.0),
            x_min=rng.uniform(-5, 5), y_min=rng.uniform(-5, 5),
            occupancy=np.ones((1, 1), bool), point_pixels=np.zeros((0, 2), np.int32),
        )
        e0, e1 = rng.uniform(0, 60, (2, 2))
        seg2d = LineSegment2D(contour_id=4, e0=e0, e1=e1, inlier_count=10, rms=0.0)
        seg3d = unproject(seg2d, raster, frame, plane_id=3, seg_id=7)
        assert seg3d.plane_id == 3
        assert seg3d.contour_id == 4
        assert seg3d.id == 7
        expected = pixel_to_plane(np.stack([e0, e1]), raster)
        got = project_to_plane(frame, np.stack([seg3d.a, seg3d.b]))
        scale = max(1.0, float(np.abs(expected).max()))
        assert np.abs(got - expected).max() < 1e-9 * scale
        for p in (seg3d.a, seg3d.b):
            assert abs((p - frame.origin) @ frame.normal) < 1e-9 * max(1.0, np.linalg.norm(p))


def test_plane_to_world_is_affine_in_the_frame():
    rng = np.random.default_rng(13)
    frame = _random_frame(rng)
    xy = rng.standard_normal((6, 2))
    world = plane_to_world(xy, frame)
    assert np.allclose(world, frame.origin + np.outer(xy[:, 0], frame.v_x) + np.outer(xy[:, 1], frame.v_y))


def test_segment_direction_is_canonical_under_endpoint_swap():
    a, b = np.array([1.0, 2.0, 3.0]), np.array([-2.0, 0.5, 1.0])
    fwd = LineSegment3D(a=a, b=b, plane_id=0, contour_id=0)
    rev = LineSegment3D(a=b, b=a, plane_id=0, contour_id=0)
    assert np.allclose(fwd.direction, rev.direction)
    assert fwd.length == rev.length
    assert fwd.origin_distance == pytest.approx(rev.origin_distance)
    assert fwd.direction[2] >= 0.0


def test_degenerate_segment_rejected():
    p = np.array([1.0, 1.0, 1.0])
    with pytest.raises(ValueError, match="degenerate segment"):
        LineSegment3D(a=p, b=p.copy(), plane_id=0, contour_id=0)


def test_clean_rectangle_corners_recovered_within_two_pixels():
    contours = trace_contours(np.ones((20, 40), bool))
    endpoints = []
    for run in split_contour(contours[0].chain):
        seg = fit_segment(run)
        endpoints.extend([seg.e0, seg.e1])
    endpoints = np.array(endpoints)
    for corner in ((0, 0), (39, 0), (39, 19), (0, 19)):
        assert np.linalg.norm(endpoints - corner, axis=1).min() < 2.0
