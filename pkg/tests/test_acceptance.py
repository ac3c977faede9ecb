"""Whole-system checks: recovery quality, numeric oracles, runtime bounds.

Each test here corresponds to one entry in the registry in conftest.py and
is reported on its own line at the end of the run. The suite favors literal
parameter values over shared constants so every bound is visible in place.
"""

import numpy as np
import pytest

from cloudlines import (
    LineSegment3D,
    OrientationCluster,
    PlaneFrame,
    PointCloud,
    Region,
    build_frame,
    build_index,
    cluster_plane_lines,
    compute_attributes,
    evaluate,
    find_adjacent_regions,
    generate_scene,
    grow_regions,
    merge_regions,
    merge_segments,
    plane_is_outlier,
    project_to_plane,
    rasterize,
    reject_outlier_segments,
    run_pipeline,
    split_contour,
    trace_contours,
    unproject,
)
from cloudlines.lines2d import fit_segment, plane_to_world
from cloudlines.segmentation import fit_regions

X = np.array([1.0, 0.0, 0.0])
Y = np.array([0.0, 1.0, 0.0])
Z = np.array([0.0, 0.0, 1.0])


@pytest.fixture(scope="session")
def facade_million():
    """Facade scene with just over one million points, run single-threaded."""
    scene = generate_scene("facade", spacing=0.00714)
    assert len(scene.cloud) >= 1_000_000
    result = run_pipeline(scene.cloud)
    return scene, result


def test_clean_cube_recovery():
    scene = generate_scene("cube", spacing=0.01)
    result = run_pipeline(scene.cloud)
    assert len(result.planes) == 6
    report = evaluate(result.segments, scene.edges, tol=5 * 0.01)
    assert report["edges_recovered"] >= 10
    assert report["mean_endpoint_error"] <= 5 * 0.01
    assert report["spurious_ratio"] <= 0.3
    assert result.timings.total_s <= 10.0


def test_noisy_cube_recall():
    scene = generate_scene("cube", spacing=0.01, noise=0.2 * 0.01, seed=1)
    result = run_pipeline(scene.cloud)
    report = evaluate(result.segments, scene.edges, tol=8 * 0.01)
    assert report["edges_recovered"] >= 9


def test_normal_estimation_error():
    # 100 x 100 grid, 10k points, perpendicular noise equal to the grid pitch.
    spacing = 0.01
    rng = np.random.default_rng(12345)
    xs = np.arange(100) * spacing
    xx, yy = np.meshgrid(xs, xs, indexing="ij")
    pts = np.column_stack([xx.ravel(), yy.ravel(), rng.normal(0.0, 0.01, xx.size)])
    cloud = PointCloud(pts)
    attrs = compute_attributes(cloud, build_index(cloud), k=20)
    cosines = np.clip(np.abs(attrs.normals @ Z), -1.0, 1.0)
    mean_error_deg = float(np.degrees(np.arccos(cosines)).mean())
    assert mean_error_deg <= 5.0


def _grid_points(n: int, spacing: float, z: float = 0.0) -> np.ndarray:
    xs = np.arange(n) * spacing
    xx, yy = np.meshgrid(xs, xs, indexing="ij")
    return np.column_stack([xx.ravel(), yy.ravel(), np.full(xx.size, z)])


def _attrs_for(points: np.ndarray):
    cloud = PointCloud(points)
    return cloud, compute_attributes(cloud, build_index(cloud), k=20)


def _regions_from_labels(cloud, attrs, labels):
    regions = []
    for rid in range(int(labels.max()) + 1):
        members = np.flatnonzero(labels == rid)
        regions.append(Region(id=rid, members=members, seed=int(members[0])))
    fit_regions(cloud, attrs, regions, labels)
    return regions


def _seg3d(a, b, plane_id=0, contour_id=0, seg_id=0) -> LineSegment3D:
    return LineSegment3D(
        a=np.asarray(a, dtype=np.float64),
        b=np.asarray(b, dtype=np.float64),
        plane_id=plane_id,
        contour_id=contour_id,
        id=seg_id,
    )


def test_growing_merging_postprocess_examples():
    # Growing: parallel planes 100 point scales apart stay separate regions.
    near = _grid_points(15, 0.1)
    far = near.copy()
    far[:, 2] = 100 * 0.1
    cloud, attrs = _attrs_for(np.vstack([near, far]))
    regions, labels = grow_regions(cloud, attrs)
    assert sorted(len(r.members) for r in regions) == [225, 225]
    assert len(np.unique(labels[:225])) == 1
    assert len(np.unique(labels[225:])) == 1
    # Adjacency: no cross-neighbors at that distance, so none is recorded.
    assert find_adjacent_regions(attrs, regions, labels) == [[], []]

    # Growing: perpendicular wings never share interior points (90 > 15 deg).
    wing_a = _grid_points(15, 0.1)
    xs = np.arange(15) * 0.1
    zs = np.arange(1, 15) * 0.1
    xx, zz = np.meshgrid(xs, zs, indexing="ij")
    wing_b = np.column_stack([xx.ravel(), np.zeros(xx.size), zz.ravel()])
    cloud, attrs = _attrs_for(np.vstack([wing_a, wing_b]))
    _, labels = grow_regions(cloud, attrs)
    interior_a = set(labels[:225].reshape(15, 15)[:, 3:].ravel().tolist())
    interior_b = set(labels[225:].reshape(15, 14)[:, 2:].ravel().tolist())
    assert interior_a.isdisjoint(interior_b)

    # Region merging: halves of one grid are adjacent and merge to one plane.
    cloud, attrs = _attrs_for(_grid_points(10, 0.1))
    labels = (np.arange(100) >= 50).astype(np.int32)
    regions = _regions_from_labels(cloud, attrs, labels)
    adjacency = find_adjacent_regions(attrs, regions, labels)
    assert adjacency == [[1], [0]]
    planes, dropped = merge_regions(cloud, attrs, regions, adjacency, labels)
    assert dropped == []
    assert len(planes) == 1 and len(planes[0].members) == 100

    # Region merging: perpendicular adjacent regions stay separate planes.
    fold = np.vstack([wing_a, wing_b])
    cloud, attrs = _attrs_for(fold)
    labels = (np.arange(len(fold)) >= 225).astype(np.int32)
    regions = _regions_from_labels(cloud, attrs, labels)
    adjacency = find_adjacent_regions(attrs, regions, labels)
    assert adjacency == [[1], [0]]
    planes, _ = merge_regions(cloud, attrs, regions, adjacency, labels)
    assert sorted(len(p.members) for p in planes) == [210, 225]

    # Orientation clustering: four parallel segments form a single cluster.
    parallel = [
        _seg3d((0.0, i, 0.0), (3.0 + i, i, 0.0), seg_id=i) for i in range(4)
    ]
    clusters, unclustered, _ = cluster_plane_lines(parallel)
    assert len(clusters) == 1 and unclustered == []
    assert sorted(clusters[0].member_ids) == [0, 1, 2, 3]

    # Rectangle sides: two clusters whose directions are orthogonal.
    rect = [
        _seg3d((0, 0, 0), (10, 0, 0), seg_id=0),
        _seg3d((0, 5, 0), (10, 5, 0), seg_id=1),
        _seg3d((0, 0, 0), (0, 5, 0), seg_id=2),
        _seg3d((10, 0, 0), (10, 5, 0), seg_id=3),
    ]
    clusters, unclustered, structural = cluster_plane_lines(rect)
    assert len(clusters) == 2 and unclustered == []
    assert clusters[0].total_length == 20.0 and clusters[1].total_length == 10.0
    assert abs(structural[0] @ structural[1]) < 1e-12

    # A segment 20 degrees off neither joins (> 10) nor seeds (<= 30).
    tilted = _seg3d(
        (0, 0, 0), (5 * np.cos(np.radians(20)), 5 * np.sin(np.radians(20)), 0), seg_id=1
    )
    clusters, unclustered, _ = cluster_plane_lines([_seg3d((0, 0, 0), (10, 0, 0)), tilted])
    assert len(clusters) == 1 and unclustered == [1]

    # Plane rejection arithmetic: 10 + 5 < 0.3 * 60 drops the plane; a plane
    # whose dominant cluster carries all its length is kept.
    c1 = OrientationCluster(referring_id=0, direction=X, member_ids=[0], total_length=10.0)
    c2 = OrientationCluster(referring_id=1, direction=Y, member_ids=[1], total_length=5.0)
    assert plane_is_outlier([c1, c2], total_length=60.0) is True
    assert plane_is_outlier([c1], total_length=10.0) is False

    # Length tiers: fully structural contour keeps 12 scales, drops 5.
    def ids(segs):
        return sorted(s.id for s in segs)

    twelve = _seg3d((0, 0, 0), (12, 0, 0), contour_id=0, seg_id=0)
    stub = _seg3d((0, 1, 0), (5, 1, 0), contour_id=0, seg_id=1)
    assert ids(reject_outlier_segments([twelve, stub], [X], plane_scale=1.0)) == [0]

    # Half-structural contour uses the 20-scale tier.
    diag = np.array([np.cos(np.radians(45)), np.sin(np.radians(45)), 0.0])
    half_hi = [
        _seg3d((0, 0, 0), 25 * X, contour_id=0, seg_id=0),
        _seg3d((0, 0, 0), 25 * diag, contour_id=0, seg_id=1),
    ]
    assert ids(reject_outlier_segments(half_hi, [X], plane_scale=1.0)) == [0, 1]
    half_lo = [
        _seg3d((0, 0, 0), 18 * X, contour_id=0, seg_id=0),
        _seg3d((0, 0, 0), 18 * diag, contour_id=0, seg_id=1),
    ]
    assert ids(reject_outlier_segments(half_lo, [X], plane_scale=1.0)) == []

    # Merging: overlapping collinear spans fuse to the farthest endpoints.
    scales = {0: 1.0}
    merged = merge_segments(
        [_seg3d((0, 0, 0), (5, 0, 0), seg_id=0), _seg3d((4, 0, 0), (9, 0, 0), seg_id=1)],
        mag=10.0,
        plane_scales=scales,
    )
    assert len(merged) == 1
    assert sorted([tuple(merged[0].a), tuple(merged[0].b)]) == [(0, 0, 0), (9, 0, 0)]

    # Merging: a longitudinal gap above 10 scales blocks the merge.
    apart = merge_segments(
        [_seg3d((0, 0, 0), (5, 0, 0), seg_id=0), _seg3d((16, 0, 0), (20, 0, 0), seg_id=1)],
        mag=10.0,
        plane_scales=scales,
    )
    assert len(apart) == 2

    # Merging: a perpendicular offset above 4 scales blocks the merge.
    offset = merge_segments(
        [_seg3d((0, 0, 0), (10, 0, 0), seg_id=0), _seg3d((0, 5, 0), (10, 5, 0), seg_id=1)],
        mag=100.0,
        plane_scales=scales,
    )
    assert len(offset) == 2


def _staged_decisions(points: np.ndarray) -> dict:
    """Index-level record of every decision the pipeline takes, stage by stage."""
    cloud = PointCloud(points)
    attrs = compute_attributes(cloud, build_index(cloud), k=20)
    regions, labels = grow_regions(cloud, attrs)
    adjacency = find_adjacent_regions(attrs, regions, labels)
    planes, dropped = merge_regions(cloud, attrs, regions, adjacency, labels)
    segments = []
    per_plane = {}
    for plane in planes:
        frame = build_frame(plane, cloud)
        raster = rasterize(plane, frame, cloud)
        segs = []
        for contour in trace_contours(raster.occupancy, plane_id=plane.id):
            for run in split_contour(contour.chain):
                seg2d = fit_segment(run, contour_id=contour.id)
                if seg2d is not None:
                    segs.append(unproject(seg2d, raster, frame, plane.id))
        per_plane[plane.id] = segs
        segments.extend(segs)
    for sid, seg in enumerate(segments):
        seg.id = sid
    diag = cloud.bbox_diagonal
    mag = float(np.linalg.norm(cloud.points[0]))
    if mag <= 0.0 or mag < 1e-6 * diag:
        mag = diag
    rejected = []
    survivors = []
    kept = []
    for plane in planes:
        segs = per_plane[plane.id]
        structural = []
        if segs:
            clusters, _, structural = cluster_plane_lines(segs)
            if plane_is_outlier(clusters, sum(s.length for s in segs)):
                rejected.append(plane.id)
                continue
        kept.append(plane)
        survivors.extend(reject_outlier_segments(segs, structural, plane.scale))
    record = []
    merged = merge_segments(
        survivors, mag, {p.id: p.scale for p in kept}, record=record
    )
    return {
        "labels": labels,
        "regions": tuple(frozenset(r.members.tolist()) for r in regions),
        "planes": tuple((p.id, frozenset(p.members.tolist())) for p in planes),
        "dropped": tuple(dropped),
        "rejected": tuple(rejected),
        "survivors": tuple(s.id for s in survivors),
        "candidates": frozenset((c.target_id, c.candidate_id, c.merged) for c in record),
        "merged_ids": tuple(s.id for s in merged),
    }


def test_scale_invariance_of_decisions():
    scenes = [
        generate_scene("cube", spacing=0.02).cloud.points,
        generate_scene("cube", spacing=0.02, noise=0.2 * 0.02, seed=1).cloud.points,
        generate_scene("two-planes", spacing=0.02).cloud.points,
        generate_scene("room", spacing=0.05).cloud.points,
    ]
    for points in scenes:
        base = _staged_decisions(points)
        for c in (0.01, 1000.0):
            scaled = _staged_decisions(points * c)
            assert np.array_equal(scaled["labels"], base["labels"])
            for key in (
                "regions", "planes", "dropped", "rejected",
                "survivors", "candidates", "merged_ids",
            ):
                assert scaled[key] == base[key], f"{key} changed at c={c}"


def test_projection_round_trip():
    rng = np.random.default_rng(2024)
    checked = 0
    for _ in range(100):
        basis = np.linalg.qr(rng.standard_normal((3, 3)))[0]
        frame = PlaneFrame(
            origin=rng.uniform(-100.0, 100.0, 3),
            v_x=basis[:, 0],
            v_y=basis[:, 1],
            normal=basis[:, 2],
        )
        xy = rng.uniform(-100.0, 100.0, (100, 2))
        back = project_to_plane(frame, plane_to_world(xy, frame))
        err = np.abs(back - xy).max()
        assert err <= 1e-9 * max(1.0, np.abs(xy).max())
        checked += len(xy)
    assert checked == 10_000


def _boundary_set(bitmap: np.ndarray) -> set[tuple[int, int]]:
    p = np.pad(bitmap, 1)
    inner = p[1:-1, 1:-1]
    hole = ~p[:-2, 1:-1] | ~p[2:, 1:-1] | ~p[1:-1, :-2] | ~p[1:-1, 2:]
    vs, us = np.nonzero(inner & hole)
    return set(zip(us.tolist(), vs.tolist()))


def test_contour_boundary_oracle():
    rng = np.random.default_rng(77)
    for trial in range(100):
        h = int(rng.integers(1, 65))
        w = int(rng.integers(1, 65))
        bitmap = rng.random((h, w)) < rng.uniform(0.2, 0.8)
        traced: set[tuple[int, int]] = set()
        for contour in trace_contours(bitmap, min_length=1):
            traced.update(map(tuple, contour.chain.tolist()))
        assert traced == _boundary_set(bitmap), f"trial {trial}"


def test_runtime_and_scaling(facade_million):
    scene_1m, result_1m = facade_million
    assert result_1m.timings.total_s <= 60.0
    sizes = [len(scene_1m.cloud)]
    times = [result_1m.timings.total_s]
    for spacing in (0.01428, 0.0101, 0.00505):
        scene = generate_scene("facade", spacing=spacing)
        result = run_pipeline(scene.cloud)
        sizes.append(len(scene.cloud))
        times.append(result.timings.total_s)
    order = np.argsort(sizes)
    slope = np.polyfit(np.log(np.asarray(sizes, float)[order]), np.log(np.asarray(times)[order]), 1)[0]
    assert slope < 1.5


def test_postprocess_runtime_share(facade_million):
    _, result = facade_million
    assert result.timings.postprocess_s <= 0.1 * result.timings.total_s
