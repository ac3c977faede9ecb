"""Command-line interface: detect, bench, eval.

Exit codes: 0 success, 1 input/config error, 2 pipeline failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
import time
from pathlib import Path

import numpy as np

from .config import ConfigError, PipelineConfig, load_config
from .io import CloudFormatError, load_cloud, load_result_segments, load_truth, save_cloud, save_result, save_truth
from .pipeline import PipelineStageError, run_pipeline
from .scenes import SCENE_NAMES, evaluate, generate_scene


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cloudlines", description="3D line segment detection in point clouds")
    sub = parser.add_subparsers(dest="command", required=True)

    det = sub.add_parser("detect", help="detect line segments in a point cloud file")
    det.add_argument("--input", required=True, help="point cloud file")
    det.add_argument("--format", default="auto", choices=["auto", "xyz", "pts", "ply"])
    det.add_argument("--output", required=True, help="result file")
    det.add_argument("--output-format", default="json", choices=["json", "obj", "csv"])
    det.add_argument("--config", default=None, help="key=value config file")
    det.add_argument("--threads", type=int, default=None)
    det.add_argument("--no-postprocess", action="store_true")
    det.add_argument("--emit-planes", action="store_true", help="write per-plane details next to the output")
    det.add_argument("--emit-labels", action="store_true", help="write per-point region labels next to the output")
    det.add_argument("--emit-rasters", action="store_true", help="write each plane's raster as a PBM file")

    ben = sub.add_parser("bench", help="run the pipeline on a synthetic scene and score it")
    ben.add_argument("--scene", required=True, choices=list(SCENE_NAMES))
    ben.add_argument("--spacing", type=float, required=True)
    ben.add_argument("--noise", type=float, default=0.0)
    ben.add_argument("--seed", type=int, default=1)
    ben.add_argument("--tol", type=float, default=None, help="evaluation distance gate (default 5 x spacing)")
    ben.add_argument("--config", default=None)
    ben.add_argument("--threads", type=int, default=None)
    ben.add_argument("--no-postprocess", action="store_true")
    ben.add_argument("--output", default=None, help="save the detection result (json)")
    ben.add_argument("--save-cloud", default=None, help="save the generated cloud (xyz/pts/ply)")
    ben.add_argument("--save-truth", default=None, help="save the ground-truth edges (json)")

    ev = sub.add_parser("eval", help="score a result file against ground-truth edges")
    ev.add_argument("--result", required=True)
    ev.add_argument("--truth", required=True)
    ev.add_argument("--tol", type=float, required=True)
    return parser


def _make_config(path: str | None, threads: int | None, no_postprocess: bool) -> PipelineConfig:
    overrides: dict = {}
    if threads is not None:
        overrides["threads"] = threads
    if no_postprocess:
        overrides["postprocess_enabled"] = False
    if path is not None:
        return load_config(path, overrides)
    return dataclasses.replace(PipelineConfig(), **overrides).validate()


def _write_pbm(bitmap: np.ndarray, path: Path) -> None:
    with path.open("w") as fh:
        fh.write(f"P1\n{bitmap.shape[1]} {bitmap.shape[0]}\n")
        for row in bitmap:
            fh.write(" ".join("1" if v else "0" for v in row) + "\n")


def _cmd_detect(args) -> int:
    cfg = _make_config(args.config, args.threads, args.no_postprocess)
    cloud = load_cloud(args.input, fmt=args.format)
    keep_detail = args.emit_planes or args.emit_rasters
    result = run_pipeline(cloud, cfg, keep_detail=keep_detail)
    out = Path(args.output)
    save_result(result, out, fmt=args.output_format)
    stem = out.with_suffix("")
    if args.emit_labels and result.point_labels is not None:
        rows = np.hstack([cloud.points, result.point_labels[:, None].astype(np.float64)])
        np.savetxt(f"{stem}_labels.xyz", rows, fmt="%.17g %.17g %.17g %d")
    if args.emit_planes and result.plane_lines is not None:
        detail = [
            {
                "plane_id": d.plane.id,
                "normal": [float(v) for v in d.plane.normal],
                "centroid": [float(v) for v in d.plane.centroid],
                "scale": float(d.plane.scale),
                "member_count": int(len(d.plane.members)),
                "adjacent": d.plane.adjacent,
                "contours": [
                    {"id": c.id, "pixels": c.length, "is_hole": c.is_hole, "parent": c.parent}
                    for c in d.contours
                ],
                "segments2d": [
                    {
                        "contour_id": s.contour_id,
                        "e0": [float(v) for v in s.e0],
                        "e1": [float(v) for v in s.e1],
                        "inliers": s.inlier_count,
                        "rms": s.rms,
                    }
                    for s in d.segments2d
                ],
            }
            for d in result.plane_lines
        ]
        Path(f"{stem}_planes.json").write_text(json.dumps(detail, indent=1) + "\n")
    if args.emit_rasters and result.plane_lines is not None:
        for d in result.plane_lines:
            if d.raster is not None:
                _write_pbm(d.raster.occupancy, Path(f"{stem}_plane{d.plane.id}.pbm"))
    n_seg = len(result.segments)
    print(f"{args.input}: {len(result.planes)} planes, {n_seg} segments -> {args.output}")
    return 0


def _cmd_bench(args) -> int:
    cfg = _make_config(args.config, args.threads, args.no_postprocess)
    t0 = time.perf_counter()
    scene = generate_scene(args.scene, args.spacing, noise=args.noise, seed=args.seed)
    gen_s = time.perf_counter() - t0
    if args.save_cloud:
        save_cloud(scene.cloud, args.save_cloud)
    if args.save_truth:
        save_truth(scene.edges, args.save_truth)
    result = run_pipeline(scene.cloud, cfg)
    tol = args.tol if args.tol is not None else 5.0 * args.spacing
    metrics = evaluate(result.segments, scene.edges, tol=tol)
    report = {
        "scene": args.scene,
        "points": len(scene.cloud),
        "spacing": args.spacing,
        "noise": args.noise,
        "seed": args.seed,
        "generate_s": round(gen_s, 4),
        "timings": {
            "segmentation_s": round(result.timings.segmentation_s, 4),
            "line_detection_s": round(result.timings.line_detection_s, 4),
            "postprocess_s": round(result.timings.postprocess_s, 4),
            "total_s": round(result.timings.total_s, 4),
        },
        "planes": len(result.planes),
        "segments": len(result.segments),
        "metrics": metrics,
    }
    if args.output:
        save_result(result, args.output, fmt="json")
    print(json.dumps(report, indent=1))
    return 0


def _cmd_eval(args) -> int:
    segments = load_result_segments(args.result)
    edges = load_truth(args.truth)
    metrics = evaluate(segments, edges, tol=args.tol)
    print(json.dumps(metrics, indent=1))
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "detect":
            return _cmd_detect(args)
        if args.command == "bench":
            return _cmd_bench(args)
        return _cmd_eval(args)
    except (CloudFormatError, ConfigError, FileNotFoundError, PermissionError, IsADirectoryError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except PipelineStageError as exc:
        print(f"pipeline error: {exc}", file=sys.stderr)
        return 2


def entry() -> None:
    raise SystemExit(main())
