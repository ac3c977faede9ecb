#!/usr/bin/env python3
"""Timing ladder over synthetic scenes of increasing point count.

Runs the full detection pipeline on one scene sampled at a series of
densities, prints a per-size table of stage timings and recall, and fits
the log-log growth exponent of total runtime versus point count. An
exponent near 1 means the pipeline scales linearly at these sizes.
"""

from __future__ import annotations

import argparse
import json
import time

import numpy as np

from cloudlines import PipelineConfig, evaluate, generate_scene, load_config, run_pipeline

CALIBRATION_SPACING = 0.05


def spacing_for(scene: str, target_points: int, noise: float, seed: int) -> float:
    """Sample spacing that puts the scene near the requested point count.

    Point count grows as 1/spacing^2 on planar scenes, so one coarse
    calibration run pins the constant.
    """
    probe = generate_scene(scene, CALIBRATION_SPACING, noise=noise, seed=seed)
    return CALIBRATION_SPACING * (len(probe.cloud) / target_points) ** 0.5


def run_one(scene: str, spacing: float, noise: float, seed: int, cfg: PipelineConfig) -> dict:
    t0 = time.perf_counter()
    sc = generate_scene(scene, spacing, noise=noise, seed=seed)
    gen_s = time.perf_counter() - t0
    result = run_pipeline(sc.cloud, cfg)
    metrics = evaluate(result.segments, sc.edges, tol=5.0 * spacing)
    return {
        "points": len(sc.cloud),
        "spacing": spacing,
        "generate_s": gen_s,
        "segmentation_s": result.timings.segmentation_s,
        "line_detection_s": result.timings.line_detection_s,
        "postprocess_s": result.timings.postprocess_s,
        "total_s": result.timings.total_s,
        "planes": len(result.planes),
        "segments": len(result.segments),
        "recall": metrics["recall"],
        "spurious_ratio": metrics["spurious_ratio"],
    }


def main(argv: list[str] | None = None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--scene", default="facade")
    ap.add_argument(
        "--sizes",
        default="250000,500000,1000000,2000000",
        help="comma-separated approximate point counts",
    )
    ap.add_argument("--noise", type=float, default=0.0)
    ap.add_argument("--seed", type=int, default=1)
    ap.add_argument("--threads", type=int, default=1)
    ap.add_argument("--config", default=None, help="key=value config file")
    ap.add_argument("--output", default=None, help="write the report as JSON")
    args = ap.parse_args(argv)

    cfg = load_config(args.config) if args.config else PipelineConfig()
    cfg.threads = args.threads
    cfg.validate()

    sizes = [int(s) for s in args.sizes.split(",") if s.strip()]
    rows = []
    header = (
        f"{'points':>9} {'spacing':>9} {'gen_s':>7} {'seg_s':>7} "
        f"{'lines_s':>7} {'post_s':>7} {'total_s':>7} {'planes':>6} {'segs':>5} {'recall':>6}"
    )
    print(f"scene={args.scene} noise={args.noise} seed={args.seed} threads={cfg.threads}")
    print(header)
    for target in sizes:
        spacing = spacing_for(args.scene, target, args.noise, args.seed)
        row = run_one(args.scene, spacing, args.noise, args.seed, cfg)
        rows.append(row)
        print(
            f"{row['points']:>9} {row['spacing']:>9.5f} {row['generate_s']:>7.2f} "
            f"{row['segmentation_s']:>7.2f} {row['line_detection_s']:>7.2f} "
            f"{row['postprocess_s']:>7.2f} {row['total_s']:>7.2f} "
            f"{row['planes']:>6} {row['segments']:>5} {row['recall']:>6.3f}"
        )

    slope = None
    if len(rows) >= 2:
        n = np.log([r["points"] for r in rows])
        t = np.log([r["total_s"] for r in rows])
        slope = float(np.polyfit(n, t, 1)[0])
        print(f"log-log slope of total_s vs points: {slope:.3f}")

    if args.output:
        report = {
            "scene": args.scene,
            "noise": args.noise,
            "seed": args.seed,
            "threads": cfg.threads,
            "runs": rows,
            "loglog_slope": slope,
        }
        with open(args.output, "w") as fh:
            json.dump(report, fh, indent=1)
        print(f"report -> {args.output}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
