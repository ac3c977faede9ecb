"""Cloud readers/writers (XYZ, PTS, PLY) and result serialization (JSON, OBJ, CSV).

XYZ and PTS are whitespace-separated rows whose first three columns are
x y z; any further columns ride along untouched. PLY supports ascii and
binary_little_endian with float or double vertex coordinates.
"""

from __future__ import annotations

import csv
import json
import warnings
from pathlib import Path

import numpy as np

from .cloud import PointCloud


class CloudFormatError(ValueError):
    pass


_PLY_DTYPES = {
    "float": "<f4", "float32": "<f4",
    "double": "<f8", "float64": "<f8",
    "char": "i1", "int8": "i1",
    "uchar": "u1", "uint8": "u1",
    "short": "<i2", "int16": "<i2",
    "ushort": "<u2", "uint16": "<u2",
    "int": "<i4", "int32": "<i4",
    "uint": "<u4", "uint32": "<u4",
}


def _detect_format(path: Path, fmt: str) -> str:
    if fmt != "auto":
        return fmt
    suffix = path.suffix.lower().lstrip(".")
    return suffix if suffix in ("xyz", "pts", "ply") else "xyz"


def load_cloud(path: str | Path, fmt: str = "auto") -> PointCloud:
    """Read a point cloud; malformed text rows are reported with their line number."""
    path = Path(path)
    if not path.exists():
        raise CloudFormatError(f"{path}: no such file")
    fmt = _detect_format(path, fmt)
    if fmt == "ply":
        return _load_ply(path)
    if fmt in ("xyz", "pts"):
        return _load_xyz(path)
    raise CloudFormatError(f"unknown format {fmt!r}; expected xyz, pts or ply")


def _load_xyz(path: Path) -> PointCloud:
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", UserWarning)
            data = np.loadtxt(path, dtype=np.float64, ndmin=2)
    except ValueError:
        return _load_xyz_slow(path)
    if data.size == 0:
        raise CloudFormatError(f"{path}: empty input")
    if data.shape[1] < 3:
        bad = _first_short_row(path)
        raise CloudFormatError(f"{path}, line {bad}: expected at least 3 columns")
    extras = data[:, 3:] if data.shape[1] > 3 else None
    return PointCloud(points=data[:, :3], colors=extras)


def _first_short_row(path: Path) -> int:
    for lineno, line in enumerate(path.open(), start=1):
        if line.strip() and len(line.split()) < 3:
            return lineno
    return 1


def _load_xyz_slow(path: Path) -> PointCloud:
    """Line-by-line fallback that pinpoints the first malformed row and keeps
    non-numeric extra columns as opaque strings."""
    pts: list[tuple[float, float, float]] = []
    extras: list[str] = []
    any_extra = False
    for lineno, line in enumerate(path.open(), start=1):
        parts = line.split()
        if not parts:
            continue
        if len(parts) < 3:
            raise CloudFormatError(f"{path}, line {lineno}: expected at least 3 columns, got {len(parts)}")
        try:
            pts.append((float(parts[0]), float(parts[1]), float(parts[2])))
        except ValueError:
            raise CloudFormatError(f"{path}, line {lineno}: could not parse coordinates from {line.strip()!r}") from None
        rest = " ".join(parts[3:])
        any_extra = any_extra or bool(rest)
        extras.append(rest)
    if not pts:
        raise CloudFormatError(f"{path}: empty input")
    return PointCloud(
        points=np.array(pts, dtype=np.float64),
        colors=np.array(extras, dtype=object) if any_extra else None,
    )


def _load_ply(path: Path) -> PointCloud:
    with path.open("rb") as fh:
        magic = fh.readline().strip()
        if magic != b"ply":
            raise CloudFormatError(f"{path}: not a PLY file (missing 'ply' magic)")
        fmt = None
        elements: list[tuple[str, int, list[tuple[str, str]]]] = []  # (name, count, [(type, prop)])
        while True:
            raw = fh.readline()
            if not raw:
                raise CloudFormatError(f"{path}: unterminated PLY header")
            line = raw.decode("ascii", errors="replace").strip()
            if line == "end_header":
                break
            parts = line.split()
            if not parts or parts[0] == "comment":
                continue
            if parts[0] == "format":
                fmt = parts[1]
                if fmt not in ("ascii", "binary_little_endian"):
                    raise CloudFormatError(f"{path}: unsupported PLY format {fmt!r}")
            elif parts[0] == "element":
                elements.append((parts[1], int(parts[2]), []))
            elif parts[0] == "property":
                if not elements:
                    raise CloudFormatError(f"{path}: property before any element")
                if parts[1] == "list":
                    elements[-1][2].append(("list", parts[-1]))
                else:
                    elements[-1][2].append((parts[1], parts[2]))
        vertex = next((e for e in elements if e[0] == "vertex"), None)
        if vertex is None:
            raise CloudFormatError(f"{path}: no vertex element")
        _, count, props = vertex
        names = [p[1] for p in props]
        for typ, name in props:
            if typ == "list":
                raise CloudFormatError(f"{path}: unsupported list property {name!r} in vertex element")
            if typ not in _PLY_DTYPES:
                raise CloudFormatError(f"{path}: unsupported property type {typ!r} for {name!r}")
        for c in "xyz":
            if c not in names:
                raise CloudFormatError(f"{path}: vertex element lacks property {c!r}")
            typ = props[names.index(c)][0]
            if typ not in ("float", "float32", "double", "float64"):
                raise CloudFormatError(f"{path}: unsupported property type {typ!r} for {c!r} (need float or double)")
        if count == 0:
            raise CloudFormatError(f"{path}: empty input")

        before = elements[: elements.index(vertex)]
        if fmt == "ascii":
            lines = fh.read().decode("ascii", errors="replace").splitlines()
            rows = [ln.split() for ln in lines if ln.strip()]
            skip = sum(e[1] for e in before)
            rows = rows[skip : skip + count]
            if len(rows) < count:
                raise CloudFormatError(f"{path}: vertex element truncated ({len(rows)} of {count} rows)")
            data = np.empty((count, len(names)))
            for r, row in enumerate(rows):
                if len(row) < len(names):
                    raise CloudFormatError(f"{path}: vertex row {r + 1} has {len(row)} values, expected {len(names)}")
                data[r] = [float(v) for v in row[: len(names)]]
            cols = {name: data[:, i] for i, name in enumerate(names)}
            extras = data[:, [i for i, n in enumerate(names) if n not in ("x", "y", "z")]]
        else:
            for name, n_rows, e_props in before:
                if any(t == "list" for t, _ in e_props):
                    raise CloudFormatError(
                        f"{path}: element {name!r} with a list property precedes vertex data"
                    )
                fh.seek(n_rows * sum(np.dtype(_PLY_DTYPES[t]).itemsize for t, _ in e_props), 1)
            dtype = np.dtype([(name, _PLY_DTYPES[typ]) for typ, name in props])
            buf = fh.read(count * dtype.itemsize)
            if len(buf) < count * dtype.itemsize:
                raise CloudFormatError(f"{path}: vertex element truncated")
            rec = np.frombuffer(buf, dtype=dtype, count=count)
            cols = {name: rec[name].astype(np.float64) for name in names}
            extra_names = [n for n in names if n not in ("x", "y", "z")]
            extras = (
                np.stack([cols[n] for n in extra_names], axis=1) if extra_names else np.empty((count, 0))
            )
        pts = np.stack([cols["x"], cols["y"], cols["z"]], axis=1)
        return PointCloud(points=pts, colors=extras if extras.shape[1] else None)


def save_cloud(cloud: PointCloud, path: str | Path, fmt: str = "auto", ply_binary: bool = True,
               ply_double: bool = True) -> None:
    path = Path(path)
    fmt = _detect_format(path, fmt)
    if fmt in ("xyz", "pts"):
        cols = cloud.points
        if cloud.colors is not None and getattr(cloud.colors, "ndim", 0) == 2:
            cols = np.hstack([cloud.points, np.asarray(cloud.colors, dtype=np.float64)])
        np.savetxt(path, cols, fmt="%.17g")
    elif fmt == "ply":
        typ = "double" if ply_double else "float"
        np_t = "<f8" if ply_double else "<f4"
        header = [
            "ply",
            f"format {'binary_little_endian' if ply_binary else 'ascii'} 1.0",
            f"element vertex {len(cloud)}",
            f"property {typ} x",
            f"property {typ} y",
            f"property {typ} z",
            "end_header",
        ]
        with path.open("wb") as fh:
            fh.write(("\n".join(header) + "\n").encode("ascii"))
            data = cloud.points.astype(np_t)
            if ply_binary:
                fh.write(data.tobytes())
            else:
                fh.write("\n".join(" ".join(f"{v:.17g}" for v in row) for row in data).encode("ascii"))
                fh.write(b"\n")
    else:
        raise CloudFormatError(f"unknown format {fmt!r}")


def result_to_dict(result, include_timings: bool = True) -> dict:
    out = {
        "planes": [
            {
                "id": p.id,
                "normal": [float(v) for v in p.normal],
                "centroid": [float(v) for v in p.centroid],
                "scale": float(p.scale),
                "member_count": int(len(p.members)),
            }
            for p in result.planes
        ],
        "segments": [
            {
                "id": s.id,
                "a": [float(v) for v in s.a],
                "b": [float(v) for v in s.b],
                "plane_id": s.plane_id,
                "contour_id": s.contour_id,
                "length": float(s.length),
            }
            for s in result.segments
        ],
        "stats": result.stats,
    }
    if include_timings:
        out["timings"] = {
            "segmentation_s": result.timings.segmentation_s,
            "line_detection_s": result.timings.line_detection_s,
            "postprocess_s": result.timings.postprocess_s,
            "total_s": result.timings.total_s,
        }
    return out


def save_result(result, path: str | Path, fmt: str = "json") -> None:
    """Write a detection result as json (full), obj (v/l records) or csv."""
    path = Path(path)
    if fmt == "json":
        path.write_text(json.dumps(result_to_dict(result), indent=1) + "\n")
    elif fmt == "obj":
        with path.open("w") as fh:
            for i, s in enumerate(result.segments):
                fh.write(f"v {s.a[0]:.17g} {s.a[1]:.17g} {s.a[2]:.17g}\n")
                fh.write(f"v {s.b[0]:.17g} {s.b[1]:.17g} {s.b[2]:.17g}\n")
                fh.write(f"l {2 * i + 1} {2 * i + 2}\n")
    elif fmt == "csv":
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["x1", "y1", "z1", "x2", "y2", "z2", "plane_id", "length"])
            for s in result.segments:
                w.writerow([*s.a, *s.b, s.plane_id, s.length])
    else:
        raise CloudFormatError(f"unknown result format {fmt!r}; expected json, obj or csv")


def load_result_segments(path: str | Path) -> np.ndarray:
    """(S, 2, 3) endpoints from a JSON result file."""
    data = json.loads(Path(path).read_text())
    segs = data.get("segments", [])
    if not segs:
        return np.zeros((0, 2, 3))
    return np.array([[s["a"], s["b"]] for s in segs], dtype=np.float64)


def save_truth(edges: np.ndarray, path: str | Path) -> None:
    edges = np.asarray(edges, dtype=np.float64).reshape(-1, 2, 3)
    Path(path).write_text(json.dumps({"edges": edges.tolist()}, indent=1) + "\n")


def load_truth(path: str | Path) -> np.ndarray:
    data = json.loads(Path(path).read_text())
    if "edges" not in data:
        raise CloudFormatError(f"{path}: truth file lacks an 'edges' array")
    return np.asarray(data["edges"], dtype=np.float64).reshape(-1, 2, 3)
