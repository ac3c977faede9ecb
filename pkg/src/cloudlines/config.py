"""Pipeline configuration: one flat dataclass, a key=value file loader, and
validation of the angular and multiplier ranges."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from pathlib import Path


class ConfigError(ValueError):
    pass


@dataclass
class PipelineConfig:
    # attribute estimation
    k: int = 20
    # region growing
    theta_deg: float = 15.0
    th_o_mult: float = 1.0
    th_p_mult: float = 50.0
    # plane building
    min_region_size: int = 30
    plane_min_extent_ratio: float = 0.01
    plane_scale_mult: float = 1.0
    max_raster_dim: int = 16384
    # 2D line extraction
    min_contour_px: int = 40
    split_tol_px: float = 2.0
    min_run_px: int = 8
    # postprocessing
    cluster_join_deg: float = 10.0
    cluster_new_deg: float = 30.0
    plane_reject_ratio: float = 0.3
    latitude_bin_deg: float = 6.0
    merge_dist_ratio: float = 0.1
    merge_perp_mult: float = 4.0
    merge_gap_mult: float = 10.0
    postprocess_enabled: bool = True
    # execution
    threads: int = 1

    def validate(self) -> "PipelineConfig":
        if self.k < 3:
            raise ConfigError(f"k must be >= 3, got {self.k}")
        for name in ("theta_deg", "cluster_join_deg", "cluster_new_deg", "latitude_bin_deg"):
            v = getattr(self, name)
            if not 0.0 < v < 90.0:
                raise ConfigError(f"{name} must be in (0, 90), got {v}")
        if self.cluster_join_deg > self.cluster_new_deg:
            raise ConfigError("cluster_join_deg must not exceed cluster_new_deg")
        for name in (
            "th_o_mult", "th_p_mult", "plane_scale_mult", "split_tol_px",
            "merge_dist_ratio", "merge_perp_mult", "merge_gap_mult", "plane_reject_ratio",
        ):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")
        for name in ("min_region_size", "min_contour_px", "min_run_px", "max_raster_dim"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")
        if not 0.0 < self.plane_min_extent_ratio < 1.0:
            raise ConfigError("plane_min_extent_ratio must be in (0, 1)")
        if self.threads < 1:
            raise ConfigError(f"threads must be >= 1, got {self.threads}")
        return self


_FIELDS = {f.name: f.type for f in dataclasses.fields(PipelineConfig)}


def _parse_value(name: str, raw: str):
    typ = _FIELDS[name]
    raw = raw.strip()
    if typ == "bool":
        if raw.lower() in ("1", "true", "yes", "on"):
            return True
        if raw.lower() in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"{name}: expected a boolean, got {raw!r}")
    try:
        return int(raw) if typ == "int" else float(raw)
    except ValueError:
        raise ConfigError(f"{name}: expected a number, got {raw!r}") from None


def load_config(path: str | Path, overrides: dict | None = None) -> PipelineConfig:
    """Read key=value lines ('#' comments allowed), then apply overrides."""
    values: dict = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}, line {lineno}: expected key=value, got {line!r}")
        key, raw = (part.strip() for part in line.split("=", 1))
        if key not in _FIELDS:
            raise ConfigError(f"{path}, line {lineno}: unknown option {key!r}")
        values[key] = _parse_value(key, raw)
    if overrides:
        values.update(overrides)
    return PipelineConfig(**values).validate()
