"""Run configuration loaded from JSON. Unknown keys are rejected at every level."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any, Mapping

from .camera import CameraIntrinsics
from .depth_correct import DEFAULT_EPSILON, DEFAULT_GRID, DEFAULT_MIN_DISTANCE
from .errors import ConfigError, InputError
from .simulate import SCENARIOS, NoiseConfig, SceneConfig
from .triangulate import DEFAULT_MAX_ITER, DEFAULT_TOL


@dataclass(frozen=True)
class CorrectorConfig:
    enabled: bool = True
    grid: Mapping[str, list] = field(default_factory=lambda: {k: list(v) for k, v in DEFAULT_GRID.items()})
    k_folds: int = 10
    train_fraction: float = 0.70
    epsilon: float = DEFAULT_EPSILON
    min_distance: float = DEFAULT_MIN_DISTANCE


@dataclass(frozen=True)
class GeolocateConfig:
    min_candidates: int = 3
    max_depth: float | None = None
    tol: float = DEFAULT_TOL
    max_iter: int = DEFAULT_MAX_ITER


@dataclass(frozen=True)
class MeasureConfig:
    mode: str = "nearest"  # or "mean" over all sightings

    def __post_init__(self):
        if self.mode not in ("nearest", "mean"):
            raise ConfigError(f"measure.mode must be 'nearest' or 'mean', got {self.mode!r}")


@dataclass(frozen=True)
class GpsConfig:
    frame_stride: int = 30
    max_control_distance: float = 50.0
    strict_control_points: bool = False


@dataclass(frozen=True)
class EvaluateConfig:
    distance_bins: tuple[float, ...] = (0.0, 10.0, 20.0, 30.0)
    baseline: str = "In_Slow"


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    scenarios: tuple[str, ...] = ("In_Slow",)
    data_dir: str | None = None
    intrinsics: CameraIntrinsics = field(default_factory=CameraIntrinsics)
    scene: SceneConfig = field(default_factory=SceneConfig)
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    gps: GpsConfig = field(default_factory=GpsConfig)
    corrector: CorrectorConfig = field(default_factory=CorrectorConfig)
    geolocate: GeolocateConfig = field(default_factory=GeolocateConfig)
    measure: MeasureConfig = field(default_factory=MeasureConfig)
    evaluate: EvaluateConfig = field(default_factory=EvaluateConfig)

    def __post_init__(self):
        if not self.scenarios:
            raise ConfigError("at least one scenario is required")
        for label in self.scenarios:
            if label not in SCENARIOS:
                raise ConfigError(f"unknown scenario {label!r}; expected one of {sorted(SCENARIOS)}")
        if len(set(self.scenarios)) != len(self.scenarios):
            raise ConfigError("duplicate scenario labels")


_SECTIONS = {
    "intrinsics": CameraIntrinsics,
    "scene": SceneConfig,
    "noise": NoiseConfig,
    "gps": GpsConfig,
    "corrector": CorrectorConfig,
    "geolocate": GeolocateConfig,
    "measure": MeasureConfig,
    "evaluate": EvaluateConfig,
}
_TUPLE_FIELDS = {"scenarios", "origin", "lateral_offset_range", "dem_grade", "gps_systematic_offset", "distance_bins"}


def _build(cls, data: Any, where: str):
    if not isinstance(data, Mapping):
        raise ConfigError(f"{where} must be a JSON object")
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"unknown key(s) in {where}: {unknown}")
    kwargs = {}
    for key, value in data.items():
        if key in _SECTIONS and cls is RunConfig:
            value = _build(_SECTIONS[key], value, key)
        elif key in _TUPLE_FIELDS and isinstance(value, list):
            value = tuple(value)
        kwargs[key] = value
    try:
        return cls(**kwargs)
    except ConfigError:
        raise
    except (InputError, TypeError, ValueError) as exc:
        raise ConfigError(f"invalid {where}: {exc}") from None


def config_from_dict(data: Mapping) -> RunConfig:
    return _build(RunConfig, data, "config")


def load_config(path) -> RunConfig:
    try:
        data = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}: invalid JSON ({exc.msg})") from None
    return config_from_dict(data)


def config_to_dict(cfg: RunConfig) -> dict:
    """Plain-JSON view of a configuration (inverse of :func:`config_from_dict`)."""

    def plain(obj):
        if hasattr(obj, "__dataclass_fields__"):
            out = {}
            for f in fields(obj):
                out[f.name] = plain(getattr(obj, f.name))
            return out
        if isinstance(obj, Mapping):
            return {k: plain(v) for k, v in obj.items()}
        if isinstance(obj, (list, tuple)):
            return [plain(v) for v in obj]
        if isinstance(obj, float) and not math.isfinite(obj):
            return None
        return obj

    return plain(cfg)
