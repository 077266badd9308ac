"""Ideal pinhole camera: pixel column to view angle, pixel extent to metric size,
and slope correction of heights using terrain elevations.

Lens distortion is ignored.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import (
    ConfigError,
    GeometryInfeasibleError,
    InvalidDistanceError,
    InvalidInputError,
    OutOfBoundsError,
)

# 1/2.8" sensor active area (IMX335 class), used when no sensor size is configured.
DEFAULT_SENSOR_WIDTH_MM = 5.184
DEFAULT_SENSOR_HEIGHT_MM = 3.888
HFOV_TOLERANCE_DEG = 2.0


def hfov_from_sensor(sensor_width: float, focal_length: float) -> float:
    """Horizontal field of view in degrees for a pinhole camera."""
    if focal_length <= 0 or sensor_width < 0:
        raise InvalidInputError("focal length must be positive and sensor width non-negative")
    return math.degrees(2.0 * math.atan(sensor_width / (2.0 * focal_length)))


@dataclass(frozen=True)
class CameraIntrinsics:
    """Sensor geometry. Lengths of focal_length and sensor_* share one unit (mm)."""

    focal_length: float = 3.6
    sensor_width: float = DEFAULT_SENSOR_WIDTH_MM
    sensor_height: float = DEFAULT_SENSOR_HEIGHT_MM
    image_width: int = 3840
    image_height: int = 2160
    hfov: float | None = None
    mount_height: float = 1.2
    hfov_tolerance: float = HFOV_TOLERANCE_DEG

    def __post_init__(self):
        for name in ("focal_length", "sensor_width", "sensor_height", "image_width", "image_height", "mount_height"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise ConfigError(f"intrinsics.{name} must be strictly positive, got {value}")
        derived = hfov_from_sensor(self.sensor_width, self.focal_length)
        if self.hfov is None:
            object.__setattr__(self, "hfov", derived)
        else:
            if not 0.0 < self.hfov < 180.0:
                raise ConfigError(f"intrinsics.hfov must lie in (0, 180), got {self.hfov}")
            if abs(self.hfov - derived) > self.hfov_tolerance:
                raise ConfigError(
                    f"intrinsics.hfov {self.hfov:.3f} deg disagrees with sensor/focal geometry "
                    f"({derived:.3f} deg) by more than {self.hfov_tolerance} deg"
                )

    @property
    def focal_px_x(self) -> float:
        return self.focal_length * self.image_width / self.sensor_width

    @property
    def focal_px_y(self) -> float:
        return self.focal_length * self.image_height / self.sensor_height


@dataclass(frozen=True)
class PixelMeasurement:
    u: float
    v: float
    pixel_height: float
    pixel_width: float
    crown_pixel_width: float | None = None

    def __post_init__(self):
        values = [self.u, self.v, self.pixel_height, self.pixel_width]
        if self.crown_pixel_width is not None:
            values.append(self.crown_pixel_width)
        if not all(math.isfinite(x) for x in values):
            raise InvalidInputError("non-finite pixel measurement")
        if self.pixel_height < 0 or self.pixel_width < 0:
            raise InvalidInputError("pixel extents must be non-negative")
        if self.crown_pixel_width is not None and self.crown_pixel_width < 0:
            raise InvalidInputError("crown pixel width must be non-negative")

    def check_bounds(self, intrinsics: CameraIntrinsics) -> None:
        if not (0 <= self.u < intrinsics.image_width and 0 <= self.v < intrinsics.image_height):
            raise OutOfBoundsError(
                f"pixel ({self.u}, {self.v}) outside {intrinsics.image_width}x{intrinsics.image_height} image"
            )


@dataclass(frozen=True)
class TerrainContext:
    camera_elevation: float
    object_base_elevation: float

    def __post_init__(self):
        if not (math.isfinite(self.camera_elevation) and math.isfinite(self.object_base_elevation)):
            raise InvalidInputError("non-finite elevation")

    @property
    def rise(self) -> float:
        return self.object_base_elevation - self.camera_elevation


def pixel_to_angle(u: float, intrinsics: CameraIntrinsics) -> float:
    """Angle of pixel column ``u`` off the optical axis, degrees, positive to the left."""
    width = intrinsics.image_width
    if not 0 <= u <= width:
        raise OutOfBoundsError(f"u={u} outside [0, {width}]")
    return -((u - width / 2) / width) * intrinsics.hfov


def angle_to_pixel(theta: float, intrinsics: CameraIntrinsics) -> float:
    """Inverse of :func:`pixel_to_angle` (no bounds check)."""
    width = intrinsics.image_width
    return width / 2 - theta * width / intrinsics.hfov


def _metric_extent(pixels: float, distance: float, sensor: float, focal: float, image: int) -> float:
    if not (math.isfinite(distance) and distance > 0):
        raise InvalidDistanceError(f"distance must be positive, got {distance}")
    return pixels * distance * sensor / (focal * image)


def estimate_height(m: PixelMeasurement, distance: float, intrinsics: CameraIntrinsics) -> float:
    return _metric_extent(
        m.pixel_height, distance, intrinsics.sensor_height, intrinsics.focal_length, intrinsics.image_height
    )


def estimate_width(m: PixelMeasurement, distance: float, intrinsics: CameraIntrinsics) -> float:
    return _metric_extent(
        m.pixel_width, distance, intrinsics.sensor_width, intrinsics.focal_length, intrinsics.image_width
    )


def estimate_crown_width(m: PixelMeasurement, distance: float, intrinsics: CameraIntrinsics) -> float | None:
    if m.crown_pixel_width is None:
        return None
    return _metric_extent(
        m.crown_pixel_width, distance, intrinsics.sensor_width, intrinsics.focal_length, intrinsics.image_width
    )


def terrain_corrected_height(height: float, distance: float, ctx: TerrainContext) -> float:
    """Add the slope term H*tan(beta) for an object base above/below the camera ground.

    ``distance`` is the slant camera-object range; the horizontal leg is
    recovered from it and the elevation difference.
    """
    rise = ctx.rise
    if rise == 0.0:
        return height
    if not distance > abs(rise):
        raise GeometryInfeasibleError(
            f"range {distance} m does not exceed elevation difference {abs(rise)} m"
        )
    horizontal = math.sqrt(distance**2 - rise**2)
    slope = math.atan(rise / horizontal)
    return height + height * math.tan(slope)
