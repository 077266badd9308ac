"""Geographic <-> local tangent-plane conversions and great-circle distance.

The local frame is an equirectangular projection anchored at a reference
point: x grows east, y grows north, both in meters. It is only meant for
small areas (offsets well under a degree).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import DegenerateProjectionError, InvalidInputError

# WGS84 semi-major axis, used for both the projection and haversine.
EARTH_RADIUS_M = 6378137.0


@dataclass(frozen=True)
class GeoPoint:
    lat: float
    lon: float

    def __post_init__(self):
        if not (math.isfinite(self.lat) and math.isfinite(self.lon)):
            raise InvalidInputError(f"non-finite coordinate ({self.lat}, {self.lon})")
        if not -90.0 <= self.lat <= 90.0:
            raise InvalidInputError(f"latitude {self.lat} outside [-90, 90]")
        if not -180.0 <= self.lon <= 180.0:
            raise InvalidInputError(f"longitude {self.lon} outside [-180, 180]")


@dataclass(frozen=True)
class LocalXY:
    x: float
    y: float

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise InvalidInputError(f"non-finite local coordinate ({self.x}, {self.y})")

    def __add__(self, other: LocalXY) -> LocalXY:
        return LocalXY(self.x + other.x, self.y + other.y)

    def __sub__(self, other: LocalXY) -> LocalXY:
        return LocalXY(self.x - other.x, self.y - other.y)

    def norm(self) -> float:
        return math.hypot(self.x, self.y)


def meters_per_degree(radius: float = EARTH_RADIUS_M) -> float:
    return math.pi * radius / 180.0


def to_local_xy(point: GeoPoint, reference: GeoPoint, radius: float = EARTH_RADIUS_M) -> LocalXY:
    """Project ``point`` into the tangent plane anchored at ``reference``."""
    k = meters_per_degree(radius)
    x = (point.lon - reference.lon) * k * math.cos(math.radians(reference.lat))
    y = (point.lat - reference.lat) * k
    return LocalXY(x, y)


def from_local_xy(xy: LocalXY, reference: GeoPoint, radius: float = EARTH_RADIUS_M) -> GeoPoint:
    """Inverse of :func:`to_local_xy`."""
    coslat = math.cos(math.radians(reference.lat))
    if abs(reference.lat) >= 90.0 or coslat < 1e-12:
        raise DegenerateProjectionError("reference latitude is polar; east offset is undefined")
    k = meters_per_degree(radius)
    return GeoPoint(reference.lat + xy.y / k, reference.lon + xy.x / (k * coslat))


def haversine_distance(a: GeoPoint, b: GeoPoint, radius: float = EARTH_RADIUS_M) -> float:
    """Great-circle distance in meters."""
    phi1 = math.radians(a.lat)
    phi2 = math.radians(b.lat)
    dphi = phi2 - phi1
    dlam = math.radians(b.lon - a.lon)
    h = math.sin(dphi / 2) ** 2 + math.cos(phi1) * math.cos(phi2) * math.sin(dlam / 2) ** 2
    # rounding can push h a hair past 1 for antipodal points
    return 2.0 * radius * math.asin(math.sqrt(min(1.0, h)))
