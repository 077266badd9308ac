"""Synthetic roadside scenes with known ground truth.

A road is a circular arc (or a straight line) starting at ``origin``; objects
stand beside it at random lateral offsets and the camera samples poses along
the centerline once per second. Observations are produced by running the
measurement model forward: the pixel column from the linear angle map, pixel
extents from the pinhole relation, and depth readings through a
piecewise-linear underestimation curve.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Mapping

import numpy as np

from .camera import CameraIntrinsics, PixelMeasurement, angle_to_pixel
from .errors import InvalidInputError
from .geodesy import GeoPoint, LocalXY, from_local_xy, to_local_xy
from .ingest import DemGrid, Observation, SceneObject, Track, sample_dem
from .triangulate import CameraPose

FRAMES_PER_SECOND = 30
SPEED_SPACING_M = {"slow": 8.0, "high": 14.0}  # pose spacing at 1 Hz: ~29 and ~50 km/h
MOUNT_HEIGHT_M = {"inside": 1.2, "outside": 0.9}
SCENARIOS = {
    "In_Slow": ("slow", "inside"),
    "In_Speed": ("high", "inside"),
    "Out_Slow": ("slow", "outside"),
    "Out_Speed": ("high", "outside"),
}
SURVEY_CLASS_MIX = {"tree": 38, "pole": 17, "other": 8}

# (height range, width range) in meters per kind; trees also draw a crown width
_SIZE_RANGES = {
    "tree": ((5.0, 18.0), (0.2, 0.8)),
    "pole": ((8.0, 12.0), (0.25, 0.35)),
    "other": ((1.5, 5.0), (0.3, 1.5)),
}
_CROWN_RANGE = (3.0, 10.0)


@dataclass(frozen=True)
class SceneConfig:
    origin: tuple[float, float] = (41.8, -72.25)
    heading_deg: float = 0.0
    curvature_deg_per_100m: float = 0.0
    n_objects: int = 20
    class_mix: Mapping[str, float] = field(default_factory=lambda: dict(SURVEY_CLASS_MIX))
    lateral_offset_range: tuple[float, float] = (2.0, 15.0)
    object_spacing_m: float = 15.0
    spacing_jitter_m: float = 3.0
    lead_in_m: float = 60.0
    lead_out_m: float = 30.0
    dem_base_m: float = 100.0
    dem_grade: tuple[float, float] = (0.0, 0.0)  # rise per meter east, north
    dem_cellsize_deg: float = 1e-4
    max_range_m: float = 50.0

    def __post_init__(self):
        lo, hi = self.lateral_offset_range
        if not 0 < lo <= hi:
            raise InvalidInputError("lateral offset range must be positive and ordered")
        if self.n_objects < 0:
            raise InvalidInputError("n_objects must be non-negative")
        if any(k not in _SIZE_RANGES for k in self.class_mix):
            raise InvalidInputError(f"unknown object kinds in class mix {sorted(self.class_mix)}")


@dataclass(frozen=True)
class NoiseConfig:
    gps_systematic_offset: tuple[float, float] = (0.0, 0.0)  # meters east, north
    gps_jitter_sigma: float = 0.0
    depth_knee: float = 15.0
    depth_compression: float = 1.0
    depth_sample_sigma: float = 0.0
    pixel_jitter_sigma: float = 0.0  # image column of the object, pixels
    size_jitter_sigma: float = 0.0  # pixel height, width and crown width
    azimuth_jitter_sigma: float = 0.0  # degrees, per pose
    depth_range_sigma: float = 0.0  # relative error of each sighting's mean depth
    speed_jitter_scale: Mapping[str, float] = field(default_factory=lambda: {"slow": 1.0, "high": 2.0})
    seed: int = 0

    def __post_init__(self):
        sigmas = (
            self.gps_jitter_sigma,
            self.depth_sample_sigma,
            self.pixel_jitter_sigma,
            self.size_jitter_sigma,
            self.azimuth_jitter_sigma,
            self.depth_range_sigma,
        )
        if min(sigmas) < 0:
            raise InvalidInputError("noise sigmas must be non-negative")
        if not 0 < self.depth_compression <= 1:
            raise InvalidInputError("depth compression must lie in (0, 1]")
        if not self.depth_knee > 0:
            raise InvalidInputError("depth knee must be positive")


# Field-like noise: 4 m systematic GPS offset (removable with one control
# pair), per-fix jitter, annotation jitter that doubles at high speed, and
# heading and depth errors that grow with range. No depth compression, so
# geolocation can be studied apart from the depth corrector.
REALISM_NOISE = NoiseConfig(
    gps_systematic_offset=(2.4, 3.2),
    gps_jitter_sigma=1.5,
    depth_sample_sigma=0.5,
    pixel_jitter_sigma=120.0,
    size_jitter_sigma=10.0,
    azimuth_jitter_sigma=6.0,
    depth_range_sigma=0.1,
)
REALISM_SCENE = SceneConfig(n_objects=sum(SURVEY_CLASS_MIX.values()))


@dataclass(frozen=True)
class Road:
    origin: GeoPoint
    heading_deg: float
    curvature_deg_per_100m: float
    length_m: float

    def point(self, s: float) -> LocalXY:
        """Centerline position at arc length ``s`` in the scene frame (meters from origin)."""
        h0 = math.radians(self.heading_deg)
        c = math.radians(self.curvature_deg_per_100m) / 100.0
        if abs(c) < 1e-12:
            return LocalXY(s * math.sin(h0), s * math.cos(h0))
        return LocalXY((math.cos(h0) - math.cos(h0 + c * s)) / c, (math.sin(h0 + c * s) - math.sin(h0)) / c)

    def heading(self, s: float) -> float:
        return (self.heading_deg + self.curvature_deg_per_100m * s / 100.0) % 360.0

    def geo(self, xy: LocalXY) -> GeoPoint:
        return from_local_xy(xy, self.origin)


@dataclass(frozen=True)
class Trajectory:
    poses: tuple[CameraPose, ...]
    speed_class: str
    mount: str

    def as_track(self) -> Track:
        return Track(poses=self.poses, speed_class=self.speed_class, mount=self.mount)


@dataclass(frozen=True)
class Scene:
    objects: tuple[SceneObject, ...]
    road: Road
    dem: DemGrid
    config: SceneConfig
    trajectory: Trajectory | None = None


def _class_counts(n: int, mix: Mapping[str, float]) -> dict[str, int]:
    """Largest-remainder apportionment of ``n`` objects over the class shares."""
    total = float(sum(mix.values()))
    if n and total <= 0:
        raise InvalidInputError("class mix must have positive weight")
    kinds = sorted(mix)
    exact = {k: n * mix[k] / total for k in kinds}
    counts = {k: int(math.floor(exact[k])) for k in kinds}
    leftover = n - sum(counts.values())
    for k in sorted(kinds, key=lambda k: (-(exact[k] - counts[k]), k))[:leftover]:
        counts[k] += 1
    return counts


def _plane_dem(config: SceneConfig, road: Road, extent: list[LocalXY]) -> DemGrid:
    origin = road.origin
    margin = config.max_range_m + 20.0
    xs = [p.x for p in extent]
    ys = [p.y for p in extent]
    sw = from_local_xy(LocalXY(min(xs) - margin, min(ys) - margin), origin)
    ne = from_local_xy(LocalXY(max(xs) + margin, max(ys) + margin), origin)
    cs = config.dem_cellsize_deg
    ncols = int(math.ceil((ne.lon - sw.lon) / cs))
    nrows = int(math.ceil((ne.lat - sw.lat) / cs))
    gx, gy = config.dem_grade
    values = np.empty((nrows, ncols))
    for r in range(nrows):
        lat = sw.lat + (nrows - r - 0.5) * cs
        for c in range(ncols):
            lon = sw.lon + (c + 0.5) * cs
            xy = to_local_xy(GeoPoint(lat, lon), origin)
            values[r, c] = config.dem_base_m + gx * xy.x + gy * xy.y
    return DemGrid(xll=sw.lon, yll=sw.lat, cellsize=cs, values=values)


def generate_scene(
    config: SceneConfig = SceneConfig(),
    seed: int = 0,
    speed_class: str | None = "slow",
    mount: str = "inside",
) -> Scene:
    """Deterministic scene for ``seed``; a trajectory is attached when ``speed_class`` is given."""
    rng = np.random.default_rng([seed, 0x5CE4E])
    origin = GeoPoint(*config.origin)
    counts = _class_counts(config.n_objects, config.class_mix)
    kinds = [k for k in sorted(counts) for _ in range(counts[k])]
    kinds = [kinds[i] for i in rng.permutation(len(kinds))]

    n = config.n_objects
    length = config.lead_in_m + max(n - 1, 0) * config.object_spacing_m + config.lead_out_m
    road = Road(origin, config.heading_deg, config.curvature_deg_per_100m, length)

    placed = []
    for i, kind in enumerate(kinds):
        s = config.lead_in_m + i * config.object_spacing_m + rng.uniform(-1, 1) * config.spacing_jitter_m
        side = 1.0 if rng.random() < 0.5 else -1.0
        lateral = side * rng.uniform(*config.lateral_offset_range)
        h = math.radians(road.heading(s))
        center = road.point(s)
        xy = LocalXY(center.x + lateral * math.cos(h), center.y - lateral * math.sin(h))
        (h_lo, h_hi), (w_lo, w_hi) = _SIZE_RANGES[kind]
        height = float(rng.uniform(h_lo, h_hi))
        width = float(rng.uniform(w_lo, w_hi))
        crown = float(rng.uniform(*_CROWN_RANGE)) if kind == "tree" else None
        placed.append((f"obj{i + 1:03d}", kind, xy, height, width, crown))

    extent = [road.point(0.0), road.point(length)] + [p[2] for p in placed]
    extent += [road.point(s) for s in np.linspace(0.0, length, 9)]
    dem = _plane_dem(config, road, extent)
    objects = []
    for object_id, kind, xy, height, width, crown in placed:
        location = road.geo(xy)
        objects.append(
            SceneObject(
                object_id=object_id,
                kind=kind,
                location=location,
                height=height,
                width=width,
                crown_width=crown,
                base_elevation=float(sample_dem(dem, location)),
            )
        )
    scene = Scene(objects=tuple(objects), road=road, dem=dem, config=config)
    if speed_class is not None:
        scene = replace(scene, trajectory=make_trajectory(scene, speed_class, mount))
    return scene


def make_trajectory(scene: Scene, speed_class: str, mount: str) -> Trajectory:
    if speed_class not in SPEED_SPACING_M:
        raise InvalidInputError(f"unknown speed class {speed_class!r}")
    if mount not in MOUNT_HEIGHT_M:
        raise InvalidInputError(f"unknown mount {mount!r}")
    spacing = SPEED_SPACING_M[speed_class]
    road = scene.road
    poses = []
    n = int(math.floor(road.length_m / spacing)) + 1
    for i in range(n):
        s = i * spacing
        poses.append(
            CameraPose(
                position=road.geo(road.point(s)),
                azimuth=road.heading(s),
                timestamp=float(i),
                frame_id=i * FRAMES_PER_SECOND,
            )
        )
    return Trajectory(poses=tuple(poses), speed_class=speed_class, mount=mount)


def _wrap180(angle: float) -> float:
    a = math.fmod(angle + 180.0, 360.0)
    if a < 0:
        a += 360.0
    return a - 180.0


@dataclass(frozen=True)
class Projection:
    pixel: PixelMeasurement
    distance: float
    theta: float


def project_observation(
    obj: SceneObject,
    pose: CameraPose,
    intrinsics: CameraIntrinsics,
    max_range: float = math.inf,
    camera_ground_elevation: float | None = None,
) -> Projection | None:
    """Exact forward projection of ``obj`` seen from ``pose``; None when not visible.

    Distances and bearings are taken in the tangent plane anchored at the
    pose. The base row ``v`` accounts for camera mount height and, when the
    ground elevation under the camera is given, the terrain rise.
    """
    rel = to_local_xy(obj.location, pose.position)
    distance = rel.norm()
    if distance <= 0 or distance > max_range:
        return None
    theta = _wrap180(math.degrees(math.atan2(rel.y, rel.x)) - (90.0 - pose.azimuth))
    if abs(theta) > intrinsics.hfov / 2:
        return None
    u = angle_to_pixel(theta, intrinsics)
    if not 0 <= u < intrinsics.image_width:
        return None
    drop = intrinsics.mount_height
    if camera_ground_elevation is not None:
        drop -= obj.base_elevation - camera_ground_elevation
    v = intrinsics.image_height / 2 + intrinsics.focal_px_y * drop / distance
    if not 0 <= v < intrinsics.image_height:
        return None
    pixel = PixelMeasurement(
        u=u,
        v=v,
        pixel_height=obj.height * intrinsics.focal_px_y / distance,
        pixel_width=obj.width * intrinsics.focal_px_x / distance,
        crown_pixel_width=None if obj.crown_width is None else obj.crown_width * intrinsics.focal_px_x / distance,
    )
    return Projection(pixel=pixel, distance=distance, theta=theta)


def biased_depth(true_distance: float, noise: NoiseConfig) -> float:
    """Mean raw depth: exact up to the knee, compressed beyond it."""
    if true_distance <= noise.depth_knee:
        return true_distance
    return noise.depth_knee + noise.depth_compression * (true_distance - noise.depth_knee)


def inject_depth_bias(true_distance: float, noise: NoiseConfig, rng: np.random.Generator | None = None) -> tuple[float, float, float]:
    """Three raw depth readings scattered around the biased mean.

    The mean itself carries one shared relative error per sighting, so the
    readings agree with each other more closely than with the truth.
    """
    if not true_distance > 0:
        raise InvalidInputError("true distance must be positive")
    if rng is None:
        rng = np.random.default_rng(noise.seed)
    mean = biased_depth(true_distance, noise)
    z = rng.normal(0.0, 1.0, 4)
    mean *= 1.0 + z[0] * noise.depth_range_sigma
    samples = mean + z[1:] * noise.depth_sample_sigma
    # depth maps never report non-positive ranges
    samples = np.maximum(samples, 0.05)
    return tuple(float(x) for x in samples)


@dataclass
class RenderResult:
    observations: list[Observation]
    track: Track  # poses as reported by the noisy GPS
    ground_truth: list[SceneObject]
    distances: dict[tuple[str, int], float]  # true camera-object range per sighting
    control_pairs: list[tuple[GeoPoint, GeoPoint]]
    true_track: Track


def render_observations(
    scene: Scene,
    intrinsics: CameraIntrinsics,
    noise: NoiseConfig = NoiseConfig(),
    trajectory: Trajectory | None = None,
    stream: int = 0,
) -> RenderResult:
    """Sight every object from every pose and corrupt the readings with ``noise``.

    Each pose draws from its own generator keyed on (seed, stream, pose index),
    so results do not depend on iteration order. One control pair is emitted:
    the first pose as the GPS would report it without jitter, against its true
    position.
    """
    trajectory = trajectory or scene.trajectory
    if trajectory is None:
        raise InvalidInputError("scene has no trajectory")
    intrinsics = replace(intrinsics, mount_height=MOUNT_HEIGHT_M[trajectory.mount])
    jitter_scale = noise.speed_jitter_scale.get(trajectory.speed_class, 1.0)
    pixel_sigma = noise.pixel_jitter_sigma * jitter_scale
    size_sigma = noise.size_jitter_sigma * jitter_scale
    ox, oy = noise.gps_systematic_offset
    max_range = scene.config.max_range_m

    observations = []
    distances = {}
    noisy_poses = []
    for index, pose in enumerate(trajectory.poses):
        rng = np.random.default_rng([noise.seed, stream, index])
        jx, jy = rng.normal(0.0, 1.0, 2) * noise.gps_jitter_sigma
        reported = from_local_xy(LocalXY(ox + jx, oy + jy), pose.position)
        heading_error = rng.normal(0.0, 1.0) * noise.azimuth_jitter_sigma
        noisy_poses.append(replace(pose, position=reported, azimuth=pose.azimuth + heading_error))
        ground = sample_dem(scene.dem, pose.position)
        for obj in scene.objects:
            proj = project_observation(obj, pose, intrinsics, max_range, ground)
            if proj is None:
                continue
            px = proj.pixel
            if pixel_sigma > 0 or size_sigma > 0:
                z = rng.normal(0.0, 1.0, 4)
                du = z[0] * pixel_sigma
                dh, dw, dc = z[1:] * size_sigma
                px = PixelMeasurement(
                    u=float(min(max(px.u + du, 0.0), np.nextafter(intrinsics.image_width, 0))),
                    v=px.v,
                    pixel_height=float(max(px.pixel_height + dh, 0.0)),
                    pixel_width=float(max(px.pixel_width + dw, 0.0)),
                    crown_pixel_width=None if px.crown_pixel_width is None else float(max(px.crown_pixel_width + dc, 0.0)),
                )
            depths = inject_depth_bias(proj.distance, noise, rng)
            observations.append(Observation(obj.object_id, pose.frame_id, px, depths))
            distances[(obj.object_id, pose.frame_id)] = proj.distance

    first = trajectory.poses[0].position
    control = [(from_local_xy(LocalXY(ox, oy), first), first)] if trajectory.poses else []
    track = Track(poses=tuple(noisy_poses), speed_class=trajectory.speed_class, mount=trajectory.mount)
    return RenderResult(
        observations=observations,
        track=track,
        ground_truth=list(scene.objects),
        distances=distances,
        control_pairs=control,
        true_track=trajectory.as_track(),
    )
