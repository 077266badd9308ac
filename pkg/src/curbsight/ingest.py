"""Readers and canonical writers for the on-disk formats, plus track preprocessing.

Formats
-------
observations CSV
    object_id, frame_id, u, v, pixel_height, pixel_width, depth1, depth2, depth3,
    crown_pixel_width (optional column; empty for objects without a crown)
track CSV
    frame_id, timestamp_s, lat, lon, azimuth_deg (lat/lon empty for frames
    without GPS; azimuth empty when it must be derived from the motion)
control points CSV
    observed_lat, observed_lon, true_lat, true_lon
distances CSV
    object_id, frame_id, ground_distance_m
DEM
    ESRI ASCII grid in geographic coordinates (cellsize in degrees)
ground truth
    GeoJSON FeatureCollection of Points; properties object_id, kind,
    height_m, width_m, crown_width_m, base_elevation_m
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .camera import PixelMeasurement
from .errors import (
    ControlPointError,
    InputError,
    InvalidInputError,
    NoUsableFramesError,
    OutOfCoverageError,
    ParseError,
)
from .geodesy import GeoPoint, LocalXY, from_local_xy, haversine_distance, to_local_xy
from .triangulate import CameraPose, normalize_degrees

log = logging.getLogger(__name__)

OBSERVATION_COLUMNS = (
    "object_id", "frame_id", "u", "v", "pixel_height", "pixel_width",
    "depth1", "depth2", "depth3", "crown_pixel_width",
)
TRACK_COLUMNS = ("frame_id", "timestamp_s", "lat", "lon", "azimuth_deg")
CONTROL_COLUMNS = ("observed_lat", "observed_lon", "true_lat", "true_lon")
DISTANCE_COLUMNS = ("object_id", "frame_id", "ground_distance_m")
OBJECT_KINDS = ("tree", "pole", "other")


@dataclass(frozen=True)
class Observation:
    object_id: str
    frame_id: int
    pixel: PixelMeasurement
    depth_samples: tuple[float, ...]

    def __post_init__(self):
        if len(self.depth_samples) != 3:
            raise InvalidInputError(f"expected 3 depth samples, got {len(self.depth_samples)}")
        if not all(math.isfinite(d) and d > 0 for d in self.depth_samples):
            raise InvalidInputError("depth samples must be finite and positive")


@dataclass(frozen=True)
class Track:
    poses: tuple[CameraPose, ...]
    speed_class: str | None = None
    mount: str | None = None

    def by_frame(self) -> dict[int, CameraPose]:
        return {p.frame_id: p for p in self.poses}

    def tagged(self) -> list[CameraPose]:
        return [p for p in self.poses if p.position is not None]


@dataclass(frozen=True)
class SceneObject:
    object_id: str
    kind: str
    location: GeoPoint
    height: float
    width: float
    crown_width: float | None = None
    base_elevation: float = 0.0

    def __post_init__(self):
        if self.kind not in OBJECT_KINDS:
            raise InvalidInputError(f"unknown object kind {self.kind!r}")
        if not self.height > 0:
            raise InvalidInputError(f"object {self.object_id}: height must be positive")
        if (self.crown_width is not None) != (self.kind == "tree"):
            raise InvalidInputError(f"object {self.object_id}: crown width is required for trees only")


@dataclass(frozen=True, eq=False)
class DemGrid:
    """Elevation raster. Row 0 is the northernmost row."""

    xll: float  # longitude of the lower-left corner
    yll: float  # latitude of the lower-left corner
    cellsize: float  # degrees
    values: np.ndarray = field(repr=False)
    nodata: float = -9999.0

    def __post_init__(self):
        if self.values.ndim != 2 or min(self.values.shape) < 1:
            raise InvalidInputError("DEM needs at least one row and one column")
        if not self.cellsize > 0:
            raise InvalidInputError("DEM cellsize must be positive")

    def __eq__(self, other):
        if not isinstance(other, DemGrid):
            return NotImplemented
        return (self.xll, self.yll, self.cellsize, self.nodata) == (
            other.xll, other.yll, other.cellsize, other.nodata
        ) and np.array_equal(self.values, other.values)

    __hash__ = None  # ndarray payload

    @property
    def nrows(self) -> int:
        return self.values.shape[0]

    @property
    def ncols(self) -> int:
        return self.values.shape[1]

    @property
    def origin(self) -> GeoPoint:
        return GeoPoint(self.yll, self.xll)

    def contains(self, point: GeoPoint) -> bool:
        return (
            self.xll <= point.lon <= self.xll + self.ncols * self.cellsize
            and self.yll <= point.lat <= self.yll + self.nrows * self.cellsize
        )


# ---------------------------------------------------------------- parsing helpers


def _num(row: dict, name: str, path, line: int, *, optional: bool = False, integer: bool = False):
    raw = row.get(name)
    if raw is None or raw.strip() == "":
        if optional:
            return None
        raise ParseError(path, line, name, "missing value")
    try:
        value = int(raw) if integer else float(raw)
    except ValueError:
        raise ParseError(path, line, name, f"not a number: {raw!r}") from None
    if not integer and not math.isfinite(value):
        raise ParseError(path, line, name, f"non-finite value {raw!r}")
    return value


def _read_rows(path, required: Sequence[str]) -> Iterable[tuple[int, dict]]:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ParseError(path, None, None, f"cannot read file: {exc.strerror}") from None
    reader = csv.DictReader(io.StringIO(text))
    if reader.fieldnames is None:
        raise ParseError(path, 1, None, "empty file, header required")
    header = [h.strip() for h in reader.fieldnames]
    reader.fieldnames = header
    missing = [c for c in required if c not in header]
    if missing:
        raise ParseError(path, 1, missing[0], f"header lacks required column(s) {missing}")
    for row in reader:
        line = reader.line_num
        if None in row:
            raise ParseError(path, line, None, "more fields than header columns")
        if any(v is None for v in row.values()):
            raise ParseError(path, line, None, "fewer fields than header columns")
        yield line, row


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    if isinstance(x, np.integer):
        return str(int(x))
    return str(x)


def _write_csv(path, columns: Sequence[str], rows: Iterable[Sequence]) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_fmt(v) for v in row])
    Path(path).write_text(buf.getvalue())


# ---------------------------------------------------------------- observations


def parse_observations(path) -> list[Observation]:
    out = []
    for line, row in _read_rows(path, OBSERVATION_COLUMNS[:6]):
        object_id = (row.get("object_id") or "").strip()
        if not object_id:
            raise ParseError(path, line, "object_id", "missing value")
        depths = []
        for name in ("depth1", "depth2", "depth3"):
            d = _num(row, name, path, line, optional=True)
            if d is None:
                raise ParseError(path, line, name, "observation needs exactly three depth samples")
            if d <= 0:
                raise ParseError(path, line, name, f"depth sample must be positive, got {d}")
            depths.append(d)
        try:
            pixel = PixelMeasurement(
                u=_num(row, "u", path, line),
                v=_num(row, "v", path, line),
                pixel_height=_num(row, "pixel_height", path, line),
                pixel_width=_num(row, "pixel_width", path, line),
                crown_pixel_width=_num(row, "crown_pixel_width", path, line, optional=True),
            )
        except ParseError:
            raise
        except InputError as exc:
            raise ParseError(path, line, None, str(exc)) from None
        out.append(
            Observation(
                object_id=object_id,
                frame_id=_num(row, "frame_id", path, line, integer=True),
                pixel=pixel,
                depth_samples=tuple(depths),
            )
        )
    return out


def write_observations(path, observations: Sequence[Observation]) -> None:
    _write_csv(
        path,
        OBSERVATION_COLUMNS,
        (
            (
                o.object_id, o.frame_id, o.pixel.u, o.pixel.v, o.pixel.pixel_height, o.pixel.pixel_width,
                *o.depth_samples, o.pixel.crown_pixel_width,
            )
            for o in observations
        ),
    )


# ---------------------------------------------------------------- track


def compass_heading(a: GeoPoint, b: GeoPoint) -> float:
    """Heading of the displacement a->b, degrees clockwise from north."""
    d = to_local_xy(b, a)
    return normalize_degrees(math.degrees(math.atan2(d.x, d.y)))


def derive_missing_azimuths(poses: Sequence[CameraPose]) -> list[CameraPose]:
    """Fill absent azimuths from the direction of travel, flagging them as derived."""
    tagged = [i for i, p in enumerate(poses) if p.position is not None]
    out = list(poses)
    for rank, i in enumerate(tagged):
        pose = poses[i]
        if pose.azimuth is not None:
            continue
        heading = None
        for j in tagged[rank + 1:]:
            if poses[j].position != pose.position:
                heading = compass_heading(pose.position, poses[j].position)
                break
        if heading is None:
            for j in reversed(tagged[:rank]):
                if poses[j].position != pose.position:
                    heading = compass_heading(poses[j].position, pose.position)
                    break
        if heading is not None:
            out[i] = replace(pose, azimuth=heading, azimuth_derived=True)
    return out


def parse_track(path, speed_class: str | None = None, mount: str | None = None) -> Track:
    poses = []
    last_ts = -math.inf
    seen = set()
    for line, row in _read_rows(path, TRACK_COLUMNS[:2]):
        frame_id = _num(row, "frame_id", path, line, integer=True)
        if frame_id in seen:
            raise ParseError(path, line, "frame_id", f"duplicate frame {frame_id}")
        seen.add(frame_id)
        ts = _num(row, "timestamp_s", path, line)
        if ts < last_ts:
            raise ParseError(path, line, "timestamp_s", "timestamps must be non-decreasing")
        last_ts = ts
        lat = _num(row, "lat", path, line, optional=True)
        lon = _num(row, "lon", path, line, optional=True)
        if (lat is None) != (lon is None):
            raise ParseError(path, line, "lat" if lat is None else "lon", "lat and lon must both be present or both empty")
        try:
            position = None if lat is None else GeoPoint(lat, lon)
            pose = CameraPose(
                position=position,
                azimuth=_num(row, "azimuth_deg", path, line, optional=True),
                timestamp=ts,
                frame_id=frame_id,
            )
        except ParseError:
            raise
        except InputError as exc:
            raise ParseError(path, line, None, str(exc)) from None
        poses.append(pose)
    return Track(poses=tuple(derive_missing_azimuths(poses)), speed_class=speed_class, mount=mount)


def write_track(path, track: Track) -> None:
    # derived azimuths are written back as blanks so a re-parse derives them again
    _write_csv(
        path,
        TRACK_COLUMNS,
        (
            (
                p.frame_id,
                p.timestamp,
                None if p.position is None else p.position.lat,
                None if p.position is None else p.position.lon,
                None if p.azimuth_derived else p.azimuth,
            )
            for p in track.poses
        ),
    )


def sample_frames(track: Track, stride: int = 30) -> Track:
    """Keep one GPS-tagged frame per ``stride`` frames.

    Within each window [k*stride, (k+1)*stride) the first frame carrying GPS
    metadata is retained; normally that is frame k*stride itself.
    """
    if stride < 1:
        raise InvalidInputError("stride must be >= 1")
    kept = {}
    for pose in track.poses:
        if pose.position is None:
            continue
        window = pose.frame_id // stride
        if window not in kept or pose.frame_id < kept[window].frame_id:
            kept[window] = pose
    if not kept:
        raise NoUsableFramesError("no GPS-tagged frames survive sampling")
    poses = tuple(sorted(kept.values(), key=lambda p: (p.timestamp, p.frame_id)))
    return replace(track, poses=poses)


# ---------------------------------------------------------------- GPS offset


@dataclass(frozen=True)
class OffsetCorrection:
    shift: LocalXY  # meters east/north applied to every pose
    residuals: tuple[LocalXY, ...]  # per control pair, (true - observed) - shift
    reference: GeoPoint


def parse_control_points(path) -> list[tuple[GeoPoint, GeoPoint]]:
    pairs = []
    for line, row in _read_rows(path, CONTROL_COLUMNS):
        try:
            observed = GeoPoint(_num(row, "observed_lat", path, line), _num(row, "observed_lon", path, line))
            true = GeoPoint(_num(row, "true_lat", path, line), _num(row, "true_lon", path, line))
        except ParseError:
            raise
        except InputError as exc:
            raise ParseError(path, line, None, str(exc)) from None
        pairs.append((observed, true))
    return pairs


def write_control_points(path, pairs: Sequence[tuple[GeoPoint, GeoPoint]]) -> None:
    _write_csv(path, CONTROL_COLUMNS, ((o.lat, o.lon, t.lat, t.lon) for o, t in pairs))


def correct_gps_offset(
    track: Track,
    control_pairs: Sequence[tuple[GeoPoint, GeoPoint]],
    max_pair_distance: float = 50.0,
    strict: bool = False,
) -> tuple[Track, OffsetCorrection]:
    """Translate every pose by the mean (true - observed) control offset."""
    if not control_pairs:
        raise ControlPointError("at least one control pair is required")
    tagged = track.tagged()
    if not tagged:
        raise NoUsableFramesError("track has no GPS-tagged poses")
    reference = tagged[0].position
    offsets = []
    for observed, true in control_pairs:
        gap = haversine_distance(observed, true)
        if gap > max_pair_distance:
            msg = f"control pair {observed} -> {true} is {gap:.1f} m apart (limit {max_pair_distance} m)"
            if strict:
                raise ControlPointError(msg)
            log.warning("suspicious control point: %s", msg)
        offsets.append(to_local_xy(true, reference) - to_local_xy(observed, reference))
    shift = LocalXY(
        float(np.mean([o.x for o in offsets])),
        float(np.mean([o.y for o in offsets])),
    )
    residuals = tuple(o - shift for o in offsets)
    poses = tuple(
        p if p.position is None else replace(p, position=from_local_xy(to_local_xy(p.position, reference) + shift, reference))
        for p in track.poses
    )
    return replace(track, poses=poses), OffsetCorrection(shift=shift, residuals=residuals, reference=reference)


# ---------------------------------------------------------------- distances


def parse_distances(path) -> dict[tuple[str, int], float]:
    out = {}
    for line, row in _read_rows(path, DISTANCE_COLUMNS):
        key = ((row["object_id"] or "").strip(), _num(row, "frame_id", path, line, integer=True))
        if not key[0]:
            raise ParseError(path, line, "object_id", "missing value")
        d = _num(row, "ground_distance_m", path, line)
        if d <= 0:
            raise ParseError(path, line, "ground_distance_m", "distance must be positive")
        out[key] = d
    return out


def write_distances(path, distances: dict[tuple[str, int], float]) -> None:
    _write_csv(path, DISTANCE_COLUMNS, ((k[0], k[1], v) for k, v in distances.items()))


# ---------------------------------------------------------------- DEM

_DEM_KEYS = ("ncols", "nrows", "xllcorner", "yllcorner", "xllcenter", "yllcenter", "cellsize", "nodata_value")


def parse_dem(path) -> DemGrid:
    path = Path(path)
    try:
        lines = path.read_text().splitlines()
    except OSError as exc:
        raise ParseError(path, None, None, f"cannot read file: {exc.strerror}") from None
    header: dict[str, float] = {}
    i = 0
    while i < len(lines):
        parts = lines[i].split()
        if not parts:
            i += 1
            continue
        key = parts[0].lower()
        if key not in _DEM_KEYS:
            break
        if len(parts) != 2:
            raise ParseError(path, i + 1, parts[0], "header line must be '<key> <value>'")
        try:
            header[key] = float(parts[1])
        except ValueError:
            raise ParseError(path, i + 1, parts[0], f"not a number: {parts[1]!r}") from None
        i += 1
    for key in ("ncols", "nrows", "cellsize"):
        if key not in header:
            raise ParseError(path, None, key, "missing header key")
    ncols, nrows, cs = int(header["ncols"]), int(header["nrows"]), header["cellsize"]
    if ncols < 1 or nrows < 1 or ncols != header["ncols"] or nrows != header["nrows"]:
        raise ParseError(path, None, "ncols/nrows", "grid dimensions must be positive integers")
    if cs <= 0:
        raise ParseError(path, None, "cellsize", "must be positive")
    if "xllcorner" in header:
        xll = header["xllcorner"]
    elif "xllcenter" in header:
        xll = header["xllcenter"] - cs / 2
    else:
        raise ParseError(path, None, "xllcorner", "missing header key")
    if "yllcorner" in header:
        yll = header["yllcorner"]
    elif "yllcenter" in header:
        yll = header["yllcenter"] - cs / 2
    else:
        raise ParseError(path, None, "yllcorner", "missing header key")
    nodata = header.get("nodata_value", -9999.0)

    rows = []
    for j in range(i, len(lines)):
        parts = lines[j].split()
        if not parts:
            continue
        try:
            rows.append([float(v) for v in parts])
        except ValueError:
            raise ParseError(path, j + 1, None, "non-numeric elevation value") from None
        if len(rows[-1]) != ncols:
            raise ParseError(path, j + 1, None, f"expected {ncols} values, got {len(rows[-1])}")
    if len(rows) != nrows:
        raise ParseError(path, None, "nrows", f"header declares {nrows} rows, found {len(rows)}")
    return DemGrid(xll=xll, yll=yll, cellsize=cs, values=np.array(rows, dtype=float), nodata=nodata)


def write_dem(path, dem: DemGrid) -> None:
    lines = [
        f"ncols {dem.ncols}",
        f"nrows {dem.nrows}",
        f"xllcorner {dem.xll!r}",
        f"yllcorner {dem.yll!r}",
        f"cellsize {dem.cellsize!r}",
        f"NODATA_value {dem.nodata!r}",
    ]
    for row in dem.values:
        lines.append(" ".join(repr(float(v)) for v in row))
    Path(path).write_text("\n".join(lines) + "\n")


def sample_dem(dem: DemGrid, point: GeoPoint) -> float | None:
    """Bilinear elevation between cell centers; None when a contributing cell is nodata.

    Between the outermost cell centers and the grid edge the edge cells are
    extended as constants.
    """
    if not dem.contains(point):
        raise OutOfCoverageError(f"{point} outside DEM coverage")
    cx = (point.lon - dem.xll) / dem.cellsize - 0.5
    cy = (dem.yll + dem.nrows * dem.cellsize - point.lat) / dem.cellsize - 0.5
    cx = min(max(cx, 0.0), dem.ncols - 1.0)
    cy = min(max(cy, 0.0), dem.nrows - 1.0)
    c0, r0 = int(math.floor(cx)), int(math.floor(cy))
    c1, r1 = min(c0 + 1, dem.ncols - 1), min(r0 + 1, dem.nrows - 1)
    fx, fy = cx - c0, cy - r0
    total = 0.0
    for r, c, wgt in (
        (r0, c0, (1 - fx) * (1 - fy)),
        (r0, c1, fx * (1 - fy)),
        (r1, c0, (1 - fx) * fy),
        (r1, c1, fx * fy),
    ):
        if wgt == 0.0:
            continue
        v = dem.values[r, c]
        if v == dem.nodata or not math.isfinite(v):
            return None
        total += wgt * v
    return total


# ---------------------------------------------------------------- ground truth


def write_ground_truth(path, objects: Sequence[SceneObject]) -> None:
    features = [
        {
            "type": "Feature",
            "geometry": {"type": "Point", "coordinates": [o.location.lon, o.location.lat]},
            "properties": {
                "object_id": o.object_id,
                "kind": o.kind,
                "height_m": o.height,
                "width_m": o.width,
                "crown_width_m": o.crown_width,
                "base_elevation_m": o.base_elevation,
            },
        }
        for o in objects
    ]
    Path(path).write_text(json.dumps({"type": "FeatureCollection", "features": features}, indent=1) + "\n")


def parse_ground_truth(path) -> list[SceneObject]:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except OSError as exc:
        raise ParseError(path, None, None, f"cannot read file: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ParseError(path, exc.lineno, None, f"invalid JSON: {exc.msg}") from None
    if doc.get("type") != "FeatureCollection":
        raise ParseError(path, None, "type", "expected a FeatureCollection")
    out = []
    for i, feat in enumerate(doc.get("features", [])):
        try:
            lon, lat = feat["geometry"]["coordinates"][:2]
            props = feat["properties"]
            out.append(
                SceneObject(
                    object_id=str(props["object_id"]),
                    kind=props["kind"],
                    location=GeoPoint(float(lat), float(lon)),
                    height=float(props["height_m"]),
                    width=float(props["width_m"]),
                    crown_width=None if props.get("crown_width_m") is None else float(props["crown_width_m"]),
                    base_elevation=float(props.get("base_elevation_m") or 0.0),
                )
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseError(path, None, f"features[{i}]", f"malformed feature: {exc}") from None
    return out
