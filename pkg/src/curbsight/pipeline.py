"""Stage functions shared by the CLI and the test-suite.

Each stage works on in-memory records; the file-name constants and the
``write_*``/``parse_*``/``load_*`` helpers define the on-disk artifacts passed
between CLI subcommands.
"""

from __future__ import annotations

import json
import logging
import math
from collections import defaultdict
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from . import camera
from .camera import CameraIntrinsics, TerrainContext
from .config import RunConfig
from .depth_correct import (
    CorrectionModel,
    CvReport,
    TrainingSample,
    extract_features,
    grid_search_cv,
    split_by_frame,
    variance_weight,
)
from .errors import (
    GeometryInfeasibleError,
    InputError,
    InsufficientObservationsError,
    InvalidInputError,
    OutOfCoverageError,
    ParseError,
)
from .geodesy import GeoPoint, haversine_distance
from .ingest import (
    DemGrid,
    Observation,
    OffsetCorrection,
    SceneObject,
    Track,
    correct_gps_offset,
    parse_control_points,
    parse_dem,
    parse_distances,
    parse_ground_truth,
    parse_observations,
    parse_track,
    sample_dem,
    sample_frames,
    write_control_points,
    write_dem,
    write_distances,
    write_ground_truth,
    write_observations,
    write_track,
)
from .simulate import SCENARIOS, MOUNT_HEIGHT_M, RenderResult, generate_scene, make_trajectory, render_observations
from .triangulate import CameraPose, GeolocationEstimate, geolocate_object

log = logging.getLogger(__name__)

OBSERVATIONS_FILE = "observations.csv"
TRACK_FILE = "track.csv"
CONTROL_FILE = "control_points.csv"
DISTANCES_FILE = "distances.csv"
DEM_FILE = "dem.asc"
GROUND_TRUTH_FILE = "ground_truth.geojson"
ESTIMATES_FILE = "estimates.geojson"
MEASUREMENTS_FILE = "measurements.json"
MODEL_FILE = "model.json"
CV_REPORT_FILE = "cv_report.json"
ARTIFACT_VERSION = 1


def dumps(doc) -> str:
    """Canonical JSON text: sorted keys, shortest round-trip floats."""
    return json.dumps(doc, sort_keys=True, indent=1, allow_nan=False) + "\n"


def scenario_intrinsics(intrinsics: CameraIntrinsics, label: str) -> CameraIntrinsics:
    _, mount = SCENARIOS[label]
    return CameraIntrinsics(**{**asdict(intrinsics), "mount_height": MOUNT_HEIGHT_M[mount]})


@dataclass
class Dataset:
    label: str
    observations: list[Observation]
    track: Track  # sampled and offset-corrected
    raw_track: Track
    dem: DemGrid | None = None
    distances: dict[tuple[str, int], float] | None = None
    ground_truth: list[SceneObject] | None = None
    offset: OffsetCorrection | None = None

    def sightings(self) -> dict[str, list[tuple[Observation, CameraPose]]]:
        """Observations joined to their poses, grouped by object in frame order."""
        poses = self.track.by_frame()
        raw_frames = {p.frame_id for p in self.raw_track.poses}
        out: dict[str, list] = defaultdict(list)
        for obs in self.observations:
            pose = poses.get(obs.frame_id)
            if pose is None:
                if obs.frame_id not in raw_frames:
                    raise InvalidInputError(
                        f"{self.label}: observation of {obs.object_id} refers to unknown frame {obs.frame_id}"
                    )
                log.debug("%s: frame %s dropped by sampling", self.label, obs.frame_id)
                continue
            if pose.azimuth is None:
                raise InvalidInputError(f"{self.label}: frame {obs.frame_id} has no azimuth")
            out[obs.object_id].append((obs, pose))
        for rows in out.values():
            rows.sort(key=lambda r: (r[1].timestamp, r[1].frame_id))
        return dict(sorted(out.items()))


def prepare_dataset(
    label: str,
    observations: list[Observation],
    raw_track: Track,
    cfg: RunConfig,
    control_pairs=None,
    dem: DemGrid | None = None,
    distances=None,
    ground_truth=None,
) -> Dataset:
    track = sample_frames(raw_track, cfg.gps.frame_stride)
    offset = None
    if control_pairs:
        track, offset = correct_gps_offset(
            track,
            control_pairs,
            max_pair_distance=cfg.gps.max_control_distance,
            strict=cfg.gps.strict_control_points,
        )
    return Dataset(
        label=label,
        observations=list(observations),
        track=track,
        raw_track=raw_track,
        dem=dem,
        distances=distances,
        ground_truth=ground_truth,
        offset=offset,
    )


def dataset_from_render(label: str, render: RenderResult, dem: DemGrid, cfg: RunConfig) -> Dataset:
    return prepare_dataset(
        label,
        render.observations,
        render.track,
        cfg,
        control_pairs=render.control_pairs,
        dem=dem,
        distances=render.distances,
        ground_truth=render.ground_truth,
    )


def simulate_renders(cfg: RunConfig, seed: int | None = None) -> tuple[object, dict[str, RenderResult]]:
    """One scene, one rendering per configured scenario, all over the same objects."""
    seed = cfg.seed if seed is None else seed
    scene = generate_scene(cfg.scene, seed, speed_class=None)
    noise = replace(cfg.noise, seed=seed)
    renders = {}
    for label in cfg.scenarios:
        speed, mount = SCENARIOS[label]
        trajectory = make_trajectory(scene, speed, mount)
        stream = list(SCENARIOS).index(label)
        renders[label] = render_observations(scene, cfg.intrinsics, noise, trajectory, stream=stream)
    return scene, renders


def simulate_datasets(cfg: RunConfig, seed: int | None = None) -> dict[str, Dataset]:
    scene, renders = simulate_renders(cfg, seed)
    return {label: dataset_from_render(label, r, scene.dem, cfg) for label, r in renders.items()}


# ---------------------------------------------------------------- files


def write_dataset(directory, render: RenderResult, dem: DemGrid) -> None:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    write_observations(d / OBSERVATIONS_FILE, render.observations)
    write_track(d / TRACK_FILE, render.track)
    write_control_points(d / CONTROL_FILE, render.control_pairs)
    write_distances(d / DISTANCES_FILE, render.distances)
    write_dem(d / DEM_FILE, dem)
    write_ground_truth(d / GROUND_TRUTH_FILE, render.ground_truth)


def load_dataset(directory, label: str, cfg: RunConfig) -> Dataset:
    d = Path(directory)
    if not (d / OBSERVATIONS_FILE).exists() or not (d / TRACK_FILE).exists():
        raise ParseError(d, None, None, f"dataset needs {OBSERVATIONS_FILE} and {TRACK_FILE}")
    speed, mount = SCENARIOS[label]
    optional = {
        "control_pairs": (CONTROL_FILE, parse_control_points),
        "dem": (DEM_FILE, parse_dem),
        "distances": (DISTANCES_FILE, parse_distances),
        "ground_truth": (GROUND_TRUTH_FILE, parse_ground_truth),
    }
    loaded = {k: parser(d / name) if (d / name).exists() else None for k, (name, parser) in optional.items()}
    return prepare_dataset(
        label,
        parse_observations(d / OBSERVATIONS_FILE),
        parse_track(d / TRACK_FILE, speed_class=speed, mount=mount),
        cfg,
        **loaded,
    )


# ---------------------------------------------------------------- training


def training_samples(dataset: Dataset, intrinsics: CameraIntrinsics, epsilon: float) -> list[TrainingSample]:
    """Samples for every sighting with a known ground distance; frames keyed by (label, frame_id)."""
    if not dataset.distances:
        return []
    samples = []
    for object_id, rows in dataset.sightings().items():
        for obs, pose in rows:
            target = dataset.distances.get((object_id, obs.frame_id))
            if target is None:
                continue
            samples.append(
                TrainingSample(
                    features=extract_features(obs, pose, intrinsics),
                    ground_distance=target,
                    weight=variance_weight(obs.depth_samples, epsilon),
                    frame_id=(dataset.label, obs.frame_id),
                )
            )
    return samples


def training_split(datasets: Sequence[Dataset], cfg: RunConfig, seed: int | None = None):
    """Pooled training samples split by frame into (train, test)."""
    seed = cfg.seed if seed is None else seed
    samples = []
    for ds in datasets:
        samples.extend(training_samples(ds, scenario_intrinsics(cfg.intrinsics, ds.label), cfg.corrector.epsilon))
    if not samples:
        raise InvalidInputError("no sightings with ground distances to train on")
    return split_by_frame(samples, cfg.corrector.train_fraction, seed)


def train_corrector(datasets: Sequence[Dataset], cfg: RunConfig, seed: int | None = None) -> CvReport:
    seed = cfg.seed if seed is None else seed
    train_set, test_set = training_split(datasets, cfg, seed)
    return grid_search_cv(
        train_set,
        cfg.corrector.grid,
        k=cfg.corrector.k_folds,
        seed=seed,
        test_set=test_set,
        min_distance=cfg.corrector.min_distance,
    )


# ---------------------------------------------------------------- geolocation


def sighting_depths(
    dataset: Dataset, model: CorrectionModel | None, intrinsics: CameraIntrinsics
) -> dict[str, list[tuple[Observation, CameraPose, float]]]:
    """Per object: (observation, pose, depth) with the depth corrected when a model is given."""
    sightings = dataset.sightings()
    flat = [(object_id, obs, pose) for object_id, rows in sightings.items() for obs, pose in rows]
    if model is None:
        depths = [float(np.mean(obs.depth_samples)) for _, obs, _ in flat]
    elif flat:
        X = [extract_features(obs, pose, intrinsics).vector() for _, obs, pose in flat]
        depths = [float(d) for d in model.predict_many(X)]
    else:
        depths = []
    out: dict[str, list] = {object_id: [] for object_id in sightings}
    for (object_id, obs, pose), d in zip(flat, depths):
        out[object_id].append((obs, pose, d))
    return out


@dataclass
class GeolocateResult:
    label: str
    estimates: dict[str, GeolocationEstimate]
    unlocatable: dict[str, str]
    corrected: bool
    depths: dict[str, list[tuple[Observation, CameraPose, float]]] = field(repr=False, default_factory=dict)


def geolocate_dataset(dataset: Dataset, model: CorrectionModel | None, cfg: RunConfig) -> GeolocateResult:
    intrinsics = scenario_intrinsics(cfg.intrinsics, dataset.label)
    depths = sighting_depths(dataset, model, intrinsics)
    estimates = {}
    unlocatable = {}
    gc = cfg.geolocate
    for object_id, rows in depths.items():
        try:
            estimates[object_id] = geolocate_object(
                [(pose, obs.pixel, d) for obs, pose, d in rows],
                intrinsics,
                min_candidates=gc.min_candidates,
                max_depth=gc.max_depth,
                tol=gc.tol,
                max_iter=gc.max_iter,
            )
        except InsufficientObservationsError as exc:
            unlocatable[object_id] = f"insufficient observations: {exc}"
        except InputError as exc:
            unlocatable[object_id] = f"invalid sightings: {exc}"
    return GeolocateResult(dataset.label, estimates, unlocatable, model is not None, depths)


def estimates_document(result: GeolocateResult) -> dict:
    features = []
    for object_id in sorted(result.estimates):
        est = result.estimates[object_id]
        features.append(
            {
                "type": "Feature",
                "geometry": {"type": "Point", "coordinates": [est.location.lon, est.location.lat]},
                "properties": {
                    "object_id": object_id,
                    "n_candidates": est.n_candidates,
                    "dispersion_m": est.dispersion,
                    "converged": est.converged,
                    "reference_lat": est.reference.lat,
                    "reference_lon": est.reference.lon,
                    "source_frames": [c.source_frame for c in est.candidates],
                },
            }
        )
    return {
        "type": "FeatureCollection",
        "version": ARTIFACT_VERSION,
        "scenario": result.label,
        "depth_correction": result.corrected,
        "features": features,
        "unlocatable": [{"object_id": k, "reason": v} for k, v in sorted(result.unlocatable.items())],
    }


@dataclass(frozen=True)
class LocatedObject:
    object_id: str
    location: GeoPoint
    n_candidates: int
    dispersion: float
    converged: bool


def parse_estimates(path) -> tuple[dict[str, LocatedObject], dict[str, str]]:
    try:
        doc = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ParseError(path, None, None, f"cannot read file: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ParseError(path, exc.lineno, None, f"invalid JSON: {exc.msg}") from None
    located = {}
    try:
        for feat in doc["features"]:
            p = feat["properties"]
            lon, lat = feat["geometry"]["coordinates"][:2]
            located[p["object_id"]] = LocatedObject(
                p["object_id"], GeoPoint(lat, lon), int(p["n_candidates"]), float(p["dispersion_m"]), bool(p["converged"])
            )
        unlocatable = {u["object_id"]: u["reason"] for u in doc.get("unlocatable", [])}
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(path, None, None, f"malformed estimates document: {exc}") from None
    return located, unlocatable


def located_from_result(result: GeolocateResult) -> dict[str, LocatedObject]:
    return {
        k: LocatedObject(k, e.location, e.n_candidates, e.dispersion, e.converged) for k, e in result.estimates.items()
    }


# ---------------------------------------------------------------- structural measurement


@dataclass(frozen=True)
class StructuralEstimate:
    object_id: str
    frame_id: int | None  # None when averaged over frames
    distance_m: float
    height_m: float
    height_uncorrected_m: float
    width_m: float
    crown_width_m: float | None
    terrain_corrected: bool
    terrain_note: str
    n_frames: int


def _terrain(dem: DemGrid | None, pose: CameraPose, location: GeoPoint) -> tuple[TerrainContext | None, str]:
    if dem is None:
        return None, "no DEM"
    try:
        cam = sample_dem(dem, pose.position)
        base = sample_dem(dem, location)
    except OutOfCoverageError:
        return None, "out of DEM coverage"
    if cam is None or base is None:
        return None, "DEM nodata"
    return TerrainContext(camera_elevation=cam, object_base_elevation=base), "corrected"


def _measure_one(obs, pose, depth, location, dem, intrinsics):
    height = camera.estimate_height(obs.pixel, depth, intrinsics)
    width = camera.estimate_width(obs.pixel, depth, intrinsics)
    crown = camera.estimate_crown_width(obs.pixel, depth, intrinsics)
    ctx, note = _terrain(dem, pose, location)
    total, corrected = height, False
    if ctx is not None:
        try:
            total = camera.terrain_corrected_height(height, depth, ctx)
            corrected = True
        except GeometryInfeasibleError as exc:
            note = f"terrain correction infeasible: {exc}"
    return height, total, width, crown, corrected, note


def measure_dataset(
    dataset: Dataset,
    located: Mapping[str, LocatedObject],
    depths: Mapping[str, list[tuple[Observation, CameraPose, float]]],
    cfg: RunConfig,
) -> list[StructuralEstimate]:
    """Height (terrain-corrected where the DEM allows), width and crown width per located object."""
    intrinsics = scenario_intrinsics(cfg.intrinsics, dataset.label)
    out = []
    for object_id in sorted(located):
        rows = depths.get(object_id)
        if not rows:
            continue
        location = located[object_id].location
        if cfg.measure.mode == "nearest":
            obs, pose, depth = min(rows, key=lambda r: (r[2], r[1].timestamp, r[1].frame_id))
            h, total, w, c, corrected, note = _measure_one(obs, pose, depth, location, dataset.dem, intrinsics)
            out.append(StructuralEstimate(object_id, obs.frame_id, depth, total, h, w, c, corrected, note, 1))
            continue
        per = [_measure_one(o, p, d, location, dataset.dem, intrinsics) for o, p, d in rows]
        crowns = [m[3] for m in per if m[3] is not None]
        out.append(
            StructuralEstimate(
                object_id=object_id,
                frame_id=None,
                distance_m=float(np.mean([d for _, _, d in rows])),
                height_m=float(np.mean([m[1] for m in per])),
                height_uncorrected_m=float(np.mean([m[0] for m in per])),
                width_m=float(np.mean([m[2] for m in per])),
                crown_width_m=float(np.mean(crowns)) if crowns else None,
                terrain_corrected=all(m[4] for m in per),
                terrain_note=per[0][5] if all(m[4] for m in per) else next(m[5] for m in per if not m[4]),
                n_frames=len(per),
            )
        )
    return out


def measurements_document(label: str, mode: str, items: Sequence[StructuralEstimate]) -> dict:
    return {"version": ARTIFACT_VERSION, "scenario": label, "mode": mode, "objects": [asdict(m) for m in items]}


def parse_measurements(path) -> list[StructuralEstimate]:
    try:
        doc = json.loads(Path(path).read_text())
        return [StructuralEstimate(**m) for m in doc["objects"]]
    except OSError as exc:
        raise ParseError(path, None, None, f"cannot read file: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ParseError(path, exc.lineno, None, f"invalid JSON: {exc.msg}") from None
    except (KeyError, TypeError) as exc:
        raise ParseError(path, None, None, f"malformed measurements document: {exc}") from None


def mean_geolocation_error(dataset: Dataset, result: GeolocateResult) -> float:
    truth = {o.object_id: o.location for o in dataset.ground_truth or []}
    errors = [haversine_distance(e.location, truth[k]) for k, e in result.estimates.items() if k in truth]
    return float(np.mean(errors)) if errors else math.nan
