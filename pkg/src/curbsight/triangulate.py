"""Candidate points from (pose, bearing, range) sightings and their geometric median."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Hashable, Sequence

import numpy as np
from scipy.optimize import minimize

from .camera import CameraIntrinsics, PixelMeasurement, pixel_to_angle
from .errors import InsufficientObservationsError, InvalidDistanceError, InvalidInputError
from .geodesy import GeoPoint, LocalXY, from_local_xy, to_local_xy

DEFAULT_TOL = 1e-6
DEFAULT_MAX_ITER = 1000


def normalize_degrees(angle: float) -> float:
    """Wrap an angle into [0, 360)."""
    wrapped = math.fmod(angle, 360.0)
    if wrapped < 0:
        wrapped += 360.0
    # fmod of a tiny negative number can round up to exactly 360
    return 0.0 if wrapped >= 360.0 else wrapped


@dataclass(frozen=True)
class CameraPose:
    """One sampled frame. ``position`` is None for frames without GPS metadata."""

    position: GeoPoint | None
    azimuth: float | None
    timestamp: float
    frame_id: int
    azimuth_derived: bool = False

    def __post_init__(self):
        if self.azimuth is not None:
            if not math.isfinite(self.azimuth):
                raise InvalidInputError(f"frame {self.frame_id}: non-finite azimuth")
            object.__setattr__(self, "azimuth", normalize_degrees(self.azimuth))
        if not math.isfinite(self.timestamp):
            raise InvalidInputError(f"frame {self.frame_id}: non-finite timestamp")


@dataclass(frozen=True)
class CandidatePoint:
    xy: LocalXY
    source_frame: Hashable
    depth_used: float
    bearing_used: float


@dataclass(frozen=True)
class GeolocationEstimate:
    location: GeoPoint
    n_candidates: int
    dispersion: float
    converged: bool
    reference: GeoPoint
    candidates: tuple[CandidatePoint, ...] = field(default=(), repr=False)


def bearing(pose: CameraPose, theta: float) -> float:
    """Ray direction in degrees counterclockwise from east for a pixel angle ``theta``."""
    if pose.azimuth is None:
        raise InvalidInputError(f"frame {pose.frame_id} has no azimuth")
    return normalize_degrees(90.0 - pose.azimuth + theta)


def candidate_point(pose: CameraPose, theta: float, depth: float, reference: GeoPoint) -> CandidatePoint:
    if not (math.isfinite(depth) and depth > 0):
        raise InvalidDistanceError(f"depth must be positive, got {depth}")
    if pose.position is None:
        raise InvalidInputError(f"frame {pose.frame_id} has no GPS position")
    beta = bearing(pose, theta)
    origin = to_local_xy(pose.position, reference)
    rad = math.radians(beta)
    xy = LocalXY(origin.x + depth * math.cos(rad), origin.y + depth * math.sin(rad))
    return CandidatePoint(xy=xy, source_frame=pose.frame_id, depth_used=depth, bearing_used=beta)


def _as_array(points) -> np.ndarray:
    if isinstance(points, np.ndarray):
        arr = np.asarray(points, dtype=float)
    else:
        arr = np.array([(p.x, p.y) if isinstance(p, LocalXY) else tuple(p) for p in points], dtype=float)
    if arr.size == 0:
        raise InvalidInputError("geometric median of an empty point set")
    arr = arr.reshape(-1, 2)
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError("non-finite point")
    return arr


def median_objective(x: np.ndarray, points: np.ndarray, weights: np.ndarray | None = None) -> float:
    d = np.linalg.norm(points - x, axis=1)
    return float(d.sum() if weights is None else (weights * d).sum())


def _vertex_optimum(pts: np.ndarray, counts: np.ndarray) -> int | None:
    """Index of an input point that is itself a minimizer, if any.

    Point k is optimal iff the pull of all other points, sum w_i (p_i-p_k)/|p_i-p_k|,
    has norm <= w_k.
    """
    diff = pts[None, :, :] - pts[:, None, :]
    # hypot keeps subnormal separations from underflowing to zero
    dist = np.hypot(diff[..., 0], diff[..., 1])
    np.fill_diagonal(dist, np.inf)
    unit = diff / dist[:, :, None]
    pull = np.linalg.norm((unit * counts[None, :, None]).sum(axis=1), axis=1)
    slack = counts - pull
    best = int(np.argmax(slack))
    return best if slack[best] >= 0 else None


def _lbfgsb(pts: np.ndarray, counts: np.ndarray, x0: np.ndarray, tol: float, max_iter: int):
    def fun(x):
        diff = x - pts
        d = np.linalg.norm(diff, axis=1)
        safe = np.where(d > 0, d, 1.0)
        grad = ((counts / safe)[:, None] * diff * (d > 0)[:, None]).sum(axis=0)
        return float((counts * d).sum()), grad

    res = minimize(fun, x0, jac=True, method="L-BFGS-B", options={"maxiter": max_iter, "ftol": 1e-15, "gtol": tol * 1e-3})
    return res.x, bool(res.success)


def geometric_median(points, tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER) -> tuple[LocalXY, bool]:
    """Point minimizing the summed Euclidean distance to ``points``.

    Weiszfeld iterations from the centroid. Minimizers that coincide with an
    input point are detected up front; an iterate that lands exactly on an
    input point hands over to L-BFGS-B.
    """
    x, converged = _geometric_median(_as_array(points), tol, max_iter)
    return LocalXY(float(x[0]), float(x[1])), converged


def _geometric_median(arr: np.ndarray, tol: float, max_iter: int) -> tuple[np.ndarray, bool]:
    uniq, counts = np.unique(arr, axis=0, return_counts=True)
    counts = counts.astype(float)
    if len(uniq) == 1:
        return uniq[0].copy(), True
    if len(uniq) == 2 and counts[0] == counts[1]:
        # the whole segment is optimal; take the midpoint
        return uniq.mean(axis=0), True
    k = _vertex_optimum(uniq, counts)
    if k is not None:
        return uniq[k].copy(), True

    x = (counts[:, None] * uniq).sum(axis=0) / counts.sum()
    f = median_objective(x, uniq, counts)
    for _ in range(max_iter):
        diff = x - uniq
        d = np.linalg.norm(diff, axis=1)
        if np.any(d == 0.0):
            return _lbfgsb(uniq, counts, x + tol, tol, max_iter)
        w = counts / d
        x_new = (w[:, None] * uniq).sum(axis=0) / w.sum()
        f_new = median_objective(x_new, uniq, counts)
        # Newton step on the smooth objective; kept only if it beats Weiszfeld
        u = diff / d[:, None]
        grad = (counts[:, None] * u).sum(axis=0)
        hess = w.sum() * np.eye(2) - np.einsum("i,ij,ik->jk", w, u, u)
        try:
            x_newton = x - np.linalg.solve(hess, grad)
        except np.linalg.LinAlgError:
            x_newton = None
        if x_newton is not None and np.all(np.isfinite(x_newton)):
            f_newton = median_objective(x_newton, uniq, counts)
            if f_newton < f_new:
                x_new, f_new = x_newton, f_newton
        step = float(np.linalg.norm(x_new - x))
        improvement = f - f_new
        x, f = x_new, f_new
        if improvement < tol * 1e-3 and step < tol * 1e-2:
            return x, True
    return x, False


def geolocate_object(
    observations: Sequence[tuple[CameraPose, PixelMeasurement, float]],
    intrinsics: CameraIntrinsics,
    min_candidates: int = 3,
    max_depth: float | None = None,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
) -> GeolocationEstimate:
    """Locate one object from its sightings.

    The local frame is anchored at the earliest observing pose. Sightings
    beyond ``max_depth`` are discarded before the candidate count is checked.
    """
    usable = [o for o in observations if max_depth is None or o[2] <= max_depth]
    if len(usable) < min_candidates:
        raise InsufficientObservationsError(
            f"{len(usable)} usable sightings, at least {min_candidates} required"
        )
    usable.sort(key=lambda o: (o[0].timestamp, o[0].frame_id))
    reference = usable[0][0].position
    if reference is None:
        raise InvalidInputError(f"frame {usable[0][0].frame_id} has no GPS position")

    candidates = tuple(
        candidate_point(pose, pixel_to_angle(pix.u, intrinsics), depth, reference) for pose, pix, depth in usable
    )
    pts = np.array([(c.xy.x, c.xy.y) for c in candidates])
    center, converged = _geometric_median(pts, tol, max_iter)
    dispersion = float(np.linalg.norm(pts - center, axis=1).mean())
    location = from_local_xy(LocalXY(float(center[0]), float(center[1])), reference)
    return GeolocationEstimate(
        location=location,
        n_candidates=len(candidates),
        dispersion=dispersion,
        converged=converged,
        reference=reference,
        candidates=candidates,
    )
