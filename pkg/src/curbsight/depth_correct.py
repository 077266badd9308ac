"""Learned correction from raw monocular depth to metric camera-object distance.

The regressor is fit on the square root of the ground distance with
inverse-variance sample weights; predictions are squared back to meters.
Train/test and cross-validation splits are made over frames, never over
individual samples, so one depth image never feeds both sides of a split.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Hashable, Mapping, Sequence

import numpy as np

from .camera import CameraIntrinsics
from .errors import CannotSplitError, IncompleteObservationError, InvalidInputError, ParseError
from .gbrt import BoostedTrees, RegressionTree, fit_boosted
from .ingest import Observation
from .stats import RegressionMetrics, regression_metrics
from .triangulate import CameraPose

MODEL_FORMAT = "curbsight-depth-corrector"
MODEL_VERSION = 1
FEATURE_NAMES = ("raw_depth", "u_norm", "v_norm", "lat", "lon", "azimuth")
DEFAULT_EPSILON = 0.01  # m^2, floor on the per-observation depth variance
DEFAULT_MIN_DISTANCE = 0.5
DEFAULT_GRID = {
    "n_trees": [50, 100, 200],
    "max_depth": [2, 3, 4],
    "learning_rate": [0.05, 0.1, 0.3],
    "min_samples_leaf": [2, 5],
}


@dataclass(frozen=True)
class DepthFeatures:
    raw_depth: float
    u_norm: float
    v_norm: float
    lat: float
    lon: float
    azimuth: float

    def __post_init__(self):
        if not self.raw_depth > 0:
            raise InvalidInputError("raw depth must be positive")
        if not (0.0 <= self.u_norm <= 1.0 and 0.0 <= self.v_norm <= 1.0):
            raise InvalidInputError("normalized pixel coordinates must lie in [0, 1]")

    def vector(self) -> list[float]:
        return [getattr(self, name) for name in FEATURE_NAMES]


@dataclass(frozen=True)
class TrainingSample:
    features: DepthFeatures
    ground_distance: float
    weight: float
    frame_id: Hashable

    def __post_init__(self):
        if not self.ground_distance > 0:
            raise InvalidInputError("ground distance must be positive")
        if not self.weight >= 0:
            raise InvalidInputError("weight must be non-negative")


@dataclass(frozen=True)
class Hyperparams:
    n_trees: int = 100
    max_depth: int = 3
    learning_rate: float = 0.1
    min_samples_leaf: int = 5

    def __post_init__(self):
        if self.n_trees < 0 or self.max_depth < 0 or self.min_samples_leaf < 1:
            raise InvalidInputError(f"invalid hyperparameters {self}")
        if not 0 < self.learning_rate <= 1:
            raise InvalidInputError("learning rate must lie in (0, 1]")


def extract_features(obs: Observation, pose: CameraPose, intrinsics: CameraIntrinsics) -> DepthFeatures:
    if len(obs.depth_samples) != 3:
        raise IncompleteObservationError(f"object {obs.object_id} frame {obs.frame_id}: need 3 depth samples")
    if pose.position is None or pose.azimuth is None:
        raise IncompleteObservationError(f"frame {pose.frame_id} lacks position or azimuth")
    return DepthFeatures(
        raw_depth=float(np.mean(obs.depth_samples)),
        u_norm=obs.pixel.u / intrinsics.image_width,
        v_norm=obs.pixel.v / intrinsics.image_height,
        lat=pose.position.lat,
        lon=pose.position.lon,
        azimuth=pose.azimuth,
    )


def variance_weight(depth_samples: Sequence[float], epsilon: float = DEFAULT_EPSILON) -> float:
    """Inverse of the (n-1) sample variance of the depth readings, floored by ``epsilon``."""
    return 1.0 / (epsilon + float(np.var(depth_samples, ddof=1)))


def normalize_weights(weights) -> np.ndarray:
    w = np.asarray(weights, dtype=float)
    total = w.sum()
    if not total > 0:
        return np.ones_like(w)
    return w / total * w.size


def split_by_frame(samples: Sequence[TrainingSample], train_fraction: float = 0.70, seed: int = 0):
    """Partition frames (not samples) into train and test sets."""
    frames = sorted({s.frame_id for s in samples}, key=repr)
    if len(frames) < 2:
        raise CannotSplitError(f"{len(frames)} distinct frame(s); at least 2 are needed")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(len(frames))
    n_train = min(max(int(round(train_fraction * len(frames))), 1), len(frames) - 1)
    train_frames = {frames[i] for i in perm[:n_train]}
    train = [s for s in samples if s.frame_id in train_frames]
    test = [s for s in samples if s.frame_id not in train_frames]
    return train, test


def frame_folds(samples: Sequence[TrainingSample], k: int, seed: int) -> list[np.ndarray]:
    """Indices of the validation samples of each of ``k`` frame-grouped folds."""
    frames = sorted({s.frame_id for s in samples}, key=repr)
    if k < 2:
        raise InvalidInputError("k must be at least 2")
    if len(frames) < k:
        raise CannotSplitError(f"{len(frames)} frames cannot fill {k} folds")
    rng = np.random.default_rng(seed)
    fold_of = {frames[j]: pos % k for pos, j in enumerate(rng.permutation(len(frames)))}
    assignment = np.array([fold_of[s.frame_id] for s in samples])
    return [np.flatnonzero(assignment == f) for f in range(k)]


def _design(samples: Sequence[TrainingSample]):
    X = np.array([s.features.vector() for s in samples], dtype=float)
    y = np.array([s.ground_distance for s in samples], dtype=float)
    w = np.array([s.weight for s in samples], dtype=float)
    return X, y, w


@dataclass
class CorrectionModel:
    ensemble: BoostedTrees
    hyperparams: Hyperparams
    train_seed: int
    min_distance: float = DEFAULT_MIN_DISTANCE
    train_mae_transformed: float = 0.0
    loss_history: list[float] = field(default_factory=list, repr=False)

    @property
    def base_prediction(self) -> float:
        return self.ensemble.base

    @property
    def trees(self) -> list[RegressionTree]:
        return self.ensemble.trees

    def predict_transformed(self, X) -> np.ndarray:
        return self.ensemble.predict(X)

    def predict_many(self, X) -> np.ndarray:
        t = self.predict_transformed(X)
        return np.maximum(t * t, self.min_distance)

    def predict(self, features: DepthFeatures) -> float:
        return float(self.predict_many([features.vector()])[0])

    def to_dict(self) -> dict:
        return {
            "format": MODEL_FORMAT,
            "version": MODEL_VERSION,
            "transform": "sqrt",
            "feature_names": list(FEATURE_NAMES),
            "base_prediction": self.ensemble.base,
            "learning_rate": self.ensemble.learning_rate,
            "hyperparams": asdict(self.hyperparams),
            "train_seed": self.train_seed,
            "min_distance": self.min_distance,
            "train_mae_transformed": self.train_mae_transformed,
            "trees": [t.to_dict() for t in self.ensemble.trees],
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> CorrectionModel:
        if d.get("format") != MODEL_FORMAT or d.get("version") != MODEL_VERSION:
            raise InvalidInputError(f"unsupported model document {d.get('format')!r} v{d.get('version')!r}")
        if d.get("transform") != "sqrt" or list(d.get("feature_names", [])) != list(FEATURE_NAMES):
            raise InvalidInputError("model was trained with an incompatible transform or feature set")
        ensemble = BoostedTrees(
            base=float(d["base_prediction"]),
            learning_rate=float(d["learning_rate"]),
            trees=[RegressionTree.from_dict(t) for t in d["trees"]],
        )
        return cls(
            ensemble=ensemble,
            hyperparams=Hyperparams(**d["hyperparams"]),
            train_seed=int(d["train_seed"]),
            min_distance=float(d["min_distance"]),
            train_mae_transformed=float(d["train_mae_transformed"]),
        )

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=1) + "\n"

    def save(self, path) -> None:
        Path(path).write_text(self.dumps())

    @classmethod
    def load(cls, path) -> CorrectionModel:
        try:
            return cls.from_dict(json.loads(Path(path).read_text()))
        except json.JSONDecodeError as exc:
            raise ParseError(path, exc.lineno, None, f"invalid JSON: {exc.msg}") from None
        except (KeyError, TypeError) as exc:
            raise ParseError(path, None, None, f"malformed model document: {exc}") from None


def train(
    samples: Sequence[TrainingSample],
    hyperparams: Hyperparams = Hyperparams(),
    seed: int = 0,
    min_distance: float = DEFAULT_MIN_DISTANCE,
) -> CorrectionModel:
    if not samples:
        raise InvalidInputError("empty training set")
    X, y, w = _design(samples)
    target = np.sqrt(y)
    w = normalize_weights(w)
    ensemble, losses = fit_boosted(
        X, target, w,
        n_trees=hyperparams.n_trees,
        max_depth=hyperparams.max_depth,
        learning_rate=hyperparams.learning_rate,
        min_samples_leaf=hyperparams.min_samples_leaf,
    )
    mae = float(np.abs(ensemble.predict(X) - target).mean())
    return CorrectionModel(
        ensemble=ensemble,
        hyperparams=hyperparams,
        train_seed=seed,
        min_distance=min_distance,
        train_mae_transformed=mae,
        loss_history=losses,
    )


def transformed_mae(model: CorrectionModel, samples: Sequence[TrainingSample]) -> float:
    X, y, _ = _design(samples)
    return float(np.abs(model.predict_transformed(X) - np.sqrt(y)).mean())


@dataclass
class TestMetrics:
    transformed: RegressionMetrics
    original: RegressionMetrics
    n: int

    __test__ = False

    def as_dict(self) -> dict:
        return {"n": self.n, "transformed": self.transformed.as_dict(), "original": self.original.as_dict()}


def evaluate_model(model: CorrectionModel, samples: Sequence[TrainingSample]) -> TestMetrics:
    X, y, _ = _design(samples)
    t = model.predict_transformed(X)
    return TestMetrics(
        transformed=regression_metrics(np.sqrt(y), t),
        original=regression_metrics(y, np.maximum(t * t, model.min_distance)),
        n=len(samples),
    )


@dataclass
class CvReport:
    fold_maes: list[float]
    mean_cv_mae: float
    best_hyperparams: Hyperparams
    k: int
    cell_scores: list[tuple[Hyperparams, float]]
    model: CorrectionModel = field(repr=False)
    test_metrics: TestMetrics | None = None
    n_train: int = 0
    n_test: int = 0

    def as_dict(self) -> dict:
        return {
            "k": self.k,
            "fold_maes": self.fold_maes,
            "mean_cv_mae": self.mean_cv_mae,
            "best_hyperparams": asdict(self.best_hyperparams),
            "grid": [{"hyperparams": asdict(h), "mean_cv_mae": _json_float(s)} for h, s in self.cell_scores],
            "train_mae_transformed": self.model.train_mae_transformed,
            "n_train": self.n_train,
            "n_test": self.n_test,
            "test_metrics": None if self.test_metrics is None else self.test_metrics.as_dict(),
        }


def _json_float(x: float):
    return x if math.isfinite(x) else None


def expand_grid(grid: Mapping[str, Sequence]) -> list[Hyperparams]:
    if not grid:
        raise InvalidInputError("hyperparameter grid is empty")
    unknown = set(grid) - set(Hyperparams.__dataclass_fields__)
    if unknown:
        raise InvalidInputError(f"unknown hyperparameters {sorted(unknown)}")
    names = sorted(grid)
    cells = []
    for combo in itertools.product(*(grid[n] for n in names)):
        cells.append(Hyperparams(**dict(zip(names, combo))))
    if not cells:
        raise InvalidInputError("hyperparameter grid has no cells")
    return cells


def cross_validate(samples, hyperparams: Hyperparams, folds: list[np.ndarray], seed: int) -> list[float]:
    maes = []
    for val_idx in folds:
        mask = np.ones(len(samples), dtype=bool)
        mask[val_idx] = False
        fit_set = [s for s, keep in zip(samples, mask) if keep]
        val_set = [samples[i] for i in val_idx]
        model = train(fit_set, hyperparams, seed)
        maes.append(transformed_mae(model, val_set))
    return maes


def grid_search_cv(
    train_set: Sequence[TrainingSample],
    grid: Mapping[str, Sequence] | Sequence[Hyperparams] = DEFAULT_GRID,
    k: int = 10,
    seed: int = 0,
    test_set: Sequence[TrainingSample] | None = None,
    min_distance: float = DEFAULT_MIN_DISTANCE,
) -> CvReport:
    """Pick hyperparameters by frame-grouped k-fold CV on transformed-scale MAE.

    The winner is retrained on the whole training set and, if given, scored on
    ``test_set``. A cell whose folds fail is scored +inf rather than aborting.
    Cells are evaluated in canonical order; ties keep the earlier cell.
    """
    cells = list(grid) if not isinstance(grid, Mapping) else expand_grid(grid)
    if not cells:
        raise InvalidInputError("hyperparameter grid is empty")
    folds = frame_folds(train_set, k, seed)
    best = None
    scores = []
    for cell in cells:
        try:
            maes = cross_validate(train_set, cell, folds, seed)
            score = float(np.mean(maes))
            if not math.isfinite(score):
                raise ValueError("non-finite fold score")
        except (ValueError, ZeroDivisionError, FloatingPointError):
            maes, score = [], math.inf
        scores.append((cell, score))
        if best is None or score < best[1]:
            best = (cell, score, maes)
    cell, score, maes = best
    if not math.isfinite(score):
        raise CannotSplitError("every grid cell failed cross-validation")
    model = train(train_set, cell, seed, min_distance=min_distance)
    return CvReport(
        fold_maes=maes,
        mean_cv_mae=score,
        best_hyperparams=cell,
        k=k,
        cell_scores=scores,
        model=model,
        test_metrics=None if not test_set else evaluate_model(model, test_set),
        n_train=len(train_set),
        n_test=0 if not test_set else len(test_set),
    )
