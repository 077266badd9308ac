"""``curbsight`` command line: simulate, train, geolocate, measure, evaluate, report.

Stages communicate only through files under ``--out``. Per-scenario data
lives in ``<data>/<scenario>/``, where ``<data>`` is the config's ``data_dir``
or, when that is null, the output directory itself.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import pipeline as P
from . import svg
from .config import RunConfig, load_config
from .depth_correct import CorrectionModel
from .errors import InputError, ParseError
from .report import ScenarioRun, build_report, render_text

log = logging.getLogger("curbsight")

EXIT_OK, EXIT_INPUT, EXIT_INTERNAL = 0, 1, 2
REPORT_FILE = "report.json"
REPORT_TEXT_FILE = "report.txt"


def _data_root(cfg: RunConfig, out: Path) -> Path:
    return Path(cfg.data_dir) if cfg.data_dir else out


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)
    log.info("wrote %s", path)


def _load_datasets(cfg: RunConfig, out: Path) -> dict[str, P.Dataset]:
    root = _data_root(cfg, out)
    return {label: P.load_dataset(root / label, label, cfg) for label in cfg.scenarios}


def _load_model(cfg: RunConfig, out: Path) -> CorrectionModel | None:
    if not cfg.corrector.enabled:
        return None
    path = out / P.MODEL_FILE
    if not path.exists():
        raise ParseError(path, None, None, "no trained model; run 'train' first or disable the corrector")
    return CorrectionModel.load(path)


def cmd_simulate(cfg: RunConfig, out: Path) -> None:
    scene, renders = P.simulate_renders(cfg)
    for label, render in renders.items():
        P.write_dataset(out / label, render, scene.dem)
        log.info("%s: %d sightings of %d objects", label, len(render.observations), len(render.ground_truth))


def cmd_train(cfg: RunConfig, out: Path) -> None:
    datasets = list(_load_datasets(cfg, out).values())
    report = P.train_corrector(datasets, cfg)
    report.model.save(out / P.MODEL_FILE)
    _write(out / P.CV_REPORT_FILE, P.dumps(report.as_dict()))
    tm = report.test_metrics
    if tm is not None:
        log.info("held-out R2 %.4f (original scale), MAE %.4f m", tm.original.r2 or float("nan"), tm.original.mae)


def cmd_geolocate(cfg: RunConfig, out: Path) -> None:
    model = _load_model(cfg, out)
    for label, ds in _load_datasets(cfg, out).items():
        result = P.geolocate_dataset(ds, model, cfg)
        _write(out / label / P.ESTIMATES_FILE, P.dumps(P.estimates_document(result)))
        log.info("%s: %d located, %d unlocatable", label, len(result.estimates), len(result.unlocatable))


def cmd_measure(cfg: RunConfig, out: Path) -> None:
    model = _load_model(cfg, out)
    for label, ds in _load_datasets(cfg, out).items():
        located, _ = P.parse_estimates(out / label / P.ESTIMATES_FILE)
        depths = P.sighting_depths(ds, model, P.scenario_intrinsics(cfg.intrinsics, label))
        items = P.measure_dataset(ds, located, depths, cfg)
        _write(out / label / P.MEASUREMENTS_FILE, P.dumps(P.measurements_document(label, cfg.measure.mode, items)))


def _depth_plots(cfg: RunConfig, datasets, out: Path) -> None:
    raw, true = [], []
    for ds in datasets.values():
        for obs in ds.observations:
            d = (ds.distances or {}).get((obs.object_id, obs.frame_id))
            if d is not None:
                raw.append(float(np.mean(obs.depth_samples)))
                true.append(d)
    if raw:
        text = svg.scatter(true, raw, "Raw vs true depth", "true distance (m)", "mean raw depth (m)")
        _write(out / "depth_raw_vs_true.svg", text)
    model_path = out / P.MODEL_FILE
    if cfg.corrector.enabled and model_path.exists() and raw:
        model = CorrectionModel.load(model_path)
        _, test_set = P.training_split(list(datasets.values()), cfg)
        actual = [s.ground_distance for s in test_set]
        predicted = model.predict_many([s.features.vector() for s in test_set])
        text = svg.scatter(actual, [float(p) for p in predicted], "Actual vs predicted distance", "actual (m)", "predicted (m)")
        _write(out / "depth_actual_vs_predicted.svg", text)


def cmd_evaluate(cfg: RunConfig, out: Path) -> dict:
    datasets = _load_datasets(cfg, out)
    runs = []
    for label, ds in datasets.items():
        located, unlocatable = P.parse_estimates(out / label / P.ESTIMATES_FILE)
        mpath = out / label / P.MEASUREMENTS_FILE
        measurements = P.parse_measurements(mpath) if mpath.exists() else []
        runs.append(ScenarioRun(label, ds, located, unlocatable, measurements))
    cv_path = out / P.CV_REPORT_FILE
    depth = None
    if cfg.corrector.enabled and cv_path.exists():
        try:
            depth = json.loads(cv_path.read_text())
        except json.JSONDecodeError as exc:
            raise ParseError(cv_path, exc.lineno, None, f"invalid JSON: {exc.msg}") from None
        depth = {k: depth.get(k) for k in ("k", "mean_cv_mae", "best_hyperparams", "test_metrics", "n_train", "n_test")}
    doc = build_report(runs, cfg.evaluate, depth)
    _write(out / REPORT_FILE, P.dumps(doc))
    _write(out / REPORT_TEXT_FILE, render_text(doc))

    groups = {label: list(v.values()) for label, v in _errors_by_scenario(doc).items()}
    _write(out / "geolocation_error.svg", svg.boxplot(groups, "Geolocation error by scenario", "error (m)"))
    pooled = doc["geolocation"]["distance_bins"].get("pooled", [])
    located = [o for o in doc["objects"] if o["error_m"] is not None]
    bins = {}
    for b in pooled:
        hi = float("inf") if b["hi"] is None else b["hi"]
        bins[b["label"]] = [o["error_m"] for o in located if b["lo"] <= o["last_distance_m"] < hi]
    _write(out / "error_by_distance.svg", svg.boxplot(bins, "Geolocation error by last camera distance", "error (m)"))
    _depth_plots(cfg, datasets, out)
    return doc


def _errors_by_scenario(doc) -> dict[str, dict[str, float]]:
    out: dict[str, dict[str, float]] = {s: {} for s in doc["scenarios"]}
    for o in doc["objects"]:
        if o["error_m"] is not None:
            out[o["scenario"]][o["object_id"]] = o["error_m"]
    return out


def cmd_report(cfg: RunConfig, out: Path) -> dict:
    if cfg.data_dir is None:
        cmd_simulate(cfg, out)
    if cfg.corrector.enabled:
        cmd_train(cfg, out)
    cmd_geolocate(cfg, out)
    cmd_measure(cfg, out)
    return cmd_evaluate(cfg, out)


COMMANDS = {
    "simulate": cmd_simulate,
    "train": cmd_train,
    "geolocate": cmd_geolocate,
    "measure": cmd_measure,
    "evaluate": cmd_evaluate,
    "report": cmd_report,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="curbsight", description=__doc__.splitlines()[0])
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", required=True, help="JSON run configuration")
    parser.add_argument("--seed", type=int, help="override the configured seed")
    parser.add_argument("--out", default="out", help="artifact directory (default: ./out)")
    parser.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg = replace(cfg, seed=args.seed)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        COMMANDS[args.command](cfg, out)
    except InputError as exc:
        log.error("%s", exc)
        return EXIT_INPUT
    except Exception:
        log.exception("internal error")
        return EXIT_INTERNAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
