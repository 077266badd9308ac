"""Evaluation of estimates against ground truth across scenarios.

Every ground-truth object appears once per scenario, as located,
unlocatable or out of DEM coverage. Scenario comparisons are paired by
object id; objects missing from either side of a comparison are dropped from
that comparison and listed.
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass
from typing import Mapping, Sequence

import numpy as np

from . import reference, stats
from .config import EvaluateConfig
from .errors import InvalidInputError
from .geodesy import haversine_distance
from .pipeline import Dataset, LocatedObject, StructuralEstimate

log = logging.getLogger(__name__)

REPORT_VERSION = 1
SCENARIO_ORDER = ("In_Slow", "In_Speed", "Out_Slow", "Out_Speed")
PAIRWISE = (
    ("In_Slow", "In_Speed"),
    ("Out_Slow", "Out_Speed"),
    ("In_Slow", "Out_Slow"),
    ("In_Speed", "Out_Speed"),
)
STRUCTURAL_ATTRIBUTES = ("height_m", "dbh_cm", "crown_width_m")
_COVERAGE_NOTES = ("out of DEM coverage", "DEM nodata")


@dataclass(frozen=True)
class ScenarioRun:
    label: str
    dataset: Dataset
    located: Mapping[str, LocatedObject]
    unlocatable: Mapping[str, str]
    measurements: Sequence[StructuralEstimate] = ()


@dataclass(frozen=True)
class ObjectRecord:
    scenario: str
    object_id: str
    kind: str
    status: str  # located | unlocatable | out_of_coverage
    reason: str
    n_sightings: int
    true_lat: float
    true_lon: float
    est_lat: float | None = None
    est_lon: float | None = None
    error_m: float | None = None
    first_distance_m: float | None = None
    last_distance_m: float | None = None
    height_m: float | None = None
    height_error_m: float | None = None
    dbh_error_cm: float | None = None
    crown_width_error_m: float | None = None
    terrain_note: str = ""

    @property
    def located(self) -> bool:
        return self.error_m is not None

    def attribute_error(self, attr: str) -> float | None:
        return {
            "height_m": self.height_error_m,
            "dbh_cm": self.dbh_error_cm,
            "crown_width_m": self.crown_width_error_m,
        }[attr]


def object_records(run: ScenarioRun) -> tuple[list[ObjectRecord], dict]:
    """One record per ground-truth object, plus a reconciliation of id mismatches."""
    ds = run.dataset
    if ds.ground_truth is None:
        raise InvalidInputError(f"{run.label}: no ground truth to evaluate against")
    truth = {o.object_id: o for o in ds.ground_truth}
    sightings = ds.sightings()
    measured = {m.object_id: m for m in run.measurements}
    records = []
    for object_id in sorted(truth):
        obj = truth[object_id]
        rows = sightings.get(object_id, [])
        base = dict(
            scenario=run.label,
            object_id=object_id,
            kind=obj.kind,
            n_sightings=len(rows),
            true_lat=obj.location.lat,
            true_lon=obj.location.lon,
        )
        if rows:
            base["first_distance_m"] = haversine_distance(rows[0][1].position, obj.location)
            base["last_distance_m"] = haversine_distance(rows[-1][1].position, obj.location)
        est = run.located.get(object_id)
        if est is None:
            reason = run.unlocatable.get(object_id) or ("never sighted" if not rows else "no estimate")
            records.append(ObjectRecord(status="unlocatable", reason=reason, **base))
            continue
        m = measured.get(object_id)
        status, note = "located", ""
        extra = {}
        if m is not None:
            note = m.terrain_note
            if note in _COVERAGE_NOTES:
                status = "out_of_coverage"
            extra["height_m"] = m.height_m
            extra["height_error_m"] = m.height_m - obj.height
            if obj.kind in ("tree", "pole"):
                extra["dbh_error_cm"] = (m.width_m - obj.width) * 100.0
            if obj.kind == "tree" and m.crown_width_m is not None and obj.crown_width is not None:
                extra["crown_width_error_m"] = m.crown_width_m - obj.crown_width
        records.append(
            ObjectRecord(
                status=status,
                reason="" if status == "located" else note,
                est_lat=est.location.lat,
                est_lon=est.location.lon,
                error_m=haversine_distance(est.location, obj.location),
                terrain_note=note,
                **base,
                **extra,
            )
        )
    recon = {
        "estimates_without_truth": sorted(set(run.located) - set(truth)),
        "unlocatable_without_truth": sorted(set(run.unlocatable) - set(truth)),
        "measurements_without_estimates": sorted(set(measured) - set(run.located)),
        "truth_never_sighted": sorted(set(truth) - set(sightings)),
    }
    for key, ids in recon.items():
        if ids and key != "truth_never_sighted":
            log.warning("%s: %s: %s", run.label, key.replace("_", " "), ", ".join(ids))
    return records, recon


def _summary(values) -> dict | None:
    return stats.summarize(values).as_dict() if len(values) else None


def _entry(result: stats.TestResult, p_adjusted: float | None = None, **extra) -> dict:
    out = result.as_dict()
    out["p_adjusted"] = p_adjusted
    out.update(extra)
    return out


def _paired(by_scenario: Mapping[str, Mapping[str, float]], labels: Sequence[str]):
    """Object ids present in every listed scenario, and those dropped."""
    sets = [set(by_scenario[l]) for l in labels]
    common = sorted(set.intersection(*sets))
    dropped = sorted(set.union(*sets) - set(common))
    return common, dropped


def _wilcoxon_pair(values: Mapping[str, Mapping[str, float]], a: str, b: str) -> tuple[stats.TestResult | None, dict]:
    ids, dropped = _paired(values, (a, b))
    info = {"comparison": f"{a} vs {b}", "n_pairs": len(ids), "dropped": dropped}
    if not ids:
        return None, info
    return stats.wilcoxon_signed_rank([values[a][i] for i in ids], [values[b][i] for i in ids]), info


def geolocation_tests(errors: Mapping[str, Mapping[str, float]]) -> dict:
    """Paired tests on per-object geolocation error across the scenarios present."""
    present = [s for s in SCENARIO_ORDER if s in errors]
    out: dict = {}
    if len(present) < 2:
        return out
    if len(present) == 4:
        ids, dropped = _paired(errors, present)
        if ids:
            inside = [(errors["In_Slow"][i] + errors["In_Speed"][i]) / 2 for i in ids]
            outside = [(errors["Out_Slow"][i] + errors["Out_Speed"][i]) / 2 for i in ids]
            slow = [(errors["In_Slow"][i] + errors["Out_Slow"][i]) / 2 for i in ids]
            fast = [(errors["In_Speed"][i] + errors["Out_Speed"][i]) / 2 for i in ids]
            main = [stats.wilcoxon_signed_rank(inside, outside), stats.wilcoxon_signed_rank(slow, fast)]
            adj = stats.bonferroni([r.p_value for r in main])
            common = {"n_pairs": len(ids), "dropped": dropped, "family_size": 2}
            out["camera_position"] = _entry(main[0], adj[0], comparison="inside vs outside", **common)
            out["speed"] = _entry(main[1], adj[1], comparison="slow vs high", **common)
    if len(present) >= 3:
        ids, dropped = _paired(errors, present)
        if len(ids) >= 2:
            matrix = [[errors[s][i] for s in present] for i in ids]
            out["overall"] = _entry(stats.friedman(matrix), scenarios=list(present), n_subjects=len(ids), dropped=dropped)
    pairs = [(a, b) for a, b in PAIRWISE if a in errors and b in errors]
    results = [_wilcoxon_pair(errors, a, b) for a, b in pairs]
    valid = [r.p_value for r, _ in results if r is not None]
    adj = iter(stats.bonferroni(valid, m=len(PAIRWISE)) if valid else [])
    out["pairwise"] = [
        {"comparison": info["comparison"], "n_pairs": info["n_pairs"], "dropped": info["dropped"], "note": "no paired objects"}
        if r is None
        else _entry(r, next(adj), family_size=len(PAIRWISE), **info)
        for r, info in results
    ]
    return out


def spearman_tests(records: Sequence[ObjectRecord]) -> dict:
    """Error vs first and last camera distance per scenario, Bonferroni over the family."""
    raw = []
    for label in [s for s in SCENARIO_ORDER if any(r.scenario == s for r in records)]:
        located = [r for r in records if r.scenario == label and r.located]
        for which in ("first", "last"):
            if len(located) < 3:
                raw.append((label, which, None, len(located)))
                continue
            d = [getattr(r, f"{which}_distance_m") for r in located]
            raw.append((label, which, stats.spearman([r.error_m for r in located], d), len(located)))
    ps = [res.p_value for _, _, res, _ in raw if res is not None and res.p_value is not None]
    adj = iter(stats.bonferroni(ps) if ps else [])
    out: dict = {}
    for label, which, res, n in raw:
        slot = out.setdefault(label, {})
        if res is None:
            slot[which] = {"n": n, "note": "fewer than 3 located objects"}
        else:
            slot[which] = _entry(res, next(adj) if res.p_value is not None else None, family_size=len(ps))
    return out


def distance_bins(records: Sequence[ObjectRecord], edges: Sequence[float]) -> dict:
    """Geolocation error summaries binned by last camera-to-object distance."""
    groups: dict[str, list[ObjectRecord]] = {}
    for r in records:
        if r.located:
            groups.setdefault(r.scenario, []).append(r)
    groups = {k: groups[k] for k in SCENARIO_ORDER if k in groups}
    groups["pooled"] = [r for rows in groups.values() for r in rows]
    out = {}
    for key, rows in groups.items():
        if not rows:
            continue
        bins = stats.bin_by_distance([r.error_m for r in rows], [r.last_distance_m for r in rows], edges)
        out[key] = [b.as_dict() for b in bins]
    return out


def structural_summaries(records: Sequence[ObjectRecord], baseline: str) -> dict:
    """Signed-error summaries per scenario and per class, with tests against ``baseline``."""
    scenarios = [s for s in SCENARIO_ORDER if any(r.scenario == s for r in records)]
    by_scenario: dict = {}
    by_class: dict = {}
    for attr in STRUCTURAL_ATTRIBUTES:
        values = {
            s: {r.object_id: r.attribute_error(attr) for r in records if r.scenario == s and r.attribute_error(attr) is not None}
            for s in scenarios
        }
        rows = {}
        for s in scenarios:
            summary = _summary(list(values[s].values()))
            if summary is not None:
                summary["abs"] = _summary(np.abs(list(values[s].values())))
            rows[s] = {"summary": summary}
        others = [s for s in scenarios if s != baseline] if baseline in values else []
        results = [_wilcoxon_pair(values, baseline, s) for s in others]
        ps = [r.p_value for r, _ in results if r is not None]
        adj = iter(stats.bonferroni(ps, m=len(others)) if ps else [])
        for s, (r, info) in zip(others, results):
            rows[s]["vs_baseline"] = dict(info) if r is None else _entry(r, next(adj), family_size=len(others), **info)
        by_scenario[attr] = rows

        base_records = [r for r in records if r.scenario == baseline and r.attribute_error(attr) is not None]
        kinds = sorted({r.kind for r in base_records})
        by_class[attr] = {}
        for kind in kinds:
            signed = [r.attribute_error(attr) for r in base_records if r.kind == kind]
            by_class[attr][kind] = {"signed": _summary(signed), "abs": _summary(np.abs(signed))}
    return {"baseline": baseline, "by_scenario": by_scenario, "by_class": by_class}


def build_report(
    runs: Sequence[ScenarioRun],
    config: EvaluateConfig = EvaluateConfig(),
    depth_model: Mapping | None = None,
) -> dict:
    """Assemble the evaluation report as a JSON-ready dict with sorted, traceable records."""
    if not runs:
        raise InvalidInputError("nothing to evaluate")
    labels = [r.label for r in runs]
    if len(set(labels)) != len(labels):
        raise InvalidInputError("duplicate scenario in evaluation")
    records: list[ObjectRecord] = []
    reconciliation = {}
    for run in sorted(runs, key=lambda r: SCENARIO_ORDER.index(r.label)):
        recs, recon = object_records(run)
        records.extend(recs)
        reconciliation[run.label] = recon
    id_sets = {r.label: {o.object_id for o in r.dataset.ground_truth} for r in runs}
    all_ids = set.union(*id_sets.values())
    reconciliation["objects_missing_from_scenario"] = {
        label: sorted(all_ids - ids) for label, ids in sorted(id_sets.items()) if all_ids - ids
    }

    errors = {
        label: {r.object_id: r.error_m for r in records if r.scenario == label and r.located} for label in labels
    }
    status_counts = {
        label: {s: sum(1 for r in records if r.scenario == label and r.status == s) for s in ("located", "unlocatable", "out_of_coverage")}
        for label in labels
    }
    summary = {label: _summary(list(errors[label].values())) for label in SCENARIO_ORDER if label in errors}
    doc = {
        "version": REPORT_VERSION,
        "scenarios": [s for s in SCENARIO_ORDER if s in labels],
        "objects": [asdict(r) for r in records],
        "status_counts": status_counts,
        "reconciliation": reconciliation,
        "geolocation": {
            "summary": summary,
            "tests": geolocation_tests(errors),
            "spearman": spearman_tests(records),
            "distance_bins": distance_bins(records, config.distance_bins),
        },
        "structural": structural_summaries(records, config.baseline),
        "depth_model": None if depth_model is None else dict(depth_model),
        "reference": reference.as_dict(),
    }
    return _clean(doc)


def _clean(obj):
    """Replace non-finite floats with None so the report is strict JSON."""
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else None
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


# ---------------------------------------------------------------- text rendering


def _f(x, digits: int = 2) -> str:
    if x is None:
        return "-"
    if isinstance(x, int):
        return str(x)
    if x != 0 and abs(x) < 10 ** -digits:
        return f"{x:.3e}"
    return f"{x:.{digits}f}"


def _table(header: Sequence[str], rows: Sequence[Sequence]) -> list[str]:
    cells = [list(header)] + [[str(c) for c in row] for row in rows]
    widths = [max(len(r[i]) for r in cells) for i in range(len(header))]
    lines = ["  ".join(c.ljust(w) for c, w in zip(cells[0], widths))]
    lines.append("  ".join("-" * w for w in widths))
    lines += ["  ".join(c.rjust(w) if j else c.ljust(w) for j, (c, w) in enumerate(zip(r, widths))) for r in cells[1:]]
    return lines


def render_text(doc: Mapping) -> str:
    lines = ["GEOLOCATION ERROR (m)"]
    keys = ("n", "mean", "median", "std", "min", "q25", "q75", "max", "iqr")
    rows = []
    ref = doc["reference"]["geolocation_summary"]
    for label in doc["scenarios"]:
        s = doc["geolocation"]["summary"].get(label)
        rows.append([label] + ([_f(s[k]) for k in keys] if s else ["-"] * len(keys)))
        if label in ref:
            rows.append([f"  {doc['reference']['label']}"] + [_f(ref[label][k]) for k in keys])
    lines += _table(["scenario", *keys], rows)

    lines += ["", "STATUS"]
    counts = doc["status_counts"]
    lines += _table(
        ["scenario", "located", "unlocatable", "out_of_coverage"],
        [[k, v["located"], v["unlocatable"], v["out_of_coverage"]] for k, v in counts.items()],
    )

    tests = doc["geolocation"]["tests"]
    if tests:
        lines += ["", "SCENARIO TESTS"]
        rows = []
        for key in ("camera_position", "speed", "overall"):
            if key in tests:
                t = tests[key]
                rows.append([key, t["method"], _f(t["statistic"]), _f(t["p_value"], 4), _f(t.get("p_adjusted"), 4), t["n"]])
        for t in tests.get("pairwise", []):
            if "method" in t:
                rows.append([t["comparison"], t["method"], _f(t["statistic"]), _f(t["p_value"], 4), _f(t["p_adjusted"], 4), t["n"]])
        lines += _table(["comparison", "test", "statistic", "p", "p_adj", "n"], rows)

    lines += ["", "SPEARMAN: ERROR VS CAMERA DISTANCE"]
    rows = []
    for label, slot in doc["geolocation"]["spearman"].items():
        for which in ("first", "last"):
            t = slot[which]
            rows.append([label, which, _f(t.get("statistic"), 3), _f(t.get("p_value"), 4), _f(t.get("p_adjusted"), 4), t["n"]])
    lines += _table(["scenario", "distance", "rho", "p", "p_adj", "n"], rows)

    lines += ["", "GEOLOCATION ERROR BY LAST CAMERA DISTANCE (median m, n)"]
    rows = []
    for key, bins in doc["geolocation"]["distance_bins"].items():
        rows.append([key] + [f"{_f(b['summary']['median'])} ({b['summary']['n']})" if b["summary"] else "empty" for b in bins])
    first = next(iter(doc["geolocation"]["distance_bins"].values()), [])
    lines += _table(["group", *[b["label"] for b in first]], rows)

    st = doc["structural"]
    lines += ["", f"STRUCTURAL ERROR (signed; tests vs {st['baseline']})"]
    rows = []
    for attr, per in st["by_scenario"].items():
        for label, row in per.items():
            s = row["summary"]
            vs = row.get("vs_baseline") or {}
            vals = [_f(s[k]) for k in ("n", "mean", "mae", "median", "std", "iqr")] if s else ["-"] * 6
            rows.append([attr, label, *vals, _f(vs.get("p_adjusted"), 4)])
    lines += _table(["attribute", "scenario", "n", "mean", "mae", "median", "std", "iqr", "p_adj"], rows)

    lines += ["", f"STRUCTURAL ERROR BY CLASS ({st['baseline']})"]
    rows = []
    for attr, per in st["by_class"].items():
        for kind, row in per.items():
            s = row["signed"]
            rows.append([attr, kind, *[_f(s[k]) for k in ("n", "mean", "mae", "median", "std", "min", "max", "iqr")]])
    lines += _table(["attribute", "class", "n", "mean", "mae", "median", "std", "min", "max", "iqr"], rows)

    dm = doc.get("depth_model")
    if dm:
        ref_dm = doc["reference"]["depth_model"]
        lines += ["", "DEPTH CORRECTION MODEL"]
        rows = [["cv mae (transformed)", _f(dm.get("mean_cv_mae"), 4), _f(ref_dm["mean_cv_mae"], 4)]]
        tm = dm.get("test_metrics") or {}
        for scale in ("transformed", "original"):
            for k in ("mse", "mae", "r2"):
                got = (tm.get(scale) or {}).get(k)
                rows.append([f"test {k} ({scale})", _f(got, 4), _f(ref_dm[scale][k], 4)])
        lines += _table(["metric", "computed", doc["reference"]["label"]], rows)

    recon = doc["reconciliation"]
    notes = []
    for label, r in recon.items():
        if label == "objects_missing_from_scenario":
            for s, ids in r.items():
                notes.append(f"{s}: missing objects {', '.join(ids)}")
            continue
        for key, ids in r.items():
            if ids:
                notes.append(f"{label}: {key.replace('_', ' ')}: {', '.join(ids)}")
    if notes:
        lines += ["", "RECONCILIATION"] + notes
    return "\n".join(lines) + "\n"
