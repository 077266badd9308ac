import json
import subprocess
import sys
from pathlib import Path

import pytest

from curbsight import cli
from curbsight.svg import parse_embedded_data

SMALL = {
    "seed": 2,
    "scenarios": ["In_Slow", "In_Speed"],
    "scene": {"n_objects": 12},
    "noise": {"gps_systematic_offset": [2.4, 3.2], "gps_jitter_sigma": 1.0, "depth_compression": 0.6, "depth_sample_sigma": 0.3},
    "corrector": {"grid": {"n_trees": [20], "max_depth": [2]}, "k_folds": 3},
}
ARTIFACTS = ("report.json", "model.json", "cv_report.json", "In_Slow/estimates.geojson", "In_Speed/measurements.json")


@pytest.fixture
def config(tmp_path):
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps(SMALL))
    return p


def test_report_chain_writes_everything(tmp_path, config):
    out = tmp_path / "out"
    assert cli.main(["report", "--config", str(config), "--out", str(out)]) == cli.EXIT_OK
    for name in ARTIFACTS + ("report.txt", "geolocation_error.svg", "error_by_distance.svg", "depth_actual_vs_predicted.svg"):
        assert (out / name).exists(), name
    doc = json.loads((out / "report.json").read_text())
    assert doc["scenarios"] == ["In_Slow", "In_Speed"]
    assert doc["depth_model"]["test_metrics"]["original"]["r2"] is not None
    groups = parse_embedded_data((out / "geolocation_error.svg").read_text())
    assert [g[0] for g in groups[1:]] == ["In_Slow", "In_Speed"]


def test_byte_identical_reruns(tmp_path, config):
    a, b = tmp_path / "a", tmp_path / "b"
    for out in (a, b):
        assert cli.main(["report", "--config", str(config), "--out", str(out)]) == 0
    for name in ARTIFACTS:
        assert (a / name).read_bytes() == (b / name).read_bytes(), name


def test_seed_override_changes_output(tmp_path, config):
    a, b = tmp_path / "a", tmp_path / "b"
    cli.main(["simulate", "--config", str(config), "--out", str(a)])
    cli.main(["simulate", "--config", str(config), "--out", str(b), "--seed", "7"])
    assert (a / "In_Slow/track.csv").read_bytes() != (b / "In_Slow/track.csv").read_bytes()


def test_stages_in_sequence(tmp_path, config):
    out = tmp_path / "o"
    for cmd in ("simulate", "train", "geolocate", "measure", "evaluate"):
        assert cli.main([cmd, "--config", str(config), "--out", str(out)]) == 0, cmd


def test_missing_model_is_input_error(tmp_path, config):
    out = tmp_path / "o"
    cli.main(["simulate", "--config", str(config), "--out", str(out)])
    assert cli.main(["geolocate", "--config", str(config), "--out", str(out)]) == cli.EXIT_INPUT


def test_bad_config_is_input_error(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text('{"scenarios": ["Nowhere"]}')
    assert cli.main(["simulate", "--config", str(p), "--out", str(tmp_path / "o")]) == cli.EXIT_INPUT


def test_corrupt_input_is_input_error(tmp_path, config):
    out = tmp_path / "o"
    cli.main(["simulate", "--config", str(config), "--out", str(out)])
    obs = out / "In_Slow" / "observations.csv"
    lines = obs.read_text().splitlines()
    # drop the third depth sample of the first row
    fields = lines[1].split(",")
    fields[8] = ""
    lines[1] = ",".join(fields)
    obs.write_text("\n".join(lines) + "\n")
    assert cli.main(["train", "--config", str(config), "--out", str(out)]) == cli.EXIT_INPUT


def test_external_data_dir(tmp_path, config):
    data = tmp_path / "data"
    cli.main(["simulate", "--config", str(config), "--out", str(data)])
    cfg = dict(SMALL, data_dir=str(data), corrector={"enabled": False})
    p = tmp_path / "ext.json"
    p.write_text(json.dumps(cfg))
    out = tmp_path / "out"
    assert cli.main(["report", "--config", str(p), "--out", str(out)]) == 0
    assert not (out / "In_Slow" / "observations.csv").exists()
    assert (out / "In_Slow" / "estimates.geojson").exists()


def test_console_entry_point(tmp_path):
    cfg = Path(__file__).resolve().parent.parent / "configs" / "zero_noise.json"
    proc = subprocess.run(
        [sys.executable, "-m", "curbsight.cli", "report", "--config", str(cfg), "--out", str(tmp_path)],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 0, proc.stderr
    assert "GEOLOCATION ERROR" in (tmp_path / "report.txt").read_text()
