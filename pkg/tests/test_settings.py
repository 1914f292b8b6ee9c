import json

import pytest

from errors import InvalidParams
from settings import DEFAULTS, load_settings
from storage import write_csv_atomic, write_error_log, write_json_atomic


def test_defaults(monkeypatch):
    for name in DEFAULTS:
        monkeypatch.delenv(f"GAIT_{name}", raising=False)
    s = load_settings()
    assert s["WINDOW_S"] == 3.0
    assert s["HOP_S"] == 1.5
    assert s["N_FFT"] == 1024
    assert s["FOLDS"] == 10
    assert s["BUDGET_S"] == 300.0
    assert s["THRESHOLD"] == 0.5


def test_file_beats_environment(tmp_path, monkeypatch):
    monkeypatch.setenv("GAIT_FOLDS", "4")
    monkeypatch.setenv("GAIT_SEED", "9")
    cfg = tmp_path / "gait.env"
    cfg.write_text("FOLDS=6\n# comment\nUNKNOWN_KEY=1\n")
    s = load_settings(cfg)
    assert s["FOLDS"] == 6
    assert s["SEED"] == 9


def test_malformed_value(tmp_path):
    cfg = tmp_path / "gait.env"
    cfg.write_text("N_FFT=big\n")
    with pytest.raises(InvalidParams, match="N_FFT"):
        load_settings(cfg)


def test_missing_config_file(tmp_path):
    with pytest.raises(InvalidParams):
        load_settings(tmp_path / "nope.env")


def test_atomic_writers_leave_no_temp_files(tmp_path):
    write_json_atomic(tmp_path / "a.json", {"b": 1, "a": [1.5]})
    write_csv_atomic(tmp_path / "a.csv", ["x", "y"], [[1, 2]])
    assert sorted(p.name for p in tmp_path.iterdir()) == ["a.csv", "a.json"]
    assert (tmp_path / "a.json").read_text() == json.dumps({"a": [1.5], "b": 1}, indent=2) + "\n"
    assert (tmp_path / "a.csv").read_text() == "x,y\n1,2\n"


def test_error_log_format(tmp_path):
    write_error_log("extract", "entry 'x': audio file not found")
    line = (tmp_path / "logs" / "errors.log").read_text().strip()
    assert line.endswith("[extract] entry 'x': audio file not found")
    assert line.startswith("[") and " UTC] " in line
