import json
import os

import pytest

from bkbm.reporting import Manifest, atomic_write_text, write_csv, write_json


def test_atomic_write_replaces_and_cleans_up(tmp_path):
    target = tmp_path / "out.txt"
    atomic_write_text(str(target), "first")
    atomic_write_text(str(target), "second")
    assert target.read_text() == "second"
    leftovers = [p for p in os.listdir(tmp_path) if p.startswith(".tmp-")]
    assert leftovers == []


def test_write_csv_formats_floats_exactly(tmp_path):
    path = str(tmp_path / "t.csv")
    write_csv(path, ("a", "b"), [(0.1, 2), (1.0 / 3.0, "x")])
    lines = open(path).read().splitlines()
    assert lines[0] == "a,b"
    assert lines[1] == "0.1,2"
    assert float(lines[2].split(",")[0]) == 1.0 / 3.0


def test_write_json_round_trips(tmp_path):
    path = str(tmp_path / "t.json")
    write_json(path, {"b": [1, 2.5], "a": None})
    assert json.load(open(path)) == {"b": [1, 2.5], "a": None}


def test_manifest_schema(tmp_path):
    m = Manifest(subcommand="simulate", version="0.1.0", seed=3,
                 config={"x": 1.0}, outputs=["positions.csv"])
    m.write(str(tmp_path / "manifest.json"))
    data = json.load(open(tmp_path / "manifest.json"))
    for key in ("subcommand", "version", "seed", "config", "outputs",
                "verdicts", "cap_exceeded", "wall_time_s", "exit_code"):
        assert key in data


def test_atomic_write_failure_leaves_no_temp(tmp_path):
    with pytest.raises(TypeError):
        atomic_write_text(str(tmp_path / "x.txt"), 123)  # not writable text
    assert not (tmp_path / "x.txt").exists()
    assert [p for p in os.listdir(tmp_path) if p.startswith(".tmp-")] == []
