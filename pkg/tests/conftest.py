import copy
import json

import pytest

SMALL = {
    "name": "small",
    "grid": {"extent": [0.0, 0.0, 2.0, 2.0], "width": 10},
    "bvp": {"kind": "neumann", "start": [0.3, 0.3], "target": [1.7, 1.7]},
    "robot": {"kind": "ddr_kinematic"},
    "controller": {"K1": 1.0, "K2": 4.0},
    "initial": {"theta": 0.0},
    "sim": {"dt": 0.01, "t_max": 20.0, "pos_tol": 0.1},
}


@pytest.fixture(autouse=True)
def isolated_env(tmp_path, monkeypatch):
    """Keeps the field cache and the log file inside the test's temporary directory."""
    monkeypatch.setenv("HPFNAV_CACHE", str(tmp_path / "cache"))
    monkeypatch.setenv("HPFNAV_LOG_FILE", str(tmp_path / "hpfnav.log"))


@pytest.fixture
def small_doc():
    return copy.deepcopy(SMALL)


@pytest.fixture
def small_scenario(tmp_path, small_doc):
    path = tmp_path / "small.json"
    path.write_text(json.dumps(small_doc), encoding="utf-8")
    return path
