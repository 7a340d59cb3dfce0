import json
import math
from pathlib import Path

import numpy as np
import pytest

from hpfnav.env import (BvpKind, CellClass, Workspace, cell_at, clearance_at, clearance_map, is_admissible,
                        snap_to_free)
from hpfnav.errors import ScenarioParseError, ScenarioValidationError, SnapError
from hpfnav.scenario import apply_overrides, dump_scenario, load_scenario, load_scenario_file

SCENARIOS = Path(__file__).resolve().parent.parent / "scenarios"

MINIMAL = {
    "grid": {"extent": [-2.0, -2.0, 2.0, 2.0], "width": 20},
    "bvp": {"kind": "neumann", "start": [0.0, -1.0], "target": [1.0, 0.0]},
}


def test_rows_are_drawn_top_first():
    ws = Workspace.from_rows(["#..", "...", "..#"], cell_size=1.0)
    # bottom-right is the last character of the last row
    assert cell_at(ws, (2.5, 0.5)) is CellClass.OBSTACLE
    assert cell_at(ws, (0.5, 2.5)) is CellClass.OBSTACLE
    assert cell_at(ws, (0.5, 0.5)) is CellClass.FREE
    assert ws.to_rows() == ["#..", "...", "..#"]


def test_cell_at_edges_use_floor_rule():
    ws = Workspace.from_rows(["...", ".#.", "..."], cell_size=1.0)
    assert cell_at(ws, (1.0, 1.0)) is CellClass.OBSTACLE  # lower-left corner of the center cell
    assert cell_at(ws, (2.0, 1.5)) is CellClass.FREE  # belongs to the cell to the right
    assert cell_at(ws, (1.5, 2.0)) is CellClass.FREE
    assert cell_at(ws, (0.999999, 1.5)) is CellClass.FREE
    for p in [(1.0, 1.0), (2.0, 2.0), (0.0, 0.0), (3.0, 1.0)]:
        i, j = math.floor(p[0]), math.floor(p[1])
        expected = ws.is_free_cell(i, j)
        assert is_admissible(ws, p) is expected


def test_outside_grid_is_obstacle():
    ws = Workspace.free_space(4, 4, 0.5)
    assert cell_at(ws, (-0.01, 1.0)) is CellClass.OBSTACLE
    assert cell_at(ws, (2.0, 1.0)) is CellClass.OBSTACLE
    assert cell_at(ws, (1.0, 2.5)) is CellClass.OBSTACLE
    assert is_admissible(ws, (1.99, 1.99)) is True


def test_origin_shifts_cell_index():
    ws = Workspace.free_space(4, 4, 1.0, origin=(-2.0, -2.0))
    assert ws.cell_index((-2.0, -2.0)) == (0, 0)
    assert ws.cell_index((0.0, -1.0)) == (2, 1)
    assert ws.cell_center((2, 1)) == (0.5, -0.5)
    assert ws.cell_index((2.0, 0.0)) is None


def test_admissibility_exhaustive_sweep():
    rng = np.random.default_rng(3)
    for size in (1, 7, 33, 64):
        mask = rng.random((size, size)) < 0.7
        mask[0, 0] = True
        rows = ["".join("." if mask[r, c] else "#" for c in range(size)) for r in range(size)]
        ws = Workspace.from_rows(rows, cell_size=0.25)
        for j in range(size):
            for i in range(size):
                free = rows[size - 1 - j][i] == "."
                cx, cy = ws.cell_center((i, j))
                assert is_admissible(ws, (cx, cy)) is free
                assert is_admissible(ws, (i * 0.25, j * 0.25)) is free


def test_workspace_validation():
    with pytest.raises(ValueError):
        Workspace.from_rows(["##", "##"], cell_size=1.0)
    with pytest.raises(ValueError):
        Workspace.from_rows(["..", ".."], cell_size=0.0)
    with pytest.raises(ValueError):
        Workspace.from_rows(["..", ".."], cell_size=1.0, gamma=[0.5, 0.5, 1.5, 0.5])


def test_snap_to_free():
    ws = Workspace.from_rows(["...", ".#.", "..."], cell_size=1.0)
    assert snap_to_free(ws, (0.5, 0.5)) == (0, 0)
    # center cell is blocked; nearest Free centers are one cell away
    assert snap_to_free(ws, (1.4, 1.5)) == (0, 1)
    with pytest.raises(SnapError):
        snap_to_free(ws, (10.0, 10.0))


def test_clearance_map():
    ws = Workspace.from_rows(["#####", "#...#", "#...#", "#...#", "#####"], cell_size=0.5)
    clearance = clearance_map(ws)
    # center cell is two cells from the walls
    assert clearance[2, 2] == pytest.approx(0.75)
    assert clearance[1, 1] == pytest.approx(0.25)
    assert clearance[0, 0] == 0.0
    assert clearance_at(ws, clearance, (1.25, 1.25)) == pytest.approx(0.75)
    free = Workspace.free_space(3, 1, 1.0)
    # grid border counts as an obstacle
    assert clearance_map(free)[0, 1] == pytest.approx(0.5)


def test_load_minimal_scenario():
    sc = load_scenario(json.dumps(MINIMAL))
    assert sc.bvp.kind is BvpKind.NEUMANN
    assert sc.workspace.width_cells == 20
    assert sc.workspace.height_cells == 20
    assert sc.workspace.cell_size == pytest.approx(0.2)
    assert sc.initial_state.position == (0.0, -1.0)
    assert sc.gains.K1 == 1.0 and sc.gains.K2 == 4.0
    assert sc.gains.KD1 == 2.0 and sc.gains.KD2 == 2.0
    assert sc.damping_mode.value == "selective"


def test_load_gamma_scenario():
    sc = load_scenario_file(SCENARIOS / "fsr_gamma.json")
    assert sc.bvp.kind is BvpKind.GAMMA
    ws = sc.workspace
    assert ws.gamma is not None
    # bottom row is calm, top row turbulent
    assert ws.gamma_array[0, 0] == 1.0
    assert ws.gamma_array[-1, 0] == 0.05


def test_start_in_obstacle_is_rejected():
    doc = json.loads(json.dumps(MINIMAL))
    doc["grid"]["obstacles"] = [[-0.5, -1.5, 0.5, -0.5]]
    with pytest.raises(ScenarioValidationError) as err:
        load_scenario(json.dumps(doc))
    assert err.value.location == "bvp"


def test_unknown_key_is_rejected():
    doc = json.loads(json.dumps(MINIMAL))
    doc["controller"] = {"K3": 1.0}
    with pytest.raises(ScenarioValidationError) as err:
        load_scenario(json.dumps(doc))
    assert err.value.location == "controller.K3"


def test_parse_error_reports_line():
    text = '{\n  "grid": {\n    "width": 3,\n  }\n}'
    with pytest.raises(ScenarioParseError) as err:
        load_scenario(text)
    assert err.value.line == 4


def test_bad_value_names_location():
    doc = json.loads(json.dumps(MINIMAL))
    doc["controller"] = {"K1": -1.0}
    with pytest.raises(ScenarioValidationError) as err:
        load_scenario(json.dumps(doc))
    assert err.value.location == "controller"
    doc["controller"] = {"damping": "sideways"}
    with pytest.raises(ScenarioValidationError) as err:
        load_scenario(json.dumps(doc))
    assert err.value.location == "controller.damping"


@pytest.mark.parametrize("name", sorted(p.name for p in SCENARIOS.glob("*.json")))
def test_fixture_round_trip(name):
    sc = load_scenario_file(SCENARIOS / name)
    again = load_scenario(dump_scenario(sc))
    assert again == sc
    assert dump_scenario(again) == dump_scenario(sc)


def test_overrides():
    doc = apply_overrides(MINIMAL, ["controller.K1=2.5", "sim.seed=7", "robot.model_error.L=0.5",
                                    "controller.damping=omni"])
    sc = load_scenario(json.dumps(doc))
    assert sc.gains.K1 == 2.5
    assert sc.sim.seed == 7
    assert sc.robot.controller_params.L == 0.5
    assert sc.robot.params.L == 1.0
    assert sc.damping_mode.value == "omni"
    # the source document is untouched
    assert "controller" not in MINIMAL
    with pytest.raises(ScenarioValidationError):
        apply_overrides(MINIMAL, ["controller.K9=1"])
    with pytest.raises(ScenarioValidationError):
        apply_overrides(MINIMAL, ["controller=1"])
    with pytest.raises(ScenarioValidationError):
        apply_overrides(MINIMAL, ["controller.K1"])


def test_extent_grid_with_obstacles():
    doc = {
        "grid": {"extent": [0.0, 0.0, 4.0, 2.0], "width": 8, "obstacles": [[1.0, 0.0, 2.0, 1.0]]},
        "bvp": {"kind": "neumann", "start": [0.25, 0.25], "target": [3.75, 0.25]},
    }
    ws = load_scenario(json.dumps(doc)).workspace
    assert (ws.width_cells, ws.height_cells) == (8, 4)
    assert ws.to_rows() == ["........", "........", "..##....", "..##...."]


def test_extent_must_hold_whole_cells():
    doc = {
        "grid": {"extent": [0.0, 0.0, 4.0, 2.1], "width": 8},
        "bvp": {"kind": "neumann", "start": [0.25, 0.25], "target": [3.75, 0.25]},
    }
    with pytest.raises(ScenarioValidationError) as err:
        load_scenario(json.dumps(doc))
    assert err.value.location == "grid.extent"
    # 4.1 / 0.1 is not exact in floating point but still counts as 41 cells
    doc["grid"] = {"extent": [-1.55, -2.55, 2.55, 1.55], "width": 41}
    doc["bvp"] = {"kind": "neumann", "start": [0.0, -1.0], "target": [1.0, 0.0]}
    ws = load_scenario(json.dumps(doc)).workspace
    assert (ws.width_cells, ws.height_cells) == (41, 41)


def test_directional_regions_compile_to_unit_vectors():
    sc = load_scenario_file(SCENARIOS / "directional_corridor.json")
    ws = sc.workspace
    mask = sc.bvp.region_mask(ws)
    lam = sc.bvp.region_field(ws)
    lower = ws.cell_index((2.0, 0.5))
    upper = ws.cell_index((2.0, 1.5))
    assert mask[lower[1], lower[0]] and mask[upper[1], upper[0]]
    assert lam[lower[1], lower[0]] == pytest.approx([1.0, 0.0])
    assert lam[upper[1], upper[0]] == pytest.approx([-1.0, 0.0], abs=1e-12)
    outside = ws.cell_index((0.5, 0.5))
    assert not mask[outside[1], outside[0]]
