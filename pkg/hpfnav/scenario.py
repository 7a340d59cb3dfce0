"""
Scenario documents: JSON in, validated immutable Scenario out.

The grid is given either as explicit rows (drawn top row first) or as an
extent with rectangular obstacles. Unknown keys are rejected so that a
typo in an experiment file fails loudly instead of silently using a default.
"""

import copy
import json
import math
from dataclasses import dataclass, fields
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

from .controller import DampingMode, GainSet
from .env import BvpKind, BvpSpec, Point, Workspace, is_admissible, validate_bvp
from .errors import ScenarioParseError, ScenarioValidationError
from .robot import ModelKind, RobotParams, RobotState
from .simulator import Disturbance, SimConfig
from .solver import SolverConfig

DEFAULT_GRID_WIDTH = 100
PARAM_KEYS = ("r", "W", "L", "M", "I", "phi_max")


def _keys(cls) -> Dict[str, None]:
    return {f.name: None for f in fields(cls)}


# Every key a scenario document may carry; None marks a leaf.
SCHEMA: Dict[str, Any] = {
    "name": None,
    "description": None,
    "grid": {k: None for k in ("width", "height", "cell_size", "rows", "origin", "extent", "obstacles")},
    "gamma": None,
    "bvp": {k: None for k in ("kind", "start", "target", "heading", "epsilon_cells", "sigma_forward",
                              "sigma_backward", "speed", "lateral_gain", "directional")},
    "robot": {"kind": None, **{k: None for k in PARAM_KEYS}, "model_error": {k: None for k in PARAM_KEYS}},
    "controller": {**_keys(GainSet), "damping": None},
    "initial": {k: None for k in ("x", "y", "theta", "v", "omega")},
    "disturbance": _keys(Disturbance),
    "sim": _keys(SimConfig),
    "solver": _keys(SolverConfig),
}


@dataclass(frozen=True)
class DirectionalRegion:
    """Cells whose centers lie in rect = (xmin, ymin, xmax, ymax) must be crossed along heading."""
    rect: Tuple[float, float, float, float]
    heading: float


@dataclass(frozen=True)
class RobotSpec:
    kind: ModelKind
    params: RobotParams
    model_error: Optional[Dict[str, float]] = None

    @property
    def controller_params(self) -> RobotParams:
        return self.params.with_errors(self.model_error)


@dataclass(frozen=True)
class Scenario:
    workspace: Workspace
    bvp: BvpSpec
    robot: RobotSpec
    gains: GainSet
    damping_mode: DampingMode
    initial_state: RobotState
    disturbance: Disturbance
    sim: SimConfig
    solver: SolverConfig
    directional_regions: Tuple[DirectionalRegion, ...] = ()
    name: str = ""
    description: str = ""


# --- parsing helpers --------------------------------------------------------

def _real(value, location: str, allow_none: bool = False) -> Optional[float]:
    if value is None and allow_none:
        return None
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ScenarioValidationError(f"expected a number, got {value!r}", location)
    value = float(value)
    if not math.isfinite(value):
        raise ScenarioValidationError("number must be finite", location)
    return value


def _vector(value, location: str, n: int = 2) -> Tuple[float, ...]:
    if not isinstance(value, list) or len(value) != n:
        raise ScenarioValidationError(f"expected a list of {n} numbers", location)
    return tuple(_real(v, f"{location}[{k}]") for k, v in enumerate(value))


def _coerce(value, default, location: str):
    """Converts a document value to the type of the dataclass default it replaces."""
    if isinstance(default, Enum):
        try:
            return type(default)(value)
        except ValueError:
            choices = ", ".join(m.value for m in type(default))
            raise ScenarioValidationError(f"expected one of {choices}, got {value!r}", location)
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ScenarioValidationError(f"expected true or false, got {value!r}", location)
        return value
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ScenarioValidationError(f"expected an integer, got {value!r}", location)
        return value
    return _real(value, location, allow_none=default is None)


def _construct(cls, kwargs: dict, location: str):
    try:
        return cls(**kwargs)
    except ValueError as e:
        raise ScenarioValidationError(str(e), location) from e


def _dataclass_block(cls, raw: dict, location: str):
    defaults = {f.name: f.default for f in fields(cls)}
    kwargs = {k: _coerce(v, defaults[k], f"{location}.{k}") for k, v in raw.items()}
    return _construct(cls, kwargs, location)


def _check_keys(doc: dict, schema: dict, location: str):
    for key, value in doc.items():
        path = f"{location}.{key}" if location else key
        if key not in schema:
            raise ScenarioValidationError(f"unknown key '{key}'", path)
        sub = schema[key]
        if sub is not None:
            if not isinstance(value, dict):
                raise ScenarioValidationError("expected an object", path)
            _check_keys(value, sub, path)


def _rect_contains(rect: Sequence[float], p: Point) -> bool:
    return rect[0] <= p[0] <= rect[2] and rect[1] <= p[1] <= rect[3]


# --- blocks -----------------------------------------------------------------

def _parse_grid(raw: dict, gamma_raw) -> Workspace:
    gamma = None
    if gamma_raw is not None:
        if not isinstance(gamma_raw, list):
            raise ScenarioValidationError("expected a list of numbers", "gamma")
        gamma = [_real(g, f"gamma[{k}]") for k, g in enumerate(gamma_raw)]

    if "rows" in raw:
        for key in ("extent", "obstacles"):
            if key in raw:
                raise ScenarioValidationError("rows and extent/obstacles are exclusive", f"grid.{key}")
        rows = raw["rows"]
        if not isinstance(rows, list) or not rows or not all(isinstance(r, str) for r in rows):
            raise ScenarioValidationError("expected a non-empty list of strings", "grid.rows")
        width = len(rows[0])
        for k, row in enumerate(rows):
            if len(row) != width:
                raise ScenarioValidationError(f"row has {len(row)} cells, expected {width}", f"grid.rows[{k}]")
            bad = set(row) - {".", "#"}
            if bad:
                raise ScenarioValidationError(f"unknown cell symbols {sorted(bad)}", f"grid.rows[{k}]")
        if "width" in raw and raw["width"] != width:
            raise ScenarioValidationError(f"width {raw['width']} does not match the rows", "grid.width")
        if "height" in raw and raw["height"] != len(rows):
            raise ScenarioValidationError(f"height {raw['height']} does not match the rows", "grid.height")
        if "cell_size" not in raw:
            raise ScenarioValidationError("cell_size is required with explicit rows", "grid.cell_size")
        cell_size = _real(raw["cell_size"], "grid.cell_size")
        origin = _vector(raw.get("origin", [0.0, 0.0]), "grid.origin")
    else:
        if "extent" not in raw:
            raise ScenarioValidationError("grid needs either rows or extent", "grid")
        xmin, ymin, xmax, ymax = _vector(raw["extent"], "grid.extent", 4)
        if not (xmax > xmin and ymax > ymin):
            raise ScenarioValidationError("extent must have positive size", "grid.extent")
        width = _coerce(raw.get("width", DEFAULT_GRID_WIDTH), 0, "grid.width")
        if width < 1:
            raise ScenarioValidationError("width must be positive", "grid.width")
        cell_size = (xmax - xmin) / width
        cells = (ymax - ymin) / cell_size
        if abs(cells - round(cells)) > 1e-9 * max(1.0, cells):
            raise ScenarioValidationError(
                f"height {ymax - ymin:g} is not a whole number of cells of size {cell_size:g}", "grid.extent")
        height = max(1, round(cells))
        origin = (xmin, ymin)
        obstacles = raw.get("obstacles", [])
        if not isinstance(obstacles, list):
            raise ScenarioValidationError("expected a list of rectangles", "grid.obstacles")
        rects = [_vector(r, f"grid.obstacles[{k}]", 4) for k, r in enumerate(obstacles)]
        rows = []
        for j in reversed(range(height)):
            row = []
            for i in range(width):
                center = (xmin + (i + 0.5) * cell_size, ymin + (j + 0.5) * cell_size)
                row.append("#" if any(_rect_contains(r, center) for r in rects) else ".")
            rows.append("".join(row))

    try:
        return Workspace.from_rows(rows, cell_size, origin, gamma)
    except ValueError as e:
        raise ScenarioValidationError(str(e), "gamma" if "gamma" in str(e) else "grid") from e


def _parse_directional(raw) -> Tuple[DirectionalRegion, ...]:
    if not isinstance(raw, list):
        raise ScenarioValidationError("expected a list of regions", "bvp.directional")
    regions = []
    for k, item in enumerate(raw):
        location = f"bvp.directional[{k}]"
        if not isinstance(item, dict) or set(item) != {"rect", "heading"}:
            raise ScenarioValidationError("a region needs exactly 'rect' and 'heading'", location)
        regions.append(DirectionalRegion(_vector(item["rect"], f"{location}.rect", 4),
                                         _real(item["heading"], f"{location}.heading")))
    return tuple(regions)


def compile_directional(ws: Workspace, regions: Sequence[DirectionalRegion]):
    """Per-cell mask and unit vectors (bottom row first); later regions win on overlap."""
    n = ws.width_cells * ws.height_cells
    mask = [False] * n
    vectors: List[Point] = [(0.0, 0.0)] * n
    for j in range(ws.height_cells):
        for i in range(ws.width_cells):
            center = ws.cell_center((i, j))
            for region in regions:
                if _rect_contains(region.rect, center):
                    mask[ws.flat((i, j))] = True
                    vectors[ws.flat((i, j))] = (math.cos(region.heading), math.sin(region.heading))
    return tuple(mask), tuple(vectors)


def _parse_bvp(raw: dict, ws: Workspace) -> Tuple[BvpSpec, Tuple[DirectionalRegion, ...]]:
    for key in ("kind", "start", "target"):
        if key not in raw:
            raise ScenarioValidationError("missing required key", f"bvp.{key}")
    kwargs: Dict[str, Any] = {
        "kind": _coerce(raw["kind"], BvpKind.NEUMANN, "bvp.kind"),
        "start": _vector(raw["start"], "bvp.start"),
        "target": _vector(raw["target"], "bvp.target"),
    }
    for key in ("heading", "epsilon_cells", "sigma_forward", "sigma_backward", "speed", "lateral_gain"):
        if key in raw:
            kwargs[key] = _real(raw[key], f"bvp.{key}")
    regions: Tuple[DirectionalRegion, ...] = ()
    if "directional" in raw:
        regions = _parse_directional(raw["directional"])
        kwargs["directional_region"], kwargs["directional_field"] = compile_directional(ws, regions)
    if kwargs["kind"] is BvpKind.DIRECTIONAL and not regions:
        raise ScenarioValidationError("directional kind needs at least one region", "bvp.directional")
    if kwargs["kind"] is BvpKind.GAMMA and ws.gamma is None:
        raise ScenarioValidationError("gamma kind needs a gamma array", "gamma")
    bvp = _construct(BvpSpec, kwargs, "bvp")
    try:
        validate_bvp(ws, bvp)
    except ValueError as e:
        raise ScenarioValidationError(str(e), "bvp") from e
    return bvp, regions


def _parse_robot(raw: dict) -> RobotSpec:
    kind = _coerce(raw.get("kind", ModelKind.DDR_KINEMATIC.value), ModelKind.DDR_KINEMATIC, "robot.kind")
    params = _dataclass_block(RobotParams, {k: raw[k] for k in PARAM_KEYS if k in raw}, "robot")
    model_error = None
    if raw.get("model_error"):
        model_error = {k: _real(v, f"robot.model_error.{k}") for k, v in raw["model_error"].items()}
        try:
            params.with_errors(model_error)
        except ValueError as e:
            raise ScenarioValidationError(str(e), "robot.model_error") from e
    return RobotSpec(kind, params, model_error)


def _parse_controller(raw: dict) -> Tuple[GainSet, DampingMode]:
    raw = dict(raw)
    damping = _coerce(raw.pop("damping", DampingMode.SELECTIVE.value), DampingMode.SELECTIVE,
                      "controller.damping")
    return _dataclass_block(GainSet, raw, "controller"), damping


def _parse_initial(raw: dict, ws: Workspace, bvp: BvpSpec) -> RobotState:
    x = _real(raw.get("x", bvp.start[0]), "initial.x")
    y = _real(raw.get("y", bvp.start[1]), "initial.y")
    state = RobotState(x, y, _real(raw.get("theta", 0.0), "initial.theta"),
                       _real(raw.get("v", 0.0), "initial.v"), _real(raw.get("omega", 0.0), "initial.omega"))
    if not is_admissible(ws, state.position):
        raise ScenarioValidationError(f"initial position ({x:.4g}, {y:.4g}) is not in a Free cell", "initial")
    return state


def read_document(text: str) -> dict:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise ScenarioParseError(e.msg, line=e.lineno) from e
    if not isinstance(doc, dict):
        raise ScenarioParseError("scenario document must be a JSON object", line=1)
    return doc


def scenario_from_dict(doc: dict) -> Scenario:
    _check_keys(doc, SCHEMA, "")
    for key in ("grid", "bvp"):
        if key not in doc:
            raise ScenarioValidationError("missing required block", key)
    for key in ("name", "description"):
        if key in doc and not isinstance(doc[key], str):
            raise ScenarioValidationError("expected a string", key)

    ws = _parse_grid(doc["grid"], doc.get("gamma"))
    bvp, regions = _parse_bvp(doc["bvp"], ws)
    robot = _parse_robot(doc.get("robot", {}))
    gains, damping = _parse_controller(doc.get("controller", {}))
    return Scenario(
        workspace=ws,
        bvp=bvp,
        robot=robot,
        gains=gains,
        damping_mode=damping,
        initial_state=_parse_initial(doc.get("initial", {}), ws, bvp),
        disturbance=_dataclass_block(Disturbance, doc.get("disturbance", {}), "disturbance"),
        sim=_dataclass_block(SimConfig, doc.get("sim", {}), "sim"),
        solver=_dataclass_block(SolverConfig, doc.get("solver", {}), "solver"),
        directional_regions=regions,
        name=doc.get("name", ""),
        description=doc.get("description", ""),
    )


def load_scenario(text: str, overrides: Optional[Sequence[str]] = None) -> Scenario:
    doc = read_document(text)
    if overrides:
        doc = apply_overrides(doc, overrides)
    return scenario_from_dict(doc)


def load_scenario_file(path: Union[str, Path], overrides: Optional[Sequence[str]] = None) -> Scenario:
    return load_scenario(Path(path).read_text(encoding="utf-8"), overrides)


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_overrides(doc: dict, overrides: Sequence[str]) -> dict:
    """Applies dotted key=value overrides to a copy of a raw scenario document."""
    doc = copy.deepcopy(doc)
    for item in overrides:
        key, sep, value = item.partition("=")
        if not sep or not key:
            raise ScenarioValidationError(f"override '{item}' is not of the form key=value", item)
        parts = key.split(".")
        schema: Any = SCHEMA
        node = doc
        for depth, part in enumerate(parts):
            if not isinstance(schema, dict) or part not in schema:
                raise ScenarioValidationError(f"unknown key '{part}'", key)
            schema = schema[part]
            if depth == len(parts) - 1:
                if schema is not None:
                    raise ScenarioValidationError("override must name a value, not a block", key)
                node[part] = _parse_value(value)
            else:
                node = node.setdefault(part, {})
                if not isinstance(node, dict):
                    raise ScenarioValidationError("expected an object", ".".join(parts[:depth + 1]))
    return doc


def _dataclass_dict(obj) -> dict:
    out = {}
    for f in fields(obj):
        value = getattr(obj, f.name)
        out[f.name] = value.value if isinstance(value, Enum) else value
    return out


def scenario_to_dict(sc: Scenario) -> dict:
    ws = sc.workspace
    doc: Dict[str, Any] = {}
    if sc.name:
        doc["name"] = sc.name
    if sc.description:
        doc["description"] = sc.description
    doc["grid"] = {
        "width": ws.width_cells,
        "height": ws.height_cells,
        "cell_size": ws.cell_size,
        "origin": list(ws.origin),
        "rows": ws.to_rows(),
    }
    if ws.gamma is not None:
        doc["gamma"] = ws.gamma_rows_top_first()
    bvp = sc.bvp
    doc["bvp"] = {
        "kind": bvp.kind.value,
        "start": list(bvp.start),
        "target": list(bvp.target),
        "heading": bvp.heading,
        "epsilon_cells": bvp.epsilon_cells,
        "sigma_forward": bvp.sigma_forward,
        "sigma_backward": bvp.sigma_backward,
        "speed": bvp.speed,
        "lateral_gain": bvp.lateral_gain,
    }
    if sc.directional_regions:
        doc["bvp"]["directional"] = [{"rect": list(r.rect), "heading": r.heading}
                                     for r in sc.directional_regions]
    doc["robot"] = {"kind": sc.robot.kind.value, **_dataclass_dict(sc.robot.params)}
    if sc.robot.model_error:
        doc["robot"]["model_error"] = dict(sc.robot.model_error)
    doc["controller"] = {**_dataclass_dict(sc.gains), "damping": sc.damping_mode.value}
    s = sc.initial_state
    doc["initial"] = {"x": s.x, "y": s.y, "theta": s.theta, "v": s.v, "omega": s.omega}
    doc["disturbance"] = _dataclass_dict(sc.disturbance)
    doc["sim"] = _dataclass_dict(sc.sim)
    doc["solver"] = _dataclass_dict(sc.solver)
    return doc


def dump_scenario(sc: Scenario) -> str:
    """Serializes every field explicitly; floats keep their shortest round-trip repr."""
    return json.dumps(scenario_to_dict(sc), indent=2)
