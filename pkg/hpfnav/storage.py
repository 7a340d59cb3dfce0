import json
import logging
import math
import os
from pathlib import Path
from typing import List, Sequence, Tuple, Union

import aiofiles
import numpy as np

from .simulator import COLUMNS, Metrics, ReferencePath, Trajectory
from .solver import GuidanceField, PotentialField
from .utils import fmt17

PathLike = Union[str, Path]


def atomic_write_text(path: PathLike, text: str):
    """Writes text through a .tmp sibling and os.replace so readers never see a partial file."""
    path = str(path)
    temp_path = path + ".tmp"
    with open(temp_path, "w", encoding="utf-8", newline="\n") as f:
        f.write(text)
    os.replace(temp_path, path)


def field_values(field: GuidanceField) -> np.ndarray:
    """Node values on the grid; analytic fields are sampled at the Free cell centers."""
    if isinstance(field, PotentialField):
        return field.values
    ws = field.workspace
    values = np.full((ws.height_cells, ws.width_cells), np.nan)
    for j, i in zip(*np.nonzero(ws.free_mask)):
        values[j, i] = field.value_at(ws.cell_center((int(i), int(j))))
    return values


def format_field_csv(field: GuidanceField) -> str:
    """
    Field export: `width,height,cell_size` on the first line, then one line
    per grid row starting with the bottom row. Obstacle cells are NaN.
    """
    ws = field.workspace
    lines = [f"{ws.width_cells},{ws.height_cells},{fmt17(ws.cell_size)}"]
    for row in field_values(field).tolist():
        lines.append(",".join(fmt17(v) for v in row))
    return "\n".join(lines) + "\n"


def parse_field_csv(text: str) -> Tuple[int, int, float, np.ndarray]:
    lines = [line for line in text.splitlines() if line.strip()]
    if not lines:
        raise ValueError("empty field file")
    head = lines[0].split(",")
    if len(head) != 3:
        raise ValueError("field header must be width,height,cell_size")
    width, height, cell_size = int(head[0]), int(head[1]), float(head[2])
    if len(lines) != height + 1:
        raise ValueError(f"expected {height} value rows, found {len(lines) - 1}")
    values = np.empty((height, width))
    for j, line in enumerate(lines[1:]):
        cells = line.split(",")
        if len(cells) != width:
            raise ValueError(f"row {j} has {len(cells)} values, expected {width}")
        # float() accepts NaN and Infinity as written by fmt17
        values[j] = [float(c) for c in cells]
    return width, height, cell_size, values


def read_field_csv(path: PathLike) -> Tuple[int, int, float, np.ndarray]:
    with open(path, "r", encoding="utf-8") as f:
        return parse_field_csv(f.read())


def format_trajectory_csv(traj: Trajectory) -> str:
    lines = [",".join(COLUMNS)]
    data = np.column_stack([traj[name] for name in COLUMNS]) if len(traj) else np.empty((0, len(COLUMNS)))
    for row in data.tolist():
        lines.append(",".join(fmt17(v) for v in row))
    return "\n".join(lines) + "\n"


def format_refpath_csv(ref: ReferencePath) -> str:
    lines = ["t,x,y"]
    for t, (x, y) in zip(ref.times.tolist(), ref.points.tolist()):
        lines.append(f"{fmt17(t)},{fmt17(x)},{fmt17(y)}")
    return "\n".join(lines) + "\n"


def _json_safe(value):
    if isinstance(value, float) and not math.isfinite(value):
        return None
    if isinstance(value, (list, tuple)):
        return [_json_safe(v) for v in value]
    if isinstance(value, np.generic):
        return _json_safe(value.item())
    return value


def format_metrics_json(metrics: Metrics) -> str:
    data = {k: _json_safe(v) for k, v in metrics.to_dict().items()}
    return json.dumps(data, indent=2, allow_nan=False) + "\n"


def format_csv_row(values: Sequence) -> str:
    out = []
    for v in values:
        if isinstance(v, bool):
            out.append("true" if v else "false")
        elif v is None:
            out.append("")
        elif isinstance(v, float):
            out.append(fmt17(v))
        else:
            out.append(str(v))
    return ",".join(out) + "\n"


class Storage:
    """Artifacts of one CLI invocation, all under one output directory."""

    def __init__(self, out_dir: PathLike):
        self.out_dir = Path(out_dir)
        self.out_dir.mkdir(parents=True, exist_ok=True)

    def path(self, name: str) -> Path:
        return self.out_dir / name

    def write_text(self, name: str, text: str) -> Path:
        path = self.path(name)
        atomic_write_text(path, text)
        logging.info(f"Wrote {path}")
        return path

    def write_field(self, field: GuidanceField, name: str = "field.csv") -> Path:
        return self.write_text(name, format_field_csv(field))

    def write_trajectory(self, traj: Trajectory, name: str = "trajectory.csv") -> Path:
        return self.write_text(name, format_trajectory_csv(traj))

    def write_refpath(self, ref: ReferencePath, name: str = "refpath.csv") -> Path:
        return self.write_text(name, format_refpath_csv(ref))

    def write_metrics(self, metrics: Metrics, name: str = "metrics.json") -> Path:
        return self.write_text(name, format_metrics_json(metrics))

    async def start_table(self, name: str, header: List[str]) -> Path:
        """Truncates name and writes its CSV header."""
        path = self.path(name)
        async with aiofiles.open(path, mode="w", encoding="utf-8", newline="\n") as f:
            await f.write(",".join(header) + "\n")
        return path

    async def append_row(self, name: str, values: Sequence):
        async with aiofiles.open(self.path(name), mode="a", encoding="utf-8", newline="\n") as f:
            await f.write(format_csv_row(values))
