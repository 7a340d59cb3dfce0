"""
Workspaces and geometric queries.

A workspace is a raster of square cells. Row 0 is the bottom of the
workspace and cell (i, j) covers [x0 + i*h, x0 + (i+1)*h) x [y0 + j*h, y0 + (j+1)*h).
Everything outside the grid counts as Obstacle.
"""

import math
from dataclasses import dataclass
from enum import Enum
from functools import cached_property
from typing import List, Optional, Tuple

import numpy as np
from scipy import ndimage

from .errors import SnapError

Point = Tuple[float, float]
Cell = Tuple[int, int]


class CellClass(str, Enum):
    FREE = "."
    OBSTACLE = "#"


class BvpKind(str, Enum):
    NEUMANN = "neumann"
    ORIENTATION = "orientation"
    DIRECTIONAL = "directional"
    GAMMA = "gamma"
    UNIFORM = "uniform"
    CENTERLINE = "centerline"

    @property
    def is_analytic(self) -> bool:
        return self in (BvpKind.UNIFORM, BvpKind.CENTERLINE)


@dataclass(frozen=True)
class Workspace:
    width_cells: int
    height_cells: int
    cell_size: float
    cells: Tuple[CellClass, ...]
    gamma: Optional[Tuple[float, ...]] = None
    origin: Point = (0.0, 0.0)

    def __post_init__(self):
        if self.width_cells <= 0 or self.height_cells <= 0:
            raise ValueError("grid dimensions must be positive")
        if not (math.isfinite(self.cell_size) and self.cell_size > 0):
            raise ValueError(f"cell_size must be positive, got {self.cell_size}")
        n = self.width_cells * self.height_cells
        if len(self.cells) != n:
            raise ValueError(f"expected {n} cells, got {len(self.cells)}")
        if CellClass.FREE not in self.cells:
            raise ValueError("workspace has no Free cell")
        if self.gamma is not None:
            if len(self.gamma) != n:
                raise ValueError(f"expected {n} gamma values, got {len(self.gamma)}")
            if any(not (0.0 <= g <= 1.0) for g in self.gamma):
                raise ValueError("gamma values must lie in [0, 1]")

    @classmethod
    def from_rows(cls, rows: List[str], cell_size: float, origin: Point = (0.0, 0.0),
                  gamma: Optional[List[float]] = None) -> "Workspace":
        """Builds a workspace from text rows drawn top row first ('.' free, '#' obstacle)."""
        height = len(rows)
        width = len(rows[0]) if rows else 0
        cells = []
        for row in reversed(rows):
            cells.extend(CellClass(ch) for ch in row)
        gamma_bottom_first = None
        if gamma is not None:
            gamma_rows = [gamma[k * width:(k + 1) * width] for k in range(height)]
            gamma_bottom_first = tuple(float(g) for row in reversed(gamma_rows) for g in row)
        return cls(width, height, float(cell_size), tuple(cells), gamma_bottom_first,
                   (float(origin[0]), float(origin[1])))

    @classmethod
    def free_space(cls, width: int, height: int, cell_size: float,
                   origin: Point = (0.0, 0.0)) -> "Workspace":
        return cls(width, height, float(cell_size), (CellClass.FREE,) * (width * height), None,
                   (float(origin[0]), float(origin[1])))

    def to_rows(self) -> List[str]:
        rows = []
        for j in range(self.height_cells):
            start = j * self.width_cells
            rows.append("".join(c.value for c in self.cells[start:start + self.width_cells]))
        return list(reversed(rows))

    def gamma_rows_top_first(self) -> Optional[List[float]]:
        if self.gamma is None:
            return None
        w = self.width_cells
        rows = [list(self.gamma[j * w:(j + 1) * w]) for j in range(self.height_cells)]
        return [g for row in reversed(rows) for g in row]

    @cached_property
    def free_mask(self) -> np.ndarray:
        mask = np.array([c is CellClass.FREE for c in self.cells], dtype=bool)
        return mask.reshape(self.height_cells, self.width_cells)

    @cached_property
    def gamma_array(self) -> Optional[np.ndarray]:
        if self.gamma is None:
            return None
        return np.array(self.gamma, dtype=float).reshape(self.height_cells, self.width_cells)

    @property
    def extent(self) -> Tuple[float, float, float, float]:
        x0, y0 = self.origin
        return (x0, y0, x0 + self.width_cells * self.cell_size, y0 + self.height_cells * self.cell_size)

    def cell_index(self, p: Point) -> Optional[Cell]:
        """(i, j) of the cell containing p by the floor rule, None outside the grid."""
        x0, y0 = self.origin
        i = math.floor((p[0] - x0) / self.cell_size)
        j = math.floor((p[1] - y0) / self.cell_size)
        if 0 <= i < self.width_cells and 0 <= j < self.height_cells:
            return (i, j)
        return None

    def cell_center(self, cell: Cell) -> Point:
        x0, y0 = self.origin
        return (x0 + (cell[0] + 0.5) * self.cell_size, y0 + (cell[1] + 0.5) * self.cell_size)

    def flat(self, cell: Cell) -> int:
        return cell[1] * self.width_cells + cell[0]

    def is_free_cell(self, i: int, j: int) -> bool:
        if 0 <= i < self.width_cells and 0 <= j < self.height_cells:
            return self.cells[j * self.width_cells + i] is CellClass.FREE
        return False


@dataclass(frozen=True)
class BvpSpec:
    kind: BvpKind
    start: Point
    target: Point
    heading: float = 0.0
    epsilon_cells: float = 1.0
    directional_region: Optional[Tuple[bool, ...]] = None
    directional_field: Optional[Tuple[Point, ...]] = None
    sigma_forward: float = 1.0
    sigma_backward: float = 0.05
    speed: float = 1.0
    lateral_gain: float = 1.0

    def __post_init__(self):
        if not math.isfinite(self.heading):
            raise ValueError("heading must be finite")
        if self.epsilon_cells <= 0:
            raise ValueError("epsilon_cells must be positive")
        if self.sigma_forward <= 0 or self.sigma_backward <= 0:
            raise ValueError("sigma_forward and sigma_backward must be positive")
        if (self.directional_region is None) != (self.directional_field is None):
            raise ValueError("directional_region and directional_field go together")
        if self.directional_region is not None:
            if len(self.directional_region) != len(self.directional_field):
                raise ValueError("directional_field must have one vector per cell")
            for inside, vec in zip(self.directional_region, self.directional_field):
                if inside and abs(math.hypot(vec[0], vec[1]) - 1.0) > 1e-9:
                    raise ValueError(f"directional vector {vec} is not a unit vector")

    @property
    def heading_vector(self) -> Point:
        return (math.cos(self.heading), math.sin(self.heading))

    def region_mask(self, ws: Workspace) -> np.ndarray:
        if self.directional_region is None:
            return np.zeros((ws.height_cells, ws.width_cells), dtype=bool)
        return np.array(self.directional_region, dtype=bool).reshape(ws.height_cells, ws.width_cells)

    def region_field(self, ws: Workspace) -> np.ndarray:
        if self.directional_field is None:
            return np.zeros((ws.height_cells, ws.width_cells, 2))
        return np.array(self.directional_field, dtype=float).reshape(ws.height_cells, ws.width_cells, 2)


def cell_at(ws: Workspace, p: Point) -> CellClass:
    cell = ws.cell_index(p)
    if cell is None:
        return CellClass.OBSTACLE
    return ws.cells[ws.flat(cell)]


def is_admissible(ws: Workspace, p: Point) -> bool:
    return cell_at(ws, p) is CellClass.FREE


def snap_to_free(ws: Workspace, p: Point) -> Cell:
    """Nearest Free cell to p; farther than one cell is an error."""
    cell = ws.cell_index(p)
    if cell is not None and ws.cells[ws.flat(cell)] is CellClass.FREE:
        return cell
    x0, y0 = ws.origin
    fi = math.floor((p[0] - x0) / ws.cell_size)
    fj = math.floor((p[1] - y0) / ws.cell_size)
    best = None
    for j in range(fj - 2, fj + 3):
        for i in range(fi - 2, fi + 3):
            if not ws.is_free_cell(i, j):
                continue
            cx, cy = ws.cell_center((i, j))
            d = math.hypot(cx - p[0], cy - p[1])
            if best is None or (d, j, i) < best:
                best = (d, j, i)
    if best is None or best[0] > ws.cell_size:
        raise SnapError(f"point ({p[0]:.4g}, {p[1]:.4g}) is more than one cell away from free space")
    return (best[2], best[1])


def clearance_map(ws: Workspace) -> np.ndarray:
    """Distance in meters from each Free cell center to the nearest Obstacle cell or the grid border."""
    padded = np.pad(ws.free_mask, 1, constant_values=False)
    dist = ndimage.distance_transform_edt(padded)[1:-1, 1:-1]
    clearance = (dist - 0.5) * ws.cell_size
    clearance[~ws.free_mask] = 0.0
    return clearance


def clearance_at(ws: Workspace, clearance: np.ndarray, p: Point) -> float:
    cell = ws.cell_index(p)
    if cell is None:
        return 0.0
    return float(clearance[cell[1], cell[0]])


def validate_bvp(ws: Workspace, bvp: BvpSpec):
    """Start and target lie in distinct Free cells."""
    for name, p in (("start", bvp.start), ("target", bvp.target)):
        if not is_admissible(ws, p):
            raise ValueError(f"{name} ({p[0]:.4g}, {p[1]:.4g}) is not in a Free cell")
    if ws.cell_index(bvp.start) == ws.cell_index(bvp.target):
        raise ValueError("start and target map to the same cell")
    n = ws.width_cells * ws.height_cells
    if bvp.directional_region is not None and len(bvp.directional_region) != n:
        raise ValueError(f"directional_region must have {n} cells")
