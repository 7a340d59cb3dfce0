"""
Harmonic potential fields on workspace grids.

All four boundary-value problems share one discrete operator: a 5-point
stencil on cell centers with a conductance per face. A face to an Obstacle
cell or to the outside of the grid either carries zero flux (mirror ghost
node, Neumann) or couples to a Dirichlet ghost value. Fields are relaxed by
lexicographic successive over-relaxation until the normalized residual

    r_i = (sum_k c_k u_k) / (sum_k c_k) - V_i

drops below the tolerance on every non-pinned cell.
"""

import logging
import math
from abc import ABC, abstractmethod
from collections import deque
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Dict, List, Optional, Tuple

import numpy as np
from scipy import sparse

from .env import BvpKind, BvpSpec, Cell, Point, Workspace, is_admissible, snap_to_free
from .errors import (AllZeroGamma, DisconnectedDomain, NonConvergence, OffsetCellInvalid,
                     PointNotAdmissible)

# Face order used by every (H, W, 4) array: east, west, north, south.
DIRECTIONS = ((1, 0), (-1, 0), (0, 1), (0, -1))


@dataclass(frozen=True)
class SolverConfig:
    relaxation_factor: float = 1.8
    tolerance: float = 1e-8
    max_iterations: int = 200000
    picard_max: int = 50
    picard_relax: float = 1.0

    def __post_init__(self):
        if not (0.0 < self.relaxation_factor < 2.0):
            raise ValueError(f"relaxation_factor must lie in (0, 2), got {self.relaxation_factor}")
        if not self.tolerance > 0:
            raise ValueError("tolerance must be positive")
        if self.max_iterations < 1 or self.picard_max < 1:
            raise ValueError("max_iterations and picard_max must be at least 1")
        if not (0.0 < self.picard_relax <= 1.0):
            raise ValueError(f"picard_relax must lie in (0, 1], got {self.picard_relax}")


def _neighbor(a: np.ndarray, di: int, dj: int, fill) -> np.ndarray:
    """Value of the (i+di, j+dj) neighbor at every cell; fill outside the grid."""
    out = np.full_like(a, fill)
    H, W = a.shape[:2]
    dst = (slice(max(0, -dj), H - max(0, dj)), slice(max(0, -di), W - max(0, di)))
    src = (slice(max(0, dj), H - max(0, -dj)), slice(max(0, di), W - max(0, -di)))
    out[dst] = a[src]
    return out


def harmonic_mean(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    positive = (a > 0) & (b > 0)
    total = np.where(positive, a + b, 1.0)
    return np.where(positive, 2.0 * a * b / total, 0.0)


@dataclass(frozen=True, eq=False)
class Operator:
    """Face conductances of the discrete problem plus its Dirichlet ghost coupling."""

    conductance: np.ndarray
    boundary: np.ndarray
    boundary_value: float = 0.0

    @cached_property
    def total(self) -> np.ndarray:
        return self.conductance.sum(axis=-1) + self.boundary.sum(axis=-1)

    @cached_property
    def active(self) -> np.ndarray:
        return self.total > 0

    @cached_property
    def linear_map(self) -> Tuple[sparse.csr_matrix, np.ndarray]:
        """(A, b) such that the Jacobi average of every active cell is (A @ V + b)."""
        H, W = self.total.shape
        rows, cols, data = [], [], []
        offsets = [W * dj + di for di, dj in DIRECTIONS]
        jj, ii = np.nonzero(self.active)
        flat = jj * W + ii
        for d, offset in enumerate(offsets):
            c = self.conductance[jj, ii, d]
            keep = c > 0
            rows.append(flat[keep])
            cols.append(flat[keep] + offset)
            data.append(c[keep] / self.total[jj, ii][keep])
        A = sparse.csr_matrix(
            (np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))),
            shape=(H * W, H * W),
        )
        b = np.zeros(H * W)
        safe_total = np.where(self.active, self.total, 1.0)
        b_grid = np.where(self.active, self.boundary.sum(axis=-1) * self.boundary_value / safe_total, 0.0)
        b[:] = b_grid.ravel()
        return A, b

    def connected(self) -> np.ndarray:
        """(H, W, 4) mask of faces joining two active cells."""
        out = np.zeros(self.conductance.shape, dtype=bool)
        for d, (di, dj) in enumerate(DIRECTIONS):
            out[..., d] = (self.conductance[..., d] > 0) & self.active & _neighbor(self.active, di, dj, False)
        return out


def build_operator(ws: Workspace, cell_weight: Optional[np.ndarray] = None,
                   boundary_value: Optional[float] = None) -> Operator:
    free = ws.free_mask
    weight = np.ones(free.shape) if cell_weight is None else np.asarray(cell_weight, dtype=float)
    weight = np.where(free, weight, 0.0)
    conductance = np.zeros(free.shape + (4,))
    boundary = np.zeros(free.shape + (4,))
    for d, (di, dj) in enumerate(DIRECTIONS):
        nb_free = _neighbor(free, di, dj, False)
        nb_weight = _neighbor(weight, di, dj, 0.0)
        conductance[..., d] = np.where(free & nb_free, harmonic_mean(weight, nb_weight), 0.0)
        if boundary_value is not None:
            boundary[..., d] = np.where(free & ~nb_free, weight, 0.0)
    return Operator(conductance, boundary, 0.0 if boundary_value is None else float(boundary_value))


class GuidanceField(ABC):
    """A navigation potential V with its negative gradient as guidance."""

    workspace: Workspace
    target: Optional[Point]
    kind: Optional[BvpKind]

    @abstractmethod
    def gradient_at(self, p: Point) -> Point:
        """-grad V at p."""

    @abstractmethod
    def value_at(self, p: Point) -> float:
        """V at p."""

    @property
    @abstractmethod
    def max_gradient_magnitude(self) -> float:
        pass

    def _require_admissible(self, p: Point):
        if not is_admissible(self.workspace, p):
            raise PointNotAdmissible(f"({p[0]:.6g}, {p[1]:.6g}) is outside the admissible space")


@dataclass(frozen=True, eq=False)
class PotentialField(GuidanceField):
    workspace: Workspace
    values: np.ndarray
    pinned: np.ndarray
    residual: float
    iterations_used: int
    tolerance: float
    operator: Operator
    kind: Optional[BvpKind] = None
    start: Optional[Point] = None
    target: Optional[Point] = None
    picard_converged: bool = True
    picard_iterations: int = 0

    @property
    def active(self) -> np.ndarray:
        return self.operator.active

    @cached_property
    def nodal_guidance(self) -> Tuple[np.ndarray, np.ndarray]:
        """-grad V at every node: central differences, one-sided next to walls, NaN on inactive nodes."""
        return nodal_guidance(self.values, self.operator, self.workspace.cell_size)

    @cached_property
    def _lookup(self):
        gx, gy = self.nodal_guidance
        return gx.tolist(), gy.tolist(), self.values.tolist(), self.active.tolist()

    @property
    def max_gradient_magnitude(self) -> float:
        gx, gy = self.nodal_guidance
        mag = np.hypot(gx, gy)
        return float(np.nanmax(mag)) if np.any(self.active) else 0.0

    def _bilinear(self, p: Point, grids) -> List[float]:
        ws = self.workspace
        x0, y0 = ws.origin
        h = ws.cell_size
        sx = (p[0] - x0) / h - 0.5
        sy = (p[1] - y0) / h - 0.5
        i0 = math.floor(sx)
        j0 = math.floor(sy)
        tx = sx - i0
        ty = sy - j0
        active = self._lookup[3]
        acc = [0.0] * len(grids)
        total = 0.0
        for di, wx in ((0, 1.0 - tx), (1, tx)):
            i = i0 + di
            if wx == 0.0 or not (0 <= i < ws.width_cells):
                continue
            for dj, wy in ((0, 1.0 - ty), (1, ty)):
                j = j0 + dj
                if wy == 0.0 or not (0 <= j < ws.height_cells) or not active[j][i]:
                    continue
                w = wx * wy
                total += w
                for k, grid in enumerate(grids):
                    acc[k] += w * grid[j][i]
        if total == 0.0:
            return acc
        return [a / total for a in acc]

    def gradient_at(self, p: Point) -> Point:
        self._require_admissible(p)
        gx, gy = self._lookup[0], self._lookup[1]
        out = self._bilinear(p, (gx, gy))
        return (out[0], out[1])

    def value_at(self, p: Point) -> float:
        return self._bilinear(p, (self._lookup[2],))[0]

    def __getstate__(self):
        state = dict(self.__dict__)
        for key in ("nodal_guidance", "_lookup"):
            state.pop(key, None)
        return state

    def __setstate__(self, state):
        object.__setattr__(self, "__dict__", state)


def nodal_guidance(values: np.ndarray, op: Operator, h: float) -> Tuple[np.ndarray, np.ndarray]:
    connected = op.connected()
    V = np.where(op.active, values, 0.0)
    out = []
    for plus, minus, (di, dj) in ((0, 1, (1, 0)), (2, 3, (0, 1))):
        vp = _neighbor(V, di, dj, 0.0)
        vm = _neighbor(V, -di, -dj, 0.0)
        cp = connected[..., plus]
        cm = connected[..., minus]
        grad = np.where(cp & cm, (vp - vm) / (2.0 * h),
                        np.where(cp, (vp - V) / h, np.where(cm, (V - vm) / h, 0.0)))
        out.append(np.where(op.active, -grad, np.nan))
    return out[0], out[1]


def _relaxation_rows(op: Operator, pinned: np.ndarray):
    A, b = op.linear_map
    H, W = pinned.shape
    free_rows = (op.active & ~pinned).ravel()
    rows = []
    for idx in np.flatnonzero(free_rows):
        start, end = A.indptr[idx], A.indptr[idx + 1]
        rows.append((int(idx), float(b[idx]),
                     list(zip(A.indices[start:end].tolist(), A.data[start:end].tolist()))))
    return rows


def _residual(values: np.ndarray, op: Operator, pinned: np.ndarray) -> float:
    A, b = op.linear_map
    mask = (op.active & ~pinned).ravel()
    if not np.any(mask):
        return 0.0
    V = np.where(np.isnan(values), 0.0, values)
    r = A @ V + b - V
    return float(np.max(np.abs(r[mask])))


def _sweep(values: List[float], rows, omega: float):
    for idx, offset, neighbors in rows:
        acc = offset
        for k, w in neighbors:
            acc += w * values[k]
        values[idx] += omega * (acc - values[idx])


def _relax_to_tolerance(values: List[float], op: Operator, pinned: np.ndarray,
                        cfg: SolverConfig) -> Tuple[float, int]:
    rows = _relaxation_rows(op, pinned)
    residual = _residual(np.asarray(values), op, pinned)
    iterations = 0
    while residual > cfg.tolerance and iterations < cfg.max_iterations:
        _sweep(values, rows, cfg.relaxation_factor)
        iterations += 1
        residual = _residual(np.asarray(values), op, pinned)
    if residual > cfg.tolerance:
        raise NonConvergence(residual, iterations)
    return residual, iterations


def _check_connected(op: Operator, source: Cell, sink: Cell) -> bool:
    """Breadth-first search over positive-conductance faces."""
    H, W = op.active.shape
    cond = op.conductance
    seen = {source}
    queue = deque([source])
    while queue:
        i, j = queue.popleft()
        if (i, j) == sink:
            return True
        for d, (di, dj) in enumerate(DIRECTIONS):
            if cond[j, i, d] <= 0:
                continue
            nxt = (i + di, j + dj)
            if nxt not in seen:
                seen.add(nxt)
                queue.append(nxt)
    return False


def solve_pinned(ws: Workspace, pins: Dict[Cell, float], cfg: SolverConfig,
                 conductance: Optional[np.ndarray] = None, boundary_value: Optional[float] = None,
                 initial: Optional[np.ndarray] = None, kind: Optional[BvpKind] = None,
                 operator: Optional[Operator] = None) -> PotentialField:
    """Relaxes the pinned problem on ws; cell weights and a Dirichlet value on the boundary are optional."""
    op = operator or build_operator(ws, conductance, boundary_value)
    H, W = ws.height_cells, ws.width_cells
    pinned = np.zeros((H, W), dtype=bool)
    for (i, j) in pins:
        pinned[j, i] = True
    if initial is not None:
        start_values = np.where(op.active, initial, np.nan)
    else:
        fill = float(np.mean(list(pins.values()))) if pins else (boundary_value or 0.0)
        start_values = np.where(op.active, fill, np.nan)
    for (i, j), value in pins.items():
        start_values[j, i] = value
    values = start_values.ravel().tolist()
    residual, iterations = _relax_to_tolerance(values, op, pinned, cfg)
    return PotentialField(
        workspace=ws,
        values=np.array(values).reshape(H, W),
        pinned=pinned,
        residual=residual,
        iterations_used=iterations,
        tolerance=cfg.tolerance,
        operator=op,
        kind=kind,
    )


def _endpoint_pins(ws: Workspace, bvp: BvpSpec) -> Tuple[Cell, Cell]:
    return snap_to_free(ws, bvp.start), snap_to_free(ws, bvp.target)


def _finish(field: PotentialField, ws: Workspace, bvp: BvpSpec, start: Optional[Cell],
            target: Cell, **extra) -> PotentialField:
    solved = replace(
        field,
        kind=bvp.kind,
        start=ws.cell_center(start) if start is not None else None,
        target=ws.cell_center(target),
        **extra,
    )
    logging.info(
        f"Solved {bvp.kind.value} field on {ws.width_cells}x{ws.height_cells} grid: "
        f"{solved.iterations_used} sweeps, residual {solved.residual:.3e}"
    )
    return solved


def solve_neumann(ws: Workspace, bvp: BvpSpec, cfg: SolverConfig) -> PotentialField:
    start, target = _endpoint_pins(ws, bvp)
    op = build_operator(ws)
    if not _check_connected(op, start, target):
        raise DisconnectedDomain("target is unreachable from start through Free cells")
    field = solve_pinned(ws, {start: 1.0, target: 0.0}, cfg, operator=op)
    return _finish(field, ws, bvp, start, target)


def orientation_offset_cell(ws: Workspace, bvp: BvpSpec) -> Cell:
    target = snap_to_free(ws, bvp.target)
    tx, ty = ws.cell_center(target)
    hx, hy = bvp.heading_vector
    eps = bvp.epsilon_cells * ws.cell_size
    offset = ws.cell_index((tx + eps * hx, ty + eps * hy))
    if offset is None or not ws.is_free_cell(*offset):
        raise OffsetCellInvalid("orientation offset cell is not a Free cell")
    if offset == target:
        raise OffsetCellInvalid("orientation offset cell coincides with the target cell; increase epsilon_cells")
    return offset


def solve_orientation(ws: Workspace, bvp: BvpSpec, cfg: SolverConfig) -> PotentialField:
    start, target = _endpoint_pins(ws, bvp)
    offset = orientation_offset_cell(ws, bvp)
    op = build_operator(ws)
    if not _check_connected(op, start, target):
        raise DisconnectedDomain("target is unreachable from start through Free cells")
    field = solve_pinned(ws, {start: 1.0, target: 0.0, offset: 1.0}, cfg, operator=op)
    return _finish(field, ws, bvp, start, target)


def solve_gamma(ws: Workspace, bvp: BvpSpec, cfg: SolverConfig) -> PotentialField:
    if ws.gamma_array is None:
        raise ValueError("gamma-weighted problem needs a workspace gamma map")
    start, target = _endpoint_pins(ws, bvp)
    op = build_operator(ws, ws.gamma_array)
    if not _check_connected(op, start, target):
        raise AllZeroGamma("no positive-conductance path joins start and target")
    field = solve_pinned(ws, {start: 1.0, target: 0.0}, cfg, operator=op)
    return _finish(field, ws, bvp, start, target)


def _assign_sigma(guidance: Tuple[np.ndarray, np.ndarray], region: np.ndarray, lam: np.ndarray,
                  bvp: BvpSpec) -> np.ndarray:
    gx, gy = guidance
    along = np.nan_to_num(gx) * lam[..., 0] + np.nan_to_num(gy) * lam[..., 1]
    sigma = np.where(along > 0, bvp.sigma_forward, bvp.sigma_backward)
    return np.where(region, sigma, 1.0)


def solve_directional(ws: Workspace, bvp: BvpSpec, cfg: SolverConfig) -> PotentialField:
    target = snap_to_free(ws, bvp.target)
    region = bvp.region_mask(ws) & ws.free_mask
    lam = bvp.region_field(ws)
    sigma = np.where(region, bvp.sigma_forward, 1.0)
    op = build_operator(ws, sigma, boundary_value=1.0)
    if not op.active[target[1], target[0]]:
        raise DisconnectedDomain("target cell is isolated")
    field = solve_pinned(ws, {target: 0.0}, cfg, operator=op)
    iterations = field.iterations_used
    blended = field.values
    converged = False
    passes = 1
    while True:
        new_sigma = _assign_sigma(nodal_guidance(blended, field.operator, ws.cell_size), region, lam, bvp)
        if np.array_equal(new_sigma, sigma):
            converged = True
            break
        if passes >= cfg.picard_max:
            break
        changed = int(np.count_nonzero(new_sigma != sigma))
        sigma = new_sigma
        op = build_operator(ws, sigma, boundary_value=1.0)
        field = solve_pinned(ws, {target: 0.0}, cfg, initial=field.values, operator=op)
        iterations += field.iterations_used
        passes += 1
        blended = (1.0 - cfg.picard_relax) * blended + cfg.picard_relax * field.values
        logging.debug(f"Picard pass {passes}: {changed} sigma switches, residual {field.residual:.3e}")
    if not converged:
        logging.warning(f"Directional sigma assignment still changing after {passes} Picard passes")
    field = replace(field, iterations_used=iterations)
    return _finish(field, ws, bvp, None, target, picard_converged=converged, picard_iterations=passes)


class AnalyticField(GuidanceField):
    """Closed-form guidance without a target point: uniform flow or flow onto a centerline."""

    def __init__(self, ws: Workspace, bvp: BvpSpec):
        self.workspace = ws
        self.kind = bvp.kind
        self.target = None
        self.start = bvp.start
        self.anchor = bvp.target
        self.speed = bvp.speed
        self.lateral_gain = bvp.lateral_gain if bvp.kind is BvpKind.CENTERLINE else 0.0
        self.h = bvp.heading_vector
        self.n = (-self.h[1], self.h[0])

    def _coords(self, p: Point) -> Tuple[float, float]:
        dx, dy = p[0] - self.anchor[0], p[1] - self.anchor[1]
        return dx * self.h[0] + dy * self.h[1], dx * self.n[0] + dy * self.n[1]

    def gradient_at(self, p: Point) -> Point:
        self._require_admissible(p)
        _, e = self._coords(p)
        return (self.speed * self.h[0] - self.lateral_gain * e * self.n[0],
                self.speed * self.h[1] - self.lateral_gain * e * self.n[1])

    def value_at(self, p: Point) -> float:
        s, e = self._coords(p)
        return -self.speed * s + 0.5 * self.lateral_gain * e * e

    @property
    def max_gradient_magnitude(self) -> float:
        ws = self.workspace
        best = 0.0
        for corner_x in (ws.extent[0], ws.extent[2]):
            for corner_y in (ws.extent[1], ws.extent[3]):
                _, e = self._coords((corner_x, corner_y))
                best = max(best, math.hypot(self.speed, self.lateral_gain * e))
        return best


def solve(ws: Workspace, bvp: BvpSpec, cfg: SolverConfig) -> GuidanceField:
    if bvp.kind is BvpKind.NEUMANN:
        return solve_neumann(ws, bvp, cfg)
    if bvp.kind is BvpKind.ORIENTATION:
        return solve_orientation(ws, bvp, cfg)
    if bvp.kind is BvpKind.GAMMA:
        return solve_gamma(ws, bvp, cfg)
    if bvp.kind is BvpKind.DIRECTIONAL:
        return solve_directional(ws, bvp, cfg)
    return AnalyticField(ws, bvp)


def gradient_at(field: GuidanceField, p: Point) -> Point:
    return field.gradient_at(p)


def value_at(field: GuidanceField, p: Point) -> float:
    return field.value_at(p)


def residual(field: PotentialField) -> float:
    return _residual(field.values.ravel(), field.operator, field.pinned)


def relax(field: PotentialField, sweeps: int = 1, relaxation_factor: float = 1.0) -> PotentialField:
    """A solved field after extra relaxation sweeps."""
    values = field.values.ravel().tolist()
    rows = _relaxation_rows(field.operator, field.pinned)
    for _ in range(sweeps):
        _sweep(values, rows, relaxation_factor)
    new_values = np.array(values).reshape(field.values.shape)
    return replace(
        field,
        values=new_values,
        residual=_residual(new_values.ravel(), field.operator, field.pinned),
        iterations_used=field.iterations_used + sweeps,
    )


def check_max_principle(field: PotentialField, tol: Optional[float] = None) -> List[Cell]:
    """Non-pinned cells that are strict extrema among their connected neighbors."""
    tol = field.tolerance if tol is None else tol
    op = field.operator
    connected = op.connected()
    V = np.where(op.active, field.values, 0.0)
    hi = np.full(V.shape, -np.inf)
    lo = np.full(V.shape, np.inf)
    has_neighbor = np.zeros(V.shape, dtype=bool)
    for d, (di, dj) in enumerate(DIRECTIONS):
        nb = _neighbor(V, di, dj, 0.0)
        hi = np.where(connected[..., d], np.maximum(hi, nb), hi)
        lo = np.where(connected[..., d], np.minimum(lo, nb), lo)
        ghost = op.boundary[..., d] > 0
        hi = np.where(ghost, np.maximum(hi, op.boundary_value), hi)
        lo = np.where(ghost, np.minimum(lo, op.boundary_value), lo)
        has_neighbor |= connected[..., d] | ghost
    candidates = op.active & ~field.pinned & has_neighbor
    strict = candidates & ((V > hi + tol) | (V < lo - tol))
    jj, ii = np.nonzero(strict)
    return [(int(i), int(j)) for j, i in zip(jj, ii)]


def face_flux(field: PotentialField) -> Tuple[np.ndarray, np.ndarray]:
    """Numerical flux c * (V_neighbor - V) through the east and north face of every cell."""
    V = np.where(field.operator.active, field.values, 0.0)
    cond = field.operator.conductance
    east = np.where(cond[..., 0] > 0, cond[..., 0] * (_neighbor(V, 1, 0, 0.0) - V), 0.0)
    north = np.where(cond[..., 2] > 0, cond[..., 2] * (_neighbor(V, 0, 1, 0.0) - V), 0.0)
    return east, north


def field_from_values(ws: Workspace, values: np.ndarray, pinned: Optional[np.ndarray] = None,
                      tolerance: float = 1e-8) -> PotentialField:
    """Wraps given node values in a Neumann-operator field (tests, cache reloads)."""
    op = build_operator(ws)
    values = np.where(op.active, np.asarray(values, dtype=float), np.nan)
    pinned = np.zeros(values.shape, dtype=bool) if pinned is None else np.asarray(pinned, dtype=bool)
    return PotentialField(
        workspace=ws,
        values=values,
        pinned=pinned,
        residual=_residual(values.ravel(), op, pinned),
        iterations_used=0,
        tolerance=tolerance,
        operator=op,
    )


def rebuild_field(ws: Workspace, bvp: BvpSpec, cfg: SolverConfig, values: np.ndarray,
                  iterations_used: int = 0, picard_converged: bool = True,
                  picard_iterations: int = 0) -> PotentialField:
    """Reconstructs the solved field for bvp from stored node values."""
    H, W = ws.height_cells, ws.width_cells
    target = snap_to_free(ws, bvp.target)
    start = None
    pins = {target: 0.0}
    if bvp.kind is BvpKind.DIRECTIONAL:
        region = bvp.region_mask(ws) & ws.free_mask
        unweighted = build_operator(ws, boundary_value=1.0)
        sigma = _assign_sigma(nodal_guidance(values, unweighted, ws.cell_size), region, bvp.region_field(ws), bvp)
        # sigma of the stored field decides the operator it was solved with
        op = build_operator(ws, sigma, boundary_value=1.0)
    else:
        start = snap_to_free(ws, bvp.start)
        pins[start] = 1.0
        if bvp.kind is BvpKind.ORIENTATION:
            pins[orientation_offset_cell(ws, bvp)] = 1.0
        op = build_operator(ws, ws.gamma_array if bvp.kind is BvpKind.GAMMA else None)
    pinned = np.zeros((H, W), dtype=bool)
    for (i, j) in pins:
        pinned[j, i] = True
    values = np.where(op.active, values, np.nan)
    field = PotentialField(
        workspace=ws,
        values=values,
        pinned=pinned,
        residual=_residual(values.ravel(), op, pinned),
        iterations_used=iterations_used,
        tolerance=cfg.tolerance,
        operator=op,
        kind=bvp.kind,
        start=ws.cell_center(start) if start is not None else None,
        target=ws.cell_center(target),
        picard_converged=picard_converged,
        picard_iterations=picard_iterations,
    )
    return field
