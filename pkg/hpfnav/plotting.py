"""
SVG figures: guidance quiver plots and path overlays.

Figures are written with a fixed SVG hash salt and without date metadata,
so identical inputs give byte-identical files.
"""

import io
import math
from pathlib import Path
from typing import Optional, Tuple, Union

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .env import Workspace  # noqa: E402
from .solver import GuidanceField, PotentialField  # noqa: E402
from .storage import atomic_write_text  # noqa: E402

MAX_ARROWS = 40

plt.rcParams["svg.hashsalt"] = "hpfnav"


def _guidance_grid(field: GuidanceField) -> Tuple[np.ndarray, np.ndarray]:
    ws = field.workspace
    if isinstance(field, PotentialField):
        return field.nodal_guidance
    gx = np.full((ws.height_cells, ws.width_cells), np.nan)
    gy = np.full_like(gx, np.nan)
    for j, i in zip(*np.nonzero(ws.free_mask)):
        gx[j, i], gy[j, i] = field.gradient_at(ws.cell_center((int(i), int(j))))
    return gx, gy


def _draw_field(ax, field: GuidanceField):
    ws = field.workspace
    x0, y0, x1, y1 = ws.extent
    # obstacles filled, free space blank
    ax.imshow(~ws.free_mask, origin="lower", extent=(x0, x1, y0, y1), cmap="Greys",
              vmin=0, vmax=1.6, interpolation="nearest")
    if isinstance(field, PotentialField) and ws.width_cells > 1 and ws.height_cells > 1:
        xs = x0 + (np.arange(ws.width_cells) + 0.5) * ws.cell_size
        ys = y0 + (np.arange(ws.height_cells) + 0.5) * ws.cell_size
        V = np.ma.masked_invalid(field.values)
        if V.count() > 0 and float(V.max() - V.min()) > 0:
            ax.contour(xs, ys, V, levels=15, colors="gray", alpha=0.4, linewidths=0.5)

    gx, gy = _guidance_grid(field)
    stride = max(1, math.ceil(max(ws.width_cells, ws.height_cells) / MAX_ARROWS))
    jj, ii = np.mgrid[0:ws.height_cells:stride, 0:ws.width_cells:stride]
    X = x0 + (ii + 0.5) * ws.cell_size
    Y = y0 + (jj + 0.5) * ws.cell_size
    U, W = gx[jj, ii], gy[jj, ii]
    mag = np.hypot(U, W)
    keep = np.isfinite(mag) & (mag > 0)
    if np.any(keep):
        ax.quiver(X[keep], Y[keep], U[keep] / mag[keep], W[keep] / mag[keep], mag[keep],
                  cmap="viridis", alpha=0.7, pivot="mid", width=0.002)

    if field.target is not None:
        ax.plot(field.target[0], field.target[1], "b*", markersize=14, label="Target", zorder=10)
    ax.set_xlim(x0, x1)
    ax.set_ylim(y0, y1)
    ax.set_aspect("equal")
    ax.set_xlabel("x [m]")
    ax.set_ylabel("y [m]")


def _save_svg(fig, path: Union[str, Path]):
    buf = io.StringIO()
    fig.savefig(buf, format="svg", metadata={"Date": None}, bbox_inches="tight")
    plt.close(fig)
    atomic_write_text(path, buf.getvalue())


def plot_field(field: GuidanceField, path: Union[str, Path], title: Optional[str] = None):
    """Quiver of -grad V over the Free cells, obstacles shaded."""
    fig, ax = plt.subplots(figsize=workspace_figure_size(field.workspace))
    _draw_field(ax, field)
    ax.set_title(title or "Guidance field")
    _save_svg(fig, path)


def plot_overlay(field: GuidanceField, path: Union[str, Path], reference: Optional[np.ndarray] = None,
                 robot: Optional[np.ndarray] = None, title: Optional[str] = None):
    """Reference path dashed and robot path solid, drawn over the field."""
    fig, ax = plt.subplots(figsize=workspace_figure_size(field.workspace))
    _draw_field(ax, field)
    if reference is not None and len(reference) > 0:
        ax.plot(reference[:, 0], reference[:, 1], "b--", linewidth=1.5, label="Reference path", zorder=8)
        ax.plot(reference[0, 0], reference[0, 1], "go", markersize=8, label="Start", zorder=10)
    if robot is not None and len(robot) > 0:
        ax.plot(robot[:, 0], robot[:, 1], "r-", linewidth=1.5, label="Robot", zorder=9)
    ax.legend(loc="upper left")
    ax.set_title(title or "Trajectory")
    _save_svg(fig, path)


def workspace_figure_size(ws: Workspace) -> Tuple[float, float]:
    x0, y0, x1, y1 = ws.extent
    aspect = (y1 - y0) / (x1 - x0)
    return (7.0, max(2.0, 7.0 * aspect))
