"""Normalized box-occupancy heatmaps over the [0, 100] coordinate grid."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .boxes import NormalizedBox
from .errors import IoFailureError

GRID_SIZE = 101  # one cell per integer normalized coordinate


@dataclass(frozen=True)
class HeatmapGrid:
    """Max-normalized occupancy grid; cells[y][x], all values in [0, 1]."""

    cells: np.ndarray  # float64, shape (GRID_SIZE, GRID_SIZE)
    side: str  # "GT" | "prediction"


def heatmap(boxes: list[NormalizedBox], side: str = "GT") -> HeatmapGrid:
    """Accumulate boxes (inclusive cell coverage) and divide by the max count."""
    grid = np.zeros((GRID_SIZE, GRID_SIZE), dtype=np.float64)
    for box in boxes:
        grid[box.y_top : box.y_bottom + 1, box.x_left : box.x_right + 1] += 1.0
    peak = grid.max()
    if peak > 0:
        grid /= peak
    grid.flags.writeable = False
    return HeatmapGrid(cells=grid, side=side)


def write_grid_json(grid: HeatmapGrid, path: str | Path) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        payload = {"side": grid.side, "size": GRID_SIZE, "cells": grid.cells.tolist()}
        path.write_text(json.dumps(payload) + "\n", encoding="utf-8")
    except OSError as exc:
        raise IoFailureError(f"cannot write {path}: {exc}") from exc
    return path


def read_grid_json(path: str | Path) -> HeatmapGrid:
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    cells = np.asarray(payload["cells"], dtype=np.float64)
    cells.flags.writeable = False
    return HeatmapGrid(cells=cells, side=payload["side"])


def export_heatmap_pair(gt: HeatmapGrid, pred: HeatmapGrid, path: str | Path) -> Path:
    """Side-by-side GT vs prediction panel as a PNG."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, axes = plt.subplots(1, 2, figsize=(10, 5))
    for ax, grid, title in ((axes[0], gt, "GT"), (axes[1], pred, "Prediction")):
        im = ax.imshow(grid.cells, cmap="hot", vmin=0.0, vmax=1.0, origin="upper")
        ax.set_title(title)
        ax.set_xticks([])
        ax.set_yticks([])
    fig.colorbar(im, ax=axes, fraction=0.04)
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        fig.savefig(path, format="png", dpi=100)
    except OSError as exc:
        raise IoFailureError(f"cannot write {path}: {exc}") from exc
    finally:
        plt.close(fig)
    return path
