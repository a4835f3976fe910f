"""Figures written next to the CSV reports (Agg canvas, no pyplot state)."""

from __future__ import annotations

from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
from matplotlib.backends.backend_agg import FigureCanvasAgg
from matplotlib.figure import Figure

from .patchgraph import PatchGrid
from .transfer import CmcCurve

_METADATA = {"Software": None}


def _save(fig: Figure, path: str | Path) -> None:
    FigureCanvasAgg(fig)
    fig.savefig(path, dpi=120, metadata=_METADATA)


def plot_cmc(curves: Mapping[str, CmcCurve], path: str | Path, max_rank: int | None = None) -> None:
    fig = Figure(figsize=(5, 3.6))
    ax = fig.add_subplot(1, 1, 1)
    for label, curve in curves.items():
        n = len(curve) if max_rank is None else min(max_rank, len(curve))
        ranks = np.arange(1, n + 1)
        ax.plot(ranks, [100 * curve[r] for r in ranks], marker="o", ms=3, label=label)
    ax.set_xlabel("rank")
    ax.set_ylabel("matching rate (%)")
    ax.set_ylim(0, 101)
    ax.grid(alpha=0.3)
    ax.legend(loc="lower right")
    fig.tight_layout()
    _save(fig, path)


def plot_correspondences(probe: np.ndarray, gallery: np.ndarray, grid: PatchGrid,
                         correspondences: Sequence[tuple[int, int]], path: str | Path) -> None:
    """Probe and gallery side by side with a line per matched patch centre."""
    h, w = probe.shape[:2]
    gap = 8
    canvas = np.full((h, 2 * w + gap, 3), 255, dtype=np.uint8)
    canvas[:, :w] = probe
    canvas[:, w + gap:] = gallery
    fig = Figure(figsize=(2.2, 2.8))
    ax = fig.add_subplot(1, 1, 1)
    ax.imshow(canvas, interpolation="nearest")
    for wp, wg in correspondences:
        (x1, y1), (x2, y2) = grid.centers[wp], grid.centers[wg]
        ax.plot([x1, x2 + w + gap], [y1, y2], lw=0.8, color="yellow")
        ax.plot([x1, x2 + w + gap], [y1, y2], ".", ms=2, color="red")
    ax.set_axis_off()
    fig.tight_layout(pad=0.1)
    _save(fig, path)
