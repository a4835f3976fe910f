"""Synthetic two-view identities with known patch correspondences.

Every identity is a random layout of coloured cells, one cell per grid
stride, so a patch covers 2x2 cells. The gallery view shows the same layout
moved horizontally by ``shift`` patch columns, with fresh cells filling the
uncovered side. The move direction follows the probe orientation ``o``:
0..3 moves right, 4..7 moves left. The gallery orientation is
``(o + gallery_turn) % 8``. Orientation is rendered as a luminance grating
painted on the layout at ``o * 22.5`` degrees.

Cell colours are drawn on ``levels`` steps per HSV channel (bin centres of
the descriptor histograms when ``levels`` matches their bin count) and each
view adds its own Gaussian HSV noise per cell plus a little RGB pixel noise.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from matplotlib.colors import hsv_to_rgb
from PIL import Image

from ..errors import InvalidConfig
from ..patchgraph import GridConfig, Pair, decompose
from .dataset import Dataset, Entry, load_dataset, write_manifest
from .seeds import substream


@dataclass(frozen=True)
class SynthParams:
    identities: int = 50
    shift: int = 1
    noise: float = 0.04
    pixel_noise: float = 0.25
    palette: int = 0
    grating: float = 0.05
    grating_period: float = 6.0
    orientation_samples: int = 0
    gallery_turn: int = 0
    levels: int = 8
    seed: int = 0
    grid: GridConfig = GridConfig()


@dataclass(frozen=True)
class SynthResult:
    dataset: Dataset
    ground_truth: dict[str, tuple[Pair, ...]]
    shifts: dict[str, int]


def shift_direction(probe_orientation: int) -> int:
    return 1 if probe_orientation < 4 else -1


def ground_truth_pairs(grid: GridConfig, columns: int) -> tuple[Pair, ...]:
    """Probe patch ``(r, c)`` shows up at gallery patch ``(r, c + columns)``."""
    g = decompose(grid)
    out = []
    for r in range(g.rows):
        for c in range(g.cols):
            c2 = c + columns
            if 0 <= c2 < g.cols:
                out.append((g.index(r, c), g.index(r, c2)))
    return tuple(out)


def _grating(h: int, w: int, orientation: int, period: float, x0: int = 0) -> np.ndarray:
    """Sinusoid at ``orientation * 22.5`` degrees; ``x0`` offsets the phase origin."""
    theta = orientation * np.pi / 8.0
    y, x = np.mgrid[0:h, x0:x0 + w]
    # wave vector at theta so iso-lines (the visible edges) run perpendicular to it
    return np.sin(2 * np.pi * (x * np.cos(theta) + y * np.sin(theta)) / period)


def _random_hsv(rng: np.random.Generator, shape, levels: int = 0) -> np.ndarray:
    """Random HSV colours; with ``levels`` each channel sits at a bin centre."""
    if levels <= 0:
        return np.stack([rng.uniform(0, 1, shape), rng.uniform(0.35, 1.0, shape),
                         rng.uniform(0.25, 1.0, shape)], axis=-1)
    lo_s, lo_v = int(np.ceil(0.35 * levels)), int(np.ceil(0.25 * levels))
    centre = lambda lo: (rng.integers(lo, levels, shape) + 0.5) / levels
    return np.stack([centre(0), centre(lo_s), centre(lo_v)], axis=-1)


def _perturb_hsv(rng: np.random.Generator, hsv: np.ndarray, noise: float) -> np.ndarray:
    out = hsv + rng.normal(0.0, noise, hsv.shape)
    out[..., 0] %= 1.0
    out[..., 1:] = np.clip(out[..., 1:], 0.0, 1.0)
    return out


def render_pair(rng: np.random.Generator, params: SynthParams, orientation: int,
                palette: np.ndarray | None = None):
    """Render ``(probe_rgb, gallery_rgb, column_shift)`` as uint8 arrays.

    With a ``palette`` (rows of HSV) every cell takes one of its colours,
    which makes identities harder to tell apart by colour statistics alone.
    Cell noise is added per view in HSV; pixel noise in RGB.
    """
    g = params.grid
    if g.patch_width != 2 * g.stride_x or g.patch_height != 2 * g.stride_y:
        raise InvalidConfig("synthetic layouts need patches of exactly two strides")
    if (g.image_width % g.stride_x) or (g.image_height % g.stride_y):
        raise InvalidConfig("image size must be a whole number of strides")
    rows_c, cols_c = g.image_height // g.stride_y, g.image_width // g.stride_x
    s = abs(params.shift)
    shape = (rows_c, cols_c + 2 * s)
    if palette is None:
        layout = _random_hsv(rng, shape, params.levels)
    else:
        layout = palette[rng.integers(0, len(palette), shape)]
    direction = shift_direction(orientation)
    columns = direction * params.shift
    start = s - columns

    views = []
    for first, ori in ((s, orientation), (start, (orientation + params.gallery_turn) % 8)):
        cells = layout[:, first:first + cols_c]
        if params.noise > 0:
            cells = _perturb_hsv(rng, cells, params.noise)
        img = np.repeat(np.repeat(hsv_to_rgb(cells), g.stride_y, axis=0), g.stride_x, axis=1)
        if params.noise > 0 and params.pixel_noise > 0:
            img = img + rng.normal(0.0, params.noise * params.pixel_noise, img.shape)
        # the grating is painted on the body, so it moves with the layout
        wave = _grating(*img.shape[:2], ori, params.grating_period, first * g.stride_x)
        img = img * (1.0 + params.grating * wave)[..., None]
        views.append(np.clip(np.rint(img * 255.0), 0, 255).astype(np.uint8))
    return views[0], views[1], columns


def synth_generate(out_dir: str | Path, params: SynthParams = SynthParams()) -> SynthResult:
    """Write images, ``manifest.csv`` and ``ground_truth.json`` under ``out_dir``."""
    if params.identities < 2:
        raise InvalidConfig("need at least two identities")
    out = Path(out_dir)
    for cam in ("cam_a", "cam_b"):
        (out / cam).mkdir(parents=True, exist_ok=True)
    rng = substream(params.seed, "synth")
    palette = _random_hsv(rng, (params.palette,), params.levels) if params.palette > 0 else None
    entries, truth, shifts = [], {}, {}
    width = len(str(params.identities - 1))
    for k in range(params.identities):
        ident = f"{k:0{width}d}"
        orientation = int(rng.integers(0, 8))
        probe, gallery, columns = render_pair(rng, params, orientation, palette)
        for cam, img, ori, role in (("cam_a", probe, orientation, "probe"),
                                    ("cam_b", gallery, (orientation + params.gallery_turn) % 8,
                                     "gallery")):
            rel = f"{cam}/{ident}_0.png"
            Image.fromarray(img).save(out / rel)
            entries.append(Entry(rel, ident, cam, role, ori))
        truth[ident] = ground_truth_pairs(params.grid, columns)
        shifts[ident] = columns
    write_manifest(entries, out / "manifest.csv")
    if params.orientation_samples > 0:
        _write_orientation_set(out, params, palette)
    (out / "ground_truth.json").write_text(json.dumps(
        {i: {"column_shift": shifts[i], "correspondences": [list(p) for p in truth[i]]}
         for i in sorted(truth)}, indent=1) + "\n")
    return SynthResult(dataset=load_dataset(out), ground_truth=truth, shifts=shifts)


def _write_orientation_set(out: Path, params: SynthParams, palette) -> None:
    """Single probe-style views per orientation class plus ``orientation.csv``.

    These identities are never part of the re-identification set; they play
    the role of an independent orientation-labelled corpus.
    """
    rng = substream(params.seed, "synth-orientation")
    (out / "orient").mkdir(exist_ok=True)
    rows = ["path,label"]
    for label in range(8):
        for k in range(params.orientation_samples):
            img = render_pair(rng, params, label, palette)[0]
            rel = f"orient/o{label}_{k:03d}.png"
            Image.fromarray(img).save(out / rel)
            rows.append(f"{rel},{label}")
    (out / "orientation.csv").write_text("\n".join(rows) + "\n")


def load_ground_truth(path: str | Path) -> dict[str, tuple[Pair, ...]]:
    raw = json.loads(Path(path).read_text())
    return {k: tuple(tuple(p) for p in v["correspondences"]) for k, v in raw.items()}
