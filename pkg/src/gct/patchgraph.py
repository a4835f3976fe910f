"""Patch grids over canonical images and the attribute graphs built on them.

A canonical image (default 128 rows x 48 columns) is covered by overlapping
patches laid out row-major. Each patch row is one horizontal stripe; graph
edges connect every pair of patches inside a stripe, and matching between
two images is restricted to stripes at most ``search_margin`` rows apart.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np

from .errors import DimensionMismatch, GeometryMismatch, InvalidConfig

Pair = tuple[int, int]


@dataclass(frozen=True)
class GridConfig:
    image_width: int = 48
    image_height: int = 128
    patch_width: int = 24
    patch_height: int = 32
    stride_x: int | None = None
    stride_y: int | None = None
    search_margin: int = 1

    def __post_init__(self):
        # half-patch overlap unless told otherwise
        if self.stride_x is None:
            object.__setattr__(self, "stride_x", max(1, self.patch_width // 2))
        if self.stride_y is None:
            object.__setattr__(self, "stride_y", max(1, self.patch_height // 2))
        if self.patch_width < 1 or self.patch_height < 1:
            raise InvalidConfig("patch dimensions must be positive")
        if self.patch_width > self.image_width or self.patch_height > self.image_height:
            raise InvalidConfig(
                f"patch {self.patch_height}x{self.patch_width} exceeds image "
                f"{self.image_height}x{self.image_width}"
            )
        if self.stride_x < 1 or self.stride_y < 1:
            raise InvalidConfig("strides must be >= 1")
        if self.search_margin < 0:
            raise InvalidConfig("search_margin must be >= 0")

    @property
    def rows(self) -> int:
        return (self.image_height - self.patch_height) // self.stride_y + 1

    @property
    def cols(self) -> int:
        return (self.image_width - self.patch_width) // self.stride_x + 1

    def geometry(self) -> tuple:
        """Everything that fixes patch positions (search margin excluded)."""
        return (self.image_width, self.image_height, self.patch_width,
                self.patch_height, self.stride_x, self.stride_y)


@dataclass(frozen=True)
class PatchGrid:
    config: GridConfig
    centers: tuple[tuple[float, float], ...]
    rows: int
    cols: int
    origin: tuple[int, int] = (0, 0)

    def __len__(self) -> int:
        return len(self.centers)

    @cached_property
    def stripe_of(self) -> np.ndarray:
        s = np.repeat(np.arange(self.rows), self.cols)
        s.setflags(write=False)
        return s

    def row_col(self, index: int) -> tuple[int, int]:
        return divmod(index, self.cols)

    def index(self, row: int, col: int) -> int:
        return row * self.cols + col

    def box(self, index: int) -> tuple[int, int, int, int]:
        """Pixel box ``(top, left, bottom, right)`` of a patch, right/bottom exclusive."""
        r, c = self.row_col(index)
        cfg = self.config
        top = self.origin[1] + r * cfg.stride_y
        left = self.origin[0] + c * cfg.stride_x
        return top, left, top + cfg.patch_height, left + cfg.patch_width

    def stripe_members(self, stripe: int) -> range:
        return range(stripe * self.cols, (stripe + 1) * self.cols)


def decompose(config: GridConfig) -> PatchGrid:
    """Lay out the patch grid for ``config``.

    Leftover pixels that do not fit a whole stride are split evenly on both
    sides, so the grid is centred in the image.
    """
    rows, cols = config.rows, config.cols
    if rows < 1 or cols < 1:
        raise InvalidConfig("grid must contain at least one patch per direction")
    span_x = config.patch_width + (cols - 1) * config.stride_x
    span_y = config.patch_height + (rows - 1) * config.stride_y
    x0 = (config.image_width - span_x) // 2
    y0 = (config.image_height - span_y) // 2
    centers = tuple(
        (x0 + j * config.stride_x + config.patch_width / 2,
         y0 + i * config.stride_y + config.patch_height / 2)
        for i in range(rows) for j in range(cols)
    )
    return PatchGrid(config=config, centers=centers, rows=rows, cols=cols, origin=(x0, y0))


@dataclass(frozen=True, eq=False)
class AttributeGraph:
    """Undirected attribute graph of one image.

    ``spatial`` holds patch centres scaled into the unit square, ``visual``
    the L2-normalised descriptors; edges join patches of the same stripe.
    """

    spatial: np.ndarray
    visual: np.ndarray
    stripe: np.ndarray
    grid: PatchGrid | None = field(default=None, repr=False)

    def __len__(self) -> int:
        return self.spatial.shape[0]

    @cached_property
    def adjacency(self) -> np.ndarray:
        adj = self.stripe[:, None] == self.stripe[None, :]
        np.fill_diagonal(adj, False)
        adj.setflags(write=False)
        return adj

    @property
    def edges(self) -> list[Pair]:
        i, j = np.nonzero(np.triu(self.adjacency))
        return list(zip(i.tolist(), j.tolist()))

    def has_edge(self, i: int, j: int) -> bool:
        return bool(self.adjacency[i, j])

    def vertices(self):
        for k in range(len(self)):
            yield k, self.spatial[k], self.visual[k]


def l2_normalize(vectors: np.ndarray) -> np.ndarray:
    v = np.asarray(vectors, dtype=np.float64)
    norms = np.linalg.norm(v, axis=-1, keepdims=True)
    out = np.zeros_like(v)
    np.divide(v, norms, out=out, where=norms > 0)
    return out


def build_graph(grid: PatchGrid, descriptors: Sequence[Sequence[float]] | np.ndarray) -> AttributeGraph:
    desc = np.asarray(descriptors, dtype=np.float64)
    if desc.ndim != 2 or desc.shape[0] != len(grid):
        raise DimensionMismatch(
            f"expected {len(grid)} descriptors, got array of shape {desc.shape}"
        )
    cfg = grid.config
    spatial = np.asarray(grid.centers, dtype=np.float64) / np.array(
        [cfg.image_width, cfg.image_height], dtype=np.float64)
    visual = l2_normalize(desc)
    stripe = np.array(grid.stripe_of)
    for arr in (spatial, visual, stripe):
        arr.setflags(write=False)
    return AttributeGraph(spatial=spatial, visual=visual, stripe=stripe, grid=grid)


def candidate_pairs(probe: PatchGrid, gallery: PatchGrid, search_margin: int | None = None,
                    probe_stripe: int | None = None) -> list[Pair]:
    """Probe/gallery patch pairs whose stripes are at most ``search_margin`` apart.

    Pairs come back in lexicographic order. ``probe_stripe`` restricts the
    probe side to a single stripe.
    """
    if probe.config.geometry() != gallery.config.geometry():
        raise GeometryMismatch("probe and gallery grids differ in geometry")
    margin = probe.config.search_margin if search_margin is None else search_margin
    if margin < 0:
        raise InvalidConfig("search_margin must be >= 0")
    sp, sg = probe.stripe_of, gallery.stripe_of
    probes = range(len(probe)) if probe_stripe is None else probe.stripe_members(probe_stripe)
    return [(i, a) for i in probes for a in range(len(gallery))
            if abs(int(sp[i]) - int(sg[a])) <= margin]
