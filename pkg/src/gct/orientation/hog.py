"""Multi-level histogram of oriented gradients."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import DimensionMismatch, InvalidConfig


@dataclass(frozen=True)
class HogConfig:
    """Cell sizes per level; blocks are 2x2 cells moved one cell at a time.

    HoG runs on its own canonical grayscale size (default 128x64), which
    every cell size must divide.
    """

    cell_sizes: tuple[int, ...] = (8, 16, 32)
    bins: int = 9
    block_cells: int = 2
    image_width: int = 64
    image_height: int = 128
    eps: float = 1e-6

    def __post_init__(self):
        object.__setattr__(self, "cell_sizes", tuple(int(c) for c in self.cell_sizes))
        if self.bins < 2:
            raise InvalidConfig("need at least 2 orientation bins")
        for c in self.cell_sizes:
            if c < 1 or self.image_width % c or self.image_height % c:
                raise InvalidConfig(
                    f"cell size {c} does not divide {self.image_height}x{self.image_width}")
            if self.image_width // c < self.block_cells or self.image_height // c < self.block_cells:
                raise InvalidConfig(f"cell size {c} leaves no room for a single block")

    def level_dim(self, cell: int) -> int:
        nby = self.image_height // cell - self.block_cells + 1
        nbx = self.image_width // cell - self.block_cells + 1
        return nby * nbx * self.block_cells ** 2 * self.bins

    @property
    def dim(self) -> int:
        return sum(self.level_dim(c) for c in self.cell_sizes)


def _gradients(img: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    gy = np.zeros_like(img)
    gx = np.zeros_like(img)
    gy[1:-1, :] = img[2:, :] - img[:-2, :]
    gx[:, 1:-1] = img[:, 2:] - img[:, :-2]
    return gy, gx


def _level(mag: np.ndarray, bin_idx: np.ndarray, cell: int, config: HogConfig) -> np.ndarray:
    h, w = mag.shape
    ny, nx = h // cell, w // cell
    # cell id of every pixel, then one bincount over (cell, bin)
    cy = np.arange(h)[:, None] // cell
    cx = np.arange(w)[None, :] // cell
    flat = ((cy * nx + cx) * config.bins + bin_idx).ravel()
    hist = np.bincount(flat, weights=mag.ravel(), minlength=ny * nx * config.bins)
    hist = hist.reshape(ny, nx, config.bins) / (cell * cell)

    b = config.block_cells
    nby, nbx = ny - b + 1, nx - b + 1
    blocks = np.empty((nby, nbx, b, b, config.bins))
    for dy in range(b):
        for dx in range(b):
            blocks[:, :, dy, dx, :] = hist[dy:dy + nby, dx:dx + nbx, :]
    norm = np.sqrt(np.sum(blocks ** 2, axis=(2, 3, 4), keepdims=True) + config.eps ** 2)
    return (blocks / norm).ravel()


def extract_hog(image, config: HogConfig = HogConfig()) -> np.ndarray:
    """Concatenated L2-block-normalised HoG over every configured cell size.

    ``image`` is grayscale at the configured size; orientations are
    unsigned and hard-assigned to ``bins`` equal sectors of [0, 180).
    """
    img = np.asarray(image, dtype=np.float64)
    if img.shape != (config.image_height, config.image_width):
        raise DimensionMismatch(
            f"image {img.shape} != {(config.image_height, config.image_width)}")
    gy, gx = _gradients(img)
    mag = np.hypot(gx, gy)
    ang = np.mod(np.degrees(np.arctan2(gy, gx)), 180.0)
    bin_idx = np.minimum((ang / (180.0 / config.bins)).astype(np.int64), config.bins - 1)
    return np.concatenate([_level(mag, bin_idx, c, config) for c in config.cell_sizes])
