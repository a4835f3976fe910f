"""Per-patch colour/gradient descriptors, PCA projection and a binary cache.

The descriptor is three 8-bin marginal histograms over H, S and V followed
by a 9-bin unsigned gradient-orientation histogram weighted by magnitude.
Every block is normalised to sum to one; a patch with no gradient at all
keeps an all-zero gradient block.
"""

from __future__ import annotations

import hashlib
import json
import struct
import warnings
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from matplotlib.colors import rgb_to_hsv

from .errors import DimensionMismatch, InsufficientData, InvalidConfig
from .patchgraph import PatchGrid


@dataclass(frozen=True)
class DescriptorConfig:
    patch_width: int = 24
    patch_height: int = 32
    color_bins: int = 8
    gradient_bins: int = 9

    @property
    def dim(self) -> int:
        return 3 * self.color_bins + self.gradient_bins

    def digest(self) -> str:
        return hashlib.sha1(json.dumps(asdict(self), sort_keys=True).encode()).hexdigest()[:12]


def _as_unit_rgb(pixels) -> np.ndarray:
    px = np.asarray(pixels)
    if px.dtype == np.uint8:
        return px.astype(np.float64) / 255.0
    return np.clip(px.astype(np.float64), 0.0, 1.0)


def _block_hist(values: np.ndarray, bins: int, weights=None) -> np.ndarray:
    # values in [0, 1]; 1.0 belongs to the last bin
    idx = np.minimum((values * bins).astype(np.int64), bins - 1).ravel()
    h = np.bincount(idx, weights=None if weights is None else weights.ravel(), minlength=bins)
    total = h.sum()
    return h / total if total > 0 else np.zeros(bins)


def gradient_orientation_histogram(gray: np.ndarray, bins: int = 9) -> np.ndarray:
    """Magnitude-weighted histogram of unsigned gradient orientations, summing to 1."""
    g = np.asarray(gray, dtype=np.float64)
    gy = np.zeros_like(g)
    gx = np.zeros_like(g)
    gy[1:-1, :] = g[2:, :] - g[:-2, :]
    gx[:, 1:-1] = g[:, 2:] - g[:, :-2]
    mag = np.hypot(gx, gy)
    ang = np.mod(np.arctan2(gy, gx), np.pi) / np.pi
    return _block_hist(ang, bins, weights=mag)


def extract_patch_descriptor(pixels, config: DescriptorConfig = DescriptorConfig()) -> np.ndarray:
    """Descriptor of one RGB patch of shape ``(patch_height, patch_width, 3)``."""
    rgb = _as_unit_rgb(pixels)
    if rgb.shape != (config.patch_height, config.patch_width, 3):
        raise DimensionMismatch(
            f"patch shape {rgb.shape} != {(config.patch_height, config.patch_width, 3)}")
    hsv = rgb_to_hsv(rgb)
    blocks = [_block_hist(hsv[..., c], config.color_bins) for c in range(3)]
    gray = rgb @ np.array([0.299, 0.587, 0.114])
    blocks.append(gradient_orientation_histogram(gray, config.gradient_bins))
    return np.concatenate(blocks)


def extract_image_descriptors(image, grid: PatchGrid,
                              config: DescriptorConfig | None = None) -> np.ndarray:
    """Descriptors for every patch of ``grid`` in row-major order, shape ``(n, dim)``."""
    if config is None:
        config = DescriptorConfig(grid.config.patch_width, grid.config.patch_height)
    img = np.asarray(image)
    gc = grid.config
    if img.shape[:2] != (gc.image_height, gc.image_width):
        raise DimensionMismatch(
            f"image is {img.shape[:2]}, grid expects {(gc.image_height, gc.image_width)}")
    out = np.empty((len(grid), config.dim))
    for k in range(len(grid)):
        top, left, bottom, right = grid.box(k)
        out[k] = extract_patch_descriptor(img[top:bottom, left:right], config)
    return out


@dataclass(frozen=True, eq=False)
class PcaModel:
    mean: np.ndarray
    components: np.ndarray  # (d, input_dim), rows orthonormal
    explained_variance_ratio: np.ndarray

    @property
    def dim(self) -> int:
        return self.components.shape[0]

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "components": self.components.tolist(),
                "explained_variance_ratio": self.explained_variance_ratio.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "PcaModel":
        return cls(np.asarray(d["mean"], float), np.asarray(d["components"], float).reshape(
            len(d["components"]), -1), np.asarray(d["explained_variance_ratio"], float))


def fit_pca(vectors, d: int, rank_tol: float = 1e-10) -> PcaModel:
    """Principal axes of ``vectors`` (rows are samples).

    Each axis is signed so its largest-magnitude coefficient is positive.
    If the data has rank below ``d``, ``d`` is reduced with a warning.
    """
    X = np.asarray(vectors, dtype=np.float64)
    if X.ndim != 2:
        raise DimensionMismatch("expected a 2-D sample matrix")
    n, dim = X.shape
    if d < 1 or d > min(n, dim):
        raise InvalidConfig(f"d={d} must be in [1, min(samples={n}, dim={dim})]")
    mean = X.mean(axis=0)
    C = (X - mean).T @ (X - mean) / max(n - 1, 1)
    w, V = np.linalg.eigh(C)
    order = np.argsort(w)[::-1]
    w, V = np.clip(w[order], 0.0, None), V[:, order]
    rank = int(np.sum(w > rank_tol * max(w[0], np.finfo(float).tiny)))
    if rank < d:
        warnings.warn(f"data rank {rank} < requested d={d}; reducing d", RuntimeWarning)
        d = max(rank, 1)
    comps = V[:, :d].T.copy()
    lead = np.argmax(np.abs(comps), axis=1)
    signs = np.sign(comps[np.arange(d), lead])
    comps *= signs[:, None]
    total = w.sum()
    ratio = w[:d] / total if total > 0 else np.zeros(d)
    return PcaModel(mean=mean, components=comps, explained_variance_ratio=ratio)


def apply_pca(model: PcaModel, vectors) -> np.ndarray:
    X = np.asarray(vectors, dtype=np.float64)
    if X.shape[-1] != model.mean.shape[0]:
        raise DimensionMismatch(f"vector dim {X.shape[-1]} != PCA input dim {model.mean.shape[0]}")
    return (X - model.mean) @ model.components.T


# -- descriptor sidecar cache -------------------------------------------------

_HEADER = struct.Struct("<II")  # vector count, vector dimension


def cache_key(image_path: str | Path, config: DescriptorConfig, grid: PatchGrid) -> str:
    token = f"{Path(image_path).as_posix()}|{config.digest()}|{grid.config.geometry()}"
    return hashlib.sha1(token.encode()).hexdigest()[:20]


def write_descriptor_file(path: str | Path, descriptors: np.ndarray) -> None:
    arr = np.ascontiguousarray(descriptors, dtype="<f4")
    if arr.ndim != 2:
        raise DimensionMismatch("descriptor block must be 2-D")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(*arr.shape))
        fh.write(arr.tobytes())


def read_descriptor_file(path: str | Path) -> np.ndarray:
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise InsufficientData(f"{path}: truncated header")
    count, dim = _HEADER.unpack_from(raw)
    body = raw[_HEADER.size:]
    if len(body) != count * dim * 4:
        raise InsufficientData(f"{path}: expected {count}x{dim} floats, got {len(body)} bytes")
    return np.frombuffer(body, dtype="<f4").reshape(count, dim).astype(np.float64)


class DescriptorCache:
    """Directory of sidecar files keyed by image path and descriptor config."""

    def __init__(self, root: str | Path, config: DescriptorConfig):
        self.root = Path(root)
        self.config = config
        self.root.mkdir(parents=True, exist_ok=True)

    def path_for(self, image_path, grid: PatchGrid) -> Path:
        return self.root / f"{cache_key(image_path, self.config, grid)}.bin"

    def get(self, image_path, grid: PatchGrid, compute) -> np.ndarray:
        p = self.path_for(image_path, grid)
        if p.exists():
            return read_descriptor_file(p)
        desc = np.asarray(compute(), dtype=np.float64)
        write_descriptor_file(p, desc)
        # callers always see the float32-rounded values, cached or not
        return read_descriptor_file(p)


def stack_descriptors(blocks: Sequence[np.ndarray]) -> np.ndarray:
    return np.concatenate([np.asarray(b, float) for b in blocks], axis=0)
