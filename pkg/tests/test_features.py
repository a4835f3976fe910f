from __future__ import annotations

import colorsys
import warnings

import numpy as np
import pytest

from gct.errors import DimensionMismatch, InsufficientData, InvalidConfig
from gct.features import (DescriptorCache, DescriptorConfig, apply_pca, extract_image_descriptors,
                          extract_patch_descriptor, fit_pca, read_descriptor_file,
                          write_descriptor_file)
from gct.patchgraph import GridConfig, decompose


def solid(rgb, h=32, w=24):
    return np.tile(np.array(rgb, dtype=np.uint8), (h, w, 1))


def test_dimension_is_33():
    assert DescriptorConfig().dim == 33
    assert extract_patch_descriptor(solid([10, 200, 30])).shape == (33,)


def test_solid_patch():
    d = extract_patch_descriptor(solid([200, 40, 40]))
    for block in (d[0:8], d[8:16], d[16:24]):
        assert np.count_nonzero(block) == 1 and block.max() == 1.0
    assert np.all(d[24:] == 0.0)


def test_blocks_sum_to_one(rng):
    d = extract_patch_descriptor(rng.integers(0, 256, (32, 24, 3), dtype=np.uint8))
    for s in (slice(0, 8), slice(8, 16), slice(16, 24), slice(24, 33)):
        assert abs(d[s].sum() - 1.0) < 1e-12


def test_deterministic(rng):
    p = rng.integers(0, 256, (32, 24, 3), dtype=np.uint8)
    assert np.array_equal(extract_patch_descriptor(p), extract_patch_descriptor(p.copy()))


def test_brightness_shift_keeps_hue_block(rng):
    # colours whose hue is well inside a bin, so rounding cannot move them across an edge
    colours = np.array([[200, 50, 20], [30, 160, 90], [40, 60, 180], [150, 30, 100],
                        [90, 140, 20], [25, 120, 150]])
    hue8 = np.array([colorsys.rgb_to_hsv(*(c / 255.0))[0] * 8 for c in colours])
    assert np.all(np.abs(hue8 - np.rint(hue8)) > 0.05)
    p = colours[rng.integers(0, len(colours), (32, 24))].astype(np.uint8)
    q = (p.astype(int) + 40).astype(np.uint8)
    a, b = extract_patch_descriptor(p), extract_patch_descriptor(q)
    assert np.array_equal(a[:8], b[:8])
    # independent oracle: hue via colorsys, hard-binned the same way
    hues = [colorsys.rgb_to_hsv(*(px / 255.0))[0] for px in q.reshape(-1, 3)]
    idx = np.minimum((np.array(hues) * 8).astype(int), 7)
    assert np.allclose(np.bincount(idx, minlength=8) / idx.size, b[:8], atol=1e-12)


def test_wrong_patch_size():
    with pytest.raises(DimensionMismatch):
        extract_patch_descriptor(solid([0, 0, 0], h=10, w=10))


def test_translation_determinism():
    grid = decompose(GridConfig())
    img = np.zeros((128, 48, 3), dtype=np.uint8)
    img[:32, :24] = [255, 0, 0]
    img[16:48, 12:36] = [255, 0, 0]  # patch 4 shows the same pixels as patch 0
    d = extract_image_descriptors(img, grid)
    assert np.array_equal(d[0], d[4])


def test_pca_line_reconstruction(rng):
    t = rng.normal(size=(50, 1))
    X = t @ np.array([[1.0, -2.0, 0.5]]) + np.array([3.0, 1.0, -1.0])
    m = fit_pca(X, 1)
    Z = apply_pca(m, X)
    back = Z @ m.components + m.mean
    assert np.abs(back - X).max() < 1e-9


def test_pca_full_dim_preserves_distances(rng):
    X = rng.normal(size=(40, 6))
    m = fit_pca(X, 6)
    Z = apply_pca(m, X)
    dx = np.linalg.norm(X[:, None] - X[None], axis=2)
    dz = np.linalg.norm(Z[:, None] - Z[None], axis=2)
    assert np.abs(dx - dz).max() < 1e-6
    assert np.abs(m.components @ m.components.T - np.eye(6)).max() < 1e-6


def test_pca_matches_svd_oracle(rng):
    X = rng.normal(size=(200, 8)) @ rng.normal(size=(8, 8))
    m = fit_pca(X, 3)
    s = np.linalg.svd(X - X.mean(0), compute_uv=False)
    ratio = s ** 2 / (s ** 2).sum()
    assert np.allclose(m.explained_variance_ratio, ratio[:3], atol=1e-10)
    lead = np.argmax(np.abs(m.components), axis=1)
    assert np.all(m.components[np.arange(3), lead] > 0)


def test_pca_rank_deficient_warns(rng):
    X = rng.normal(size=(30, 2)) @ rng.normal(size=(2, 5))
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        m = fit_pca(X, 4)
    assert m.dim == 2
    assert any("rank" in str(w.message) for w in caught)


def test_pca_d_too_large(rng):
    with pytest.raises(InvalidConfig):
        fit_pca(rng.normal(size=(5, 3)), 4)


def test_descriptor_file_roundtrip(tmp_path, rng):
    D = rng.normal(size=(21, 33))
    write_descriptor_file(tmp_path / "d.bin", D)
    raw = (tmp_path / "d.bin").read_bytes()
    assert raw[:8] == (21).to_bytes(4, "little") + (33).to_bytes(4, "little")
    assert len(raw) == 8 + 21 * 33 * 4
    back = read_descriptor_file(tmp_path / "d.bin")
    assert np.array_equal(back, D.astype("<f4").astype(float))
    (tmp_path / "bad.bin").write_bytes(raw[:20])
    with pytest.raises(InsufficientData):
        read_descriptor_file(tmp_path / "bad.bin")


def test_descriptor_cache(tmp_path, rng):
    grid = decompose(GridConfig())
    cache = DescriptorCache(tmp_path, DescriptorConfig())
    calls = []

    def compute():
        calls.append(1)
        return rng.normal(size=(21, 33))

    a = cache.get("cam_a/x.png", grid, compute)
    b = cache.get("cam_a/x.png", grid, compute)
    assert len(calls) == 1 and np.array_equal(a, b)
    assert cache.path_for("cam_a/x.png", grid) != cache.path_for("cam_a/y.png", grid)
