from __future__ import annotations

import numpy as np
import pytest
from skimage.feature import hog as skimage_hog

from gct.errors import EmptyTrainingSet, InsufficientData, InvalidConfig, LabelOutOfRange
from gct.orientation import (DecisionTree, HogConfig, OrientationForest, extract_hog,
                             leaf_proximity, pose_pair_similarity, proximity_matrix,
                             rank_references, select_references, train_forest)


def separable(rng, per_class=40, dim=12, spread=0.3):
    centres = rng.normal(0, 3.0, (8, dim))
    y = np.repeat(np.arange(8), per_class)
    X = centres[y] + rng.normal(0, spread, (len(y), dim))
    return X, y


def stump(threshold: float) -> DecisionTree:
    # root splits feature 0; node 1 and node 2 are leaves
    return DecisionTree(np.array([0, -1, -1]), np.array([threshold, 0.0, 0.0]),
                        np.array([1, -1, -1]), np.array([2, -1, -1]), np.array([0, 0, 1]))


def test_hog_level_dims():
    cfg = HogConfig(cell_sizes=(8,), image_width=64, image_height=64)
    assert cfg.level_dim(8) == 7 * 7 * 4 * 9 == 1764
    assert HogConfig().dim == sum(HogConfig().level_dim(c) for c in (8, 16, 32))


def test_hog_uniform_image_is_zero():
    assert not extract_hog(np.full((128, 64), 0.5)).any()


def test_hog_matches_skimage(rng):
    img = rng.uniform(0, 1, (128, 64))
    cfg = HogConfig()
    ours = extract_hog(img, cfg)
    ref = np.concatenate([
        skimage_hog(img, orientations=9, pixels_per_cell=(c, c), cells_per_block=(2, 2),
                    block_norm="L2", feature_vector=True)
        for c in cfg.cell_sizes])
    assert ours.shape == ref.shape
    assert np.abs(ours - ref).max() < 1e-6


def test_hog_deterministic_and_config_checks(rng):
    img = rng.uniform(0, 1, (128, 64))
    assert np.array_equal(extract_hog(img), extract_hog(img.copy()))
    with pytest.raises(InvalidConfig):
        HogConfig(cell_sizes=(32,), image_width=48)


def test_forest_fits_separable_data(rng):
    X, y = separable(rng)
    forest = train_forest(X, y, n_trees=30, seed=1)
    assert np.mean(forest.predict(X) == y) >= 0.95


def test_single_tree_proximity_is_binary(rng):
    X, y = separable(rng, per_class=10)
    P = proximity_matrix(train_forest(X, y, n_trees=1).leaves(X), train_forest(X, y, n_trees=1).leaves(X))
    assert set(np.unique(P)) <= {0.0, 1.0}


def test_retraining_same_inputs_gives_same_forest(rng):
    X, y = separable(rng, per_class=10)
    a = train_forest(X, y, n_trees=10, seed=7).to_dict()
    b = train_forest(X.copy(), y.copy(), n_trees=10, seed=7).to_dict()
    assert a == b


def test_proximity_examples():
    forest = OrientationForest((stump(0.0), stump(0.0), stump(5.0), stump(5.0)), n_features=1)
    a, b = np.array([1.0]), np.array([6.0])
    assert leaf_proximity(forest, a, a) == 1.0
    assert leaf_proximity(forest, a, b) == 0.5
    assert leaf_proximity(forest, b, a) == 0.5


def test_pose_pair_similarity_product():
    forest = OrientationForest((stump(0.0), stump(0.0), stump(5.0), stump(5.0)), n_features=1)
    p, g = np.array([1.0]), np.array([-1.0])
    assert pose_pair_similarity(forest, (p, g), (p, g)) == 1.0
    assert pose_pair_similarity(forest, (p, g), (np.array([6.0]), g)) == 0.5
    assert pose_pair_similarity(forest, (p, g), (np.array([6.0]), np.array([6.0]))) == 0.0


def test_rank_references_product_and_order():
    refs = rank_references(np.array([0.5, 1.0, 0.0]), np.array([0.8, 0.4, 1.0]), [10, 11, 12], 3)
    assert refs == [(10, 0.4), (11, 0.4), (12, 0.0)]  # 0.5*0.8, 1.0*0.4, 0.0*1.0
    assert len(rank_references(np.ones(3), np.ones(3), [2, 0, 1], 10)) == 3
    assert [p for p, _ in rank_references(np.ones(3), np.ones(3), [2, 0, 1], 10)] == [0, 1, 2]
    with pytest.raises(EmptyTrainingSet):
        rank_references(np.array([]), np.array([]), [], 3)


def test_select_references_puts_identical_pair_first(rng):
    X, y = separable(rng, per_class=10)
    forest = train_forest(X, y, n_trees=20, seed=0)
    # one pair per probe class (10 samples per class), so only pair 6 can reach similarity 1
    pairs = {k: (X[10 * k], X[10 * ((k + 3) % 8)]) for k in range(8)}
    refs = select_references(pairs[6], pairs, forest, R=4)
    assert refs[0] == 6 and len(refs) == 4


def test_training_errors(rng):
    X, y = separable(rng, per_class=4)
    with pytest.raises(LabelOutOfRange):
        train_forest(X, np.where(y == 0, 8, y), n_trees=2)
    with pytest.raises(InsufficientData):
        train_forest(X, np.zeros_like(y), n_trees=2)


def test_forest_persistence(tmp_path, rng):
    X, y = separable(rng, per_class=6)
    f = train_forest(X, y, n_trees=5, seed=3)
    f.save(tmp_path / "f.json")
    g = OrientationForest.load(tmp_path / "f.json")
    assert np.array_equal(f.leaves(X), g.leaves(X))
