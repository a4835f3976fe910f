"""Body-orientation proximity and reference selection by pose-pair similarity."""

from __future__ import annotations

from typing import Mapping, Sequence

import numpy as np

from ..errors import DimensionMismatch, EmptyTrainingSet, InvalidConfig
from .forest import N_ORIENTATIONS, DecisionTree, OrientationForest, train_forest
from .hog import HogConfig, extract_hog

__all__ = [
    "HogConfig", "extract_hog", "OrientationForest", "DecisionTree", "train_forest",
    "leaf_proximity", "proximity_matrix", "pose_pair_similarity", "select_references",
    "rank_references", "N_ORIENTATIONS",
]


def leaf_proximity(forest: OrientationForest, a, b) -> float:
    """Fraction of trees in which ``a`` and ``b`` reach the same leaf."""
    la = forest.leaves(a)[0]
    lb = forest.leaves(b)[0]
    return float(np.count_nonzero(la == lb)) / forest.n_trees


def proximity_matrix(leaves_a: np.ndarray, leaves_b: np.ndarray) -> np.ndarray:
    """Leaf co-occurrence between every row of ``leaves_a`` and of ``leaves_b``.

    Inputs are leaf-id tables from :meth:`OrientationForest.leaves`.
    """
    la, lb = np.atleast_2d(leaves_a), np.atleast_2d(leaves_b)
    if la.shape[1] != lb.shape[1]:
        raise DimensionMismatch("leaf tables come from forests of different size")
    same = la[:, None, :] == lb[None, :, :]
    return np.count_nonzero(same, axis=2) / la.shape[1]


def pose_pair_similarity(forest: OrientationForest, pair, other) -> float:
    """Similarity of two (probe, gallery) feature pairs: product of proximities."""
    (p, g), (p2, g2) = pair, other
    return leaf_proximity(forest, p, p2) * leaf_proximity(forest, g, g2)


def rank_references(probe_prox: np.ndarray, gallery_prox: np.ndarray,
                    pair_ids: Sequence[int], R: int) -> list[tuple[int, float]]:
    """Top-``R`` ``(pair_id, similarity)`` from precomputed proximities.

    ``probe_prox[k]`` is the proximity between the test probe and the probe
    of training pair ``pair_ids[k]``; likewise for the gallery side. Order
    is descending similarity, then ascending pair id.
    """
    if len(pair_ids) == 0:
        raise EmptyTrainingSet("no training pairs to select references from")
    if R < 1:
        raise InvalidConfig("R must be >= 1")
    sim = np.asarray(probe_prox, float) * np.asarray(gallery_prox, float)
    order = sorted(range(len(pair_ids)), key=lambda k: (-sim[k], pair_ids[k]))
    return [(pair_ids[k], float(sim[k])) for k in order[:R]]


def select_references(test_pair, training_pairs: Mapping[int, tuple], forest: OrientationForest,
                      R: int = 20) -> list[int]:
    """Pair ids of the ``R`` training pairs whose pose pair best matches ``test_pair``.

    ``test_pair`` is ``(probe_features, gallery_features)`` and
    ``training_pairs`` maps pair id to the same kind of tuple.
    """
    if not training_pairs:
        raise EmptyTrainingSet("no training pairs to select references from")
    ids = sorted(training_pairs)
    tp = forest.leaves(np.vstack([training_pairs[i][0] for i in ids]))
    tg = forest.leaves(np.vstack([training_pairs[i][1] for i in ids]))
    op = proximity_matrix(forest.leaves(test_pair[0]), tp)[0]
    og = proximity_matrix(forest.leaves(test_pair[1]), tg)[0]
    return [pid for pid, _ in rank_references(op, og, ids, R)]
