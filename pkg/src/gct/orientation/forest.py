"""Random forest over orientation features, used for leaf co-occurrence.

Trees are CART classifiers with gini impurity, ``sqrt(d)`` candidate
features per split and bootstrap resampling, grown until a node is pure or
holds fewer than ``min_samples_split`` samples. Every tree draws its own
generator from the master seed, so training order does not affect the
result.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from ..errors import DimensionMismatch, InsufficientData, LabelOutOfRange

N_ORIENTATIONS = 8


@dataclass(frozen=True, eq=False)
class DecisionTree:
    """Flat array tree; a node is a leaf when ``left[node] == -1``.

    Leaf ids are node indices, which is all leaf co-occurrence needs.
    """

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    label: np.ndarray

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    def apply(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(X)
        node = np.zeros(X.shape[0], dtype=np.int64)
        rows = np.arange(X.shape[0])
        while True:
            inner = self.left[node] >= 0
            if not inner.any():
                return node
            r, n = rows[inner], node[inner]
            go_left = X[r, self.feature[n]] <= self.threshold[n]
            node[inner] = np.where(go_left, self.left[n], self.right[n])

    def to_dict(self) -> dict:
        return {"feature": self.feature.tolist(), "threshold": self.threshold.tolist(),
                "left": self.left.tolist(), "right": self.right.tolist(),
                "label": self.label.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "DecisionTree":
        return cls(np.asarray(d["feature"], np.int64), np.asarray(d["threshold"], np.float64),
                   np.asarray(d["left"], np.int64), np.asarray(d["right"], np.int64),
                   np.asarray(d["label"], np.int64))


def _best_split(X: np.ndarray, y: np.ndarray, feats: np.ndarray, n_classes: int):
    """Lowest weighted gini split over ``feats``; None if every column is constant."""
    n = X.shape[0]
    cols = X[:, feats]
    order = np.argsort(cols, axis=0, kind="stable")
    xs = np.take_along_axis(cols, order, axis=0)
    ys = y[order]
    onehot = np.zeros((n, len(feats), n_classes))
    np.put_along_axis(onehot, ys[:, :, None], 1.0, axis=2)
    left = np.cumsum(onehot, axis=0)[:-1]          # (n-1, m, C): first k+1 samples left
    total = left[-1] + onehot[-1]
    right = total[None] - left
    nl = np.arange(1, n, dtype=np.float64)[:, None]
    nr = n - nl
    # n_l*gini_l + n_r*gini_r
    imp = (nl - (left ** 2).sum(axis=2) / nl) + (nr - (right ** 2).sum(axis=2) / nr)
    valid = xs[1:] > xs[:-1]
    if not valid.any():
        return None
    imp = np.where(valid, imp, np.inf)
    flat = int(np.argmin(imp.T))                   # feature-major so earlier features win ties
    j, k = divmod(flat, n - 1)
    lo, hi = xs[k, j], xs[k + 1, j]
    thr = lo + (hi - lo) / 2.0
    if not lo <= thr < hi:
        thr = lo
    return int(feats[j]), float(thr)


def grow_tree(X: np.ndarray, y: np.ndarray, n_classes: int, max_features: int,
              rng: np.random.Generator, min_samples_split: int = 2) -> DecisionTree:
    feature, threshold, left, right, label = [], [], [], [], []

    def new_node(idx):
        counts = np.bincount(y[idx], minlength=n_classes)
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        label.append(int(np.argmax(counts)))
        return len(feature) - 1

    d = X.shape[1]
    stack = [(new_node(np.arange(len(y))), np.arange(len(y)))]
    while stack:
        node, idx = stack.pop()
        if len(idx) < min_samples_split or np.all(y[idx] == y[idx[0]]):
            continue
        perm = rng.permutation(d)
        split = None
        # keep drawing feature subsets until one of them can split the node
        for start in range(0, d, max_features):
            split = _best_split(X[idx], y[idx], perm[start:start + max_features], n_classes)
            if split is not None:
                break
        if split is None:
            continue
        f, t = split
        mask = X[idx, f] <= t
        li, ri = idx[mask], idx[~mask]
        feature[node], threshold[node] = f, t
        ln, rn = new_node(li), new_node(ri)
        left[node], right[node] = ln, rn
        stack.append((rn, ri))
        stack.append((ln, li))
    return DecisionTree(np.asarray(feature, np.int64), np.asarray(threshold, np.float64),
                        np.asarray(left, np.int64), np.asarray(right, np.int64),
                        np.asarray(label, np.int64))


@dataclass(frozen=True, eq=False)
class OrientationForest:
    trees: tuple[DecisionTree, ...]
    n_features: int
    class_count: int = N_ORIENTATIONS
    seed: int | None = None

    @property
    def n_trees(self) -> int:
        return len(self.trees)

    def _check(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X.shape[1] != self.n_features:
            raise DimensionMismatch(f"expected {self.n_features} features, got {X.shape[1]}")
        return X

    def leaves(self, X) -> np.ndarray:
        """Leaf id of every sample in every tree, shape ``(n_samples, n_trees)``."""
        X = self._check(X)
        return np.stack([t.apply(X) for t in self.trees], axis=1)

    def predict(self, X) -> np.ndarray:
        X = self._check(X)
        votes = np.stack([t.label[t.apply(X)] for t in self.trees], axis=1)
        counts = np.apply_along_axis(np.bincount, 1, votes, minlength=self.class_count)
        return np.argmax(counts, axis=1)

    def to_dict(self) -> dict:
        return {"n_features": self.n_features, "class_count": self.class_count,
                "seed": self.seed, "trees": [t.to_dict() for t in self.trees]}

    @classmethod
    def from_dict(cls, d: dict) -> "OrientationForest":
        return cls(trees=tuple(DecisionTree.from_dict(t) for t in d["trees"]),
                   n_features=int(d["n_features"]), class_count=int(d["class_count"]),
                   seed=d.get("seed"))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "OrientationForest":
        return cls.from_dict(json.loads(Path(path).read_text()))


def train_forest(features: Sequence, labels: Sequence[int], n_trees: int = 500, seed: int = 0,
                 class_count: int = N_ORIENTATIONS, max_features: int | None = None,
                 min_samples_split: int = 2) -> OrientationForest:
    X = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels)
    if X.ndim != 2 or len(X) != len(y):
        raise DimensionMismatch("features must be 2-D with one label per row")
    if n_trees < 1:
        raise InsufficientData("need at least one tree")
    if y.size and (not np.issubdtype(y.dtype, np.integer) or y.min() < 0 or y.max() >= class_count):
        raise LabelOutOfRange(f"labels must be integers in [0, {class_count - 1}]")
    y = y.astype(np.int64)
    if len(np.unique(y)) < 2:
        raise InsufficientData("need samples from at least two classes")
    m = max_features or max(1, int(math.sqrt(X.shape[1])))
    children = np.random.SeedSequence(seed).spawn(n_trees)
    trees = []
    for ss in children:
        rng = np.random.default_rng(ss)
        boot = rng.integers(0, len(y), size=len(y))
        trees.append(grow_tree(X[boot], y[boot], class_count, m, rng, min_samples_split))
    return OrientationForest(trees=tuple(trees), n_features=X.shape[1],
                             class_count=class_count, seed=seed)
