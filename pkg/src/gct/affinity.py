"""Affinity matrices between two attribute graphs.

Diagonal entries score a single correspondence ``(i, a)`` by spatial
proximity times visual similarity; off-diagonal entries score a pair of
correspondences by how consistently the two edges ``(i, j)`` and ``(a, b)``
displace in space and in feature space. Both factors use ``exp(-L2)``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import DimensionMismatch, InvalidConfig, UnknownPair
from .patchgraph import AttributeGraph, Pair


def _check_visual(u: np.ndarray, v: np.ndarray) -> None:
    if u.shape != v.shape:
        raise DimensionMismatch(f"visual attributes differ in shape: {u.shape} vs {v.shape}")


def node_affinity(spatial_i, visual_i, spatial_a, visual_a) -> float:
    """Compatibility of probe vertex ``i`` with gallery vertex ``a``, in (0, 1]."""
    pi, pa = np.asarray(spatial_i, float), np.asarray(spatial_a, float)
    fi, fa = np.asarray(visual_i, float), np.asarray(visual_a, float)
    _check_visual(fi, fa)
    _check_visual(pi, pa)
    return float(np.exp(-np.linalg.norm(pi - pa)) * np.exp(-np.linalg.norm(fi - fa)))


def edge_affinity(spatial_ij: tuple, visual_ij: tuple, spatial_ab: tuple, visual_ab: tuple) -> float:
    """Compatibility of probe edge ``(i, j)`` with gallery edge ``(a, b)``.

    Each argument is a 2-tuple of endpoint attributes, e.g.
    ``spatial_ij = (A_i, A_j)``.
    """
    pi, pj = (np.asarray(x, float) for x in spatial_ij)
    pa, pb = (np.asarray(x, float) for x in spatial_ab)
    fi, fj = (np.asarray(x, float) for x in visual_ij)
    fa, fb = (np.asarray(x, float) for x in visual_ab)
    _check_visual(fi - fj, fa - fb)
    _check_visual(pi - pj, pa - pb)
    dp = np.linalg.norm((pi - pj) - (pa - pb))
    df = np.linalg.norm((fi - fj) - (fa - fb))
    return float(np.exp(-dp) * np.exp(-df))


@dataclass(frozen=True, eq=False)
class AffinityMatrix:
    """Symmetric affinity over a compact list of candidate correspondences.

    Row ``p`` of ``values`` belongs to ``pairs[p]``; ``pairs`` is sorted
    lexicographically.
    """

    values: np.ndarray
    pairs: tuple[Pair, ...]
    index_map: dict = field(repr=False, default_factory=dict)

    def __post_init__(self):
        n = len(self.pairs)
        if self.values.shape != (n, n):
            raise DimensionMismatch(f"matrix shape {self.values.shape} does not match {n} pairs")
        if not self.index_map:
            object.__setattr__(self, "index_map", {p: k for k, p in enumerate(self.pairs)})
        self.values.setflags(write=False)

    @classmethod
    def from_dense(cls, values, pairs: Sequence[Pair] | None = None, n1: int | None = None,
                   n2: int | None = None) -> "AffinityMatrix":
        """Wrap a raw matrix; without ``pairs`` the full ``n1 x n2`` grid is assumed."""
        values = np.array(values, dtype=np.float64)
        if pairs is None:
            if n1 is None or n2 is None:
                raise InvalidConfig("need either pairs or both n1 and n2")
            pairs = [(i, a) for i in range(n1) for a in range(n2)]
        pairs = tuple((int(i), int(a)) for i, a in pairs)
        if list(pairs) != sorted(set(pairs)):
            raise InvalidConfig("candidate pairs must be unique and lexicographically sorted")
        return cls(values=values, pairs=pairs)

    @property
    def dim(self) -> int:
        return len(self.pairs)

    def index(self, pair: Pair) -> int:
        try:
            return self.index_map[tuple(pair)]
        except KeyError:
            raise UnknownPair(f"pair {tuple(pair)} is not a candidate") from None

    def conflicts(self) -> np.ndarray:
        """Boolean matrix: True where two candidates share a probe or gallery vertex."""
        arr = np.asarray(self.pairs, dtype=np.int64).reshape(-1, 2)
        same_i = arr[:, 0][:, None] == arr[:, 0][None, :]
        same_a = arr[:, 1][:, None] == arr[:, 1][None, :]
        return same_i | same_a

    def to_csv(self, path: str | Path) -> None:
        """Dump non-zero entries as ``row,col,value`` (debug aid)."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["row", "col", "value"])
            rows, cols = np.nonzero(self.values)
            for r, c in zip(rows.tolist(), cols.tolist()):
                w.writerow([r, c, repr(float(self.values[r, c]))])


def build_affinity(g1: AttributeGraph, g2: AttributeGraph,
                   candidates: Iterable[Pair]) -> AffinityMatrix:
    pairs = sorted({(int(i), int(a)) for i, a in candidates})
    if not pairs:
        raise InvalidConfig("candidate set is empty")
    if g1.visual.shape[1] != g2.visual.shape[1]:
        raise DimensionMismatch("graphs carry visual attributes of different dimension")
    idx = np.asarray(pairs, dtype=np.int64)
    I, A = idx[:, 0], idx[:, 1]
    if I.max() >= len(g1) or A.max() >= len(g2):
        raise UnknownPair("candidate refers to a vertex outside the graphs")

    P1, F1 = g1.spatial[I], g1.visual[I]
    P2, F2 = g2.spatial[A], g2.visual[A]

    node = np.exp(-np.linalg.norm(P1 - P2, axis=1)) * np.exp(-np.linalg.norm(F1 - F2, axis=1))

    # (A_i - A_j) - (A_a - A_b) for every candidate pair (p=(i,a), q=(j,b))
    dp = (P1[:, None, :] - P1[None, :, :]) - (P2[:, None, :] - P2[None, :, :])
    df = (F1[:, None, :] - F1[None, :, :]) - (F2[:, None, :] - F2[None, :, :])
    K = np.exp(-np.linalg.norm(dp, axis=2)) * np.exp(-np.linalg.norm(df, axis=2))

    linked = g1.adjacency[np.ix_(I, I)] & g2.adjacency[np.ix_(A, A)]
    # adjacency already excludes i == j and a == b
    K = np.where(linked, K, 0.0)
    # the two orientations of a pair differ only by sign inside the norm
    K = np.triu(K, 1)
    K = K + K.T
    K[np.diag_indices_from(K)] = node
    return AffinityMatrix(values=K, pairs=tuple(pairs))
