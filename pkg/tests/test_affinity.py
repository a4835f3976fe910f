from __future__ import annotations

import math

import numpy as np
import pytest

from gct.affinity import AffinityMatrix, build_affinity, edge_affinity, node_affinity
from gct.errors import DimensionMismatch, InvalidConfig, UnknownPair
from gct.patchgraph import GridConfig, build_graph, candidate_pairs, decompose

from conftest import random_graph


def test_node_affinity_identical_is_one():
    assert node_affinity([0.2, 0.3], [1.0, 0.0], [0.2, 0.3], [1.0, 0.0]) == 1.0


def test_node_affinity_visual_ln2_is_half():
    v = node_affinity([0.5, 0.5], [0.0, 0.0], [0.5, 0.5], [math.log(2), 0.0])
    assert abs(v - 0.5) < 1e-15


def test_node_affinity_hand_value():
    # exp(-|(0.3, 0.4)|) * exp(-|(0, 1)|) = exp(-0.5) * exp(-1)
    v = node_affinity([0.0, 0.0], [1.0, 0.0], [0.3, 0.4], [1.0, 1.0])
    assert abs(v - math.exp(-1.5)) < 1e-15


def test_edge_affinity_identical_displacement_is_one():
    A = ([0.1, 0.2], [0.4, 0.2])
    F = ([1.0, 0.0], [0.0, 1.0])
    assert edge_affinity(A, F, A, F) == 1.0


def test_edge_affinity_unit_displacement_gap():
    F = ([1.0, 0.0], [0.0, 1.0])
    v = edge_affinity(([0.0, 0.0], [1.0, 0.0]), F, ([0.0, 0.0], [0.0, 0.0]), F)
    assert abs(v - 0.36787944117144233) < 1e-15


def test_edge_affinity_is_translation_invariant(rng):
    A = [rng.uniform(size=2) for _ in range(4)]
    F = [rng.uniform(size=3) for _ in range(4)]
    t = rng.uniform(size=2)
    a = edge_affinity((A[0], A[1]), (F[0], F[1]), (A[2], A[3]), (F[2], F[3]))
    b = edge_affinity((A[0] + t, A[1] + t), (F[0], F[1]), (A[2] + t, A[3] + t), (F[2], F[3]))
    assert abs(a - b) < 1e-12


def test_visual_dimension_mismatch():
    with pytest.raises(DimensionMismatch):
        node_affinity([0, 0], [1, 0], [0, 0], [1, 0, 0])


def test_one_vertex_graphs():
    g = decompose(GridConfig(image_width=24, image_height=32))
    g1 = build_graph(g, [[1.0, 0.0]])
    g2 = build_graph(g, [[0.0, 1.0]])
    K = build_affinity(g1, g2, [(0, 0)])
    assert K.values.shape == (1, 1)
    assert K.values[0, 0] == node_affinity(g1.spatial[0], g1.visual[0], g2.spatial[0], g2.visual[0])


def test_consistent_pairing_has_unit_edge():
    g = decompose(GridConfig(image_width=36, image_height=32))  # one stripe, two patches
    assert len(g) == 2 and g.rows == 1
    G = build_graph(g, [[1.0, 0.0], [0.0, 1.0]])
    K = build_affinity(G, G, candidate_pairs(g, g, 0))
    assert K.values[K.index((0, 0)), K.index((1, 1))] == 1.0
    assert K.values[K.index((0, 0)), K.index((0, 1))] == 0.0  # conflicting


def test_unknown_pair_and_empty_candidates(rng):
    G = random_graph(rng, GridConfig())
    K = build_affinity(G, G, [(0, 0), (1, 1)])
    with pytest.raises(UnknownPair):
        K.index((0, 1))
    with pytest.raises(InvalidConfig):
        build_affinity(G, G, [])


def test_from_dense_requires_sorted_pairs():
    with pytest.raises(InvalidConfig):
        AffinityMatrix.from_dense(np.eye(2), pairs=[(1, 0), (0, 0)])
    with pytest.raises(DimensionMismatch):
        AffinityMatrix.from_dense(np.eye(3), n1=1, n2=2)


def test_to_csv_lists_nonzeros(tmp_path, rng):
    G = random_graph(rng, GridConfig())
    K = build_affinity(G, G, candidate_pairs(G.grid, G.grid, 0))
    K.to_csv(tmp_path / "k.csv")
    lines = (tmp_path / "k.csv").read_text().splitlines()
    assert lines[0] == "row,col,value"
    assert len(lines) - 1 == np.count_nonzero(K.values)
