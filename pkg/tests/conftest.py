from __future__ import annotations

import numpy as np
import pytest

from gct.affinity import AffinityMatrix
from gct.patchgraph import GridConfig, build_graph, decompose


def random_affinity(rng: np.random.Generator, n1: int, n2: int) -> AffinityMatrix:
    """Full n1 x n2 candidate set, entries U[0,1] symmetrised, conflicts zeroed."""
    n = n1 * n2
    A = rng.uniform(0.0, 1.0, (n, n))
    V = (A + A.T) / 2.0
    K = AffinityMatrix.from_dense(V, n1=n1, n2=n2)
    C = K.conflicts()
    np.fill_diagonal(C, False)
    return AffinityMatrix.from_dense(np.where(C, 0.0, V), n1=n1, n2=n2)


def random_graph(rng: np.random.Generator, config: GridConfig, dim: int = 6):
    grid = decompose(config)
    return build_graph(grid, rng.uniform(0.0, 1.0, (len(grid), dim)))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def small_grid() -> GridConfig:
    # 3 rows x 3 cols of 16x16 patches with 8 px stride
    return GridConfig(image_width=32, image_height=32, patch_width=16, patch_height=16)


# one line per acceptance criterion, repeated in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
