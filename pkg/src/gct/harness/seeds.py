"""Named random sub-streams derived from one master seed."""

from __future__ import annotations

import zlib

import numpy as np


def substream_seed(master: int, name: str, *extra: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([int(master), zlib.crc32(name.encode()), *map(int, extra)])


def substream(master: int, name: str, *extra: int) -> np.random.Generator:
    """Generator for stage ``name``; ``extra`` distinguishes e.g. trials."""
    return np.random.default_rng(substream_seed(master, name, *extra))


def substream_int(master: int, name: str, *extra: int) -> int:
    return int(substream_seed(master, name, *extra).generate_state(1)[0])
