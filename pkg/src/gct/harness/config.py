"""Experiment configuration and its flat ``key = value`` file format.

Blank lines and ``#`` comments are ignored. Keys are the field names of
:class:`ExperimentConfig`, except ``lambda`` for :attr:`lam`. Unknown keys
are rejected.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, fields
from pathlib import Path

from ..errors import InvalidConfig
from ..features import DescriptorConfig
from ..orientation import HogConfig
from ..patchgraph import GridConfig

_ALIASES = {"lambda": "lam"}
_REVERSE = {v: k for k, v in _ALIASES.items()}


@dataclass(frozen=True)
class ExperimentConfig:
    canon_w: int = 48
    canon_h: int = 128
    patch_w: int = 24
    patch_h: int = 32
    stride_x: int = 12
    stride_y: int = 16
    search_margin: int = 1
    hog_cells: tuple[int, ...] = (8, 16, 32)
    hog_bins: int = 9
    hog_w: int = 64
    hog_h: int = 128
    trees: int = 500
    lam: float = 2.0
    refs: int = 20
    pca_dim: int = 34
    ridge: float | None = None
    seed: int = 0
    trials: int = 10
    train_fraction: float = 0.5
    normalize_by_count: bool = False
    multishot: str = "min"
    restarts: bool = True
    negatives_per_pair: int = 2
    orientation_csv: str = ""
    figures: bool = True

    def __post_init__(self):
        if self.trials < 1:
            raise InvalidConfig("trials must be >= 1")
        if not 0.0 < self.train_fraction < 1.0:
            raise InvalidConfig("train_fraction must lie in (0, 1)")
        if self.refs < 1:
            raise InvalidConfig("refs must be >= 1")
        if self.lam < 0:
            raise InvalidConfig("lambda must be >= 0")
        if self.multishot != "min":
            raise InvalidConfig("only multishot = min is supported")
        self.grid()  # validates geometry
        self.hog()

    def grid(self) -> GridConfig:
        return GridConfig(self.canon_w, self.canon_h, self.patch_w, self.patch_h,
                          self.stride_x, self.stride_y, self.search_margin)

    def hog(self) -> HogConfig:
        return HogConfig(cell_sizes=tuple(self.hog_cells), bins=self.hog_bins,
                         image_width=self.hog_w, image_height=self.hog_h)

    def descriptor(self) -> DescriptorConfig:
        return DescriptorConfig(self.patch_w, self.patch_h)

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)

    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, tuple):
                v = ",".join(str(x) for x in v)
            elif v is None:
                v = "auto"
            lines.append(f"{_REVERSE.get(f.name, f.name)} = {v}")
        return "\n".join(lines) + "\n"


def _coerce(name: str, raw: str, default):
    raw = raw.strip()
    if name == "ridge":
        return None if raw.lower() in ("", "auto", "none") else float(raw)
    if isinstance(default, bool):
        if raw.lower() in ("1", "true", "yes", "on"):
            return True
        if raw.lower() in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {raw!r}")
    if isinstance(default, int):
        return int(raw)
    if isinstance(default, float):
        return float(raw)
    if isinstance(default, tuple):
        return tuple(int(x) for x in raw.split(",") if x.strip())
    return raw


def parse_config(text: str, base: ExperimentConfig | None = None) -> ExperimentConfig:
    base = base or ExperimentConfig()
    known = {f.name for f in fields(base)}
    changes = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InvalidConfig(f"config line {lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        name = _ALIASES.get(key, key)
        if name not in known:
            raise InvalidConfig(f"config line {lineno}: unknown key {key!r}")
        try:
            changes[name] = _coerce(name, value, getattr(base, name))
        except ValueError as exc:
            raise InvalidConfig(f"config line {lineno}: {exc}") from None
    return base.replace(**changes)


def load_config(path: str | Path, base: ExperimentConfig | None = None) -> ExperimentConfig:
    return parse_config(Path(path).read_text(), base)
