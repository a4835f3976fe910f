"""Dataset manifests, camera roles, train/test splits and image loading."""

from __future__ import annotations

import csv
import logging
import re
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np
from PIL import Image

from ..errors import DatasetError, LabelOutOfRange

log = logging.getLogger(__name__)

ROLES = ("probe", "gallery")
_LAYOUT_NAME = re.compile(r"^(?P<identity>[^_]+)_(?P<seq>[^.]+)\.(png|jpg|jpeg|bmp)$", re.I)


@dataclass(frozen=True)
class Entry:
    path: str
    identity: str
    camera: str
    role: str
    orientation: int | None = None


@dataclass(frozen=True)
class Dataset:
    root: Path
    entries: tuple[Entry, ...]
    excluded: tuple[str, ...] = field(default=())

    def __len__(self) -> int:
        return len(self.entries)

    def resolve(self, path: str) -> Path:
        return self.root / path

    @property
    def identities(self) -> list[str]:
        """Identities seen under both roles, sorted."""
        roles: dict[str, set] = {}
        for e in self.entries:
            roles.setdefault(e.identity, set()).add(e.role)
        return sorted(k for k, v in roles.items() if v >= set(ROLES))

    def by_identity(self, identity: str, role: str) -> list[Entry]:
        return [e for e in self.entries if e.identity == identity and e.role == role]


def _assign_roles(rows: list[dict], source: str) -> None:
    if all(r.get("role") for r in rows):
        for r in rows:
            if r["role"] not in ROLES:
                raise DatasetError(f"{source}: role must be probe or gallery, got {r['role']!r}")
        return
    cameras = sorted({r["camera"] for r in rows})
    if len(cameras) != 2:
        raise DatasetError(
            f"{source}: {len(cameras)} cameras found; add a 'role' column mapping each image "
            "to probe or gallery")
    for r in rows:
        r["role"] = ROLES[cameras.index(r["camera"])]


def _read_manifest(root: Path, manifest: Path) -> list[dict]:
    rows = []
    with open(manifest, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DatasetError(f"{manifest}: empty manifest") from None
        missing = {"path", "identity", "camera"} - set(header)
        if missing:
            raise DatasetError(f"{manifest}: header lacks {sorted(missing)}")
        for lineno, values in enumerate(reader, start=2):
            if not values or all(not v.strip() for v in values):
                continue
            if len(values) != len(header):
                raise DatasetError(
                    f"{manifest} line {lineno}: expected {len(header)} fields, got {len(values)}")
            row = dict(zip(header, (v.strip() for v in values)))
            if not row["path"] or not row["identity"] or not row["camera"]:
                raise DatasetError(f"{manifest} line {lineno}: empty path, identity or camera")
            ori = row.get("orientation", "")
            if ori:
                try:
                    row["orientation"] = int(ori)
                except ValueError:
                    raise DatasetError(f"{manifest} line {lineno}: bad orientation {ori!r}") from None
                if not 0 <= row["orientation"] <= 7:
                    raise DatasetError(f"{manifest} line {lineno}: orientation outside 0..7")
            else:
                row["orientation"] = None
            row["_line"] = lineno
            rows.append(row)
    return rows


def _scan_layout(root: Path) -> list[dict]:
    rows = []
    for cam in ("cam_a", "cam_b"):
        d = root / cam
        if not d.is_dir():
            raise DatasetError(f"{root}: no manifest.csv and no {cam}/ directory")
        for p in sorted(d.iterdir()):
            m = _LAYOUT_NAME.match(p.name)
            if not m:
                continue
            rows.append({"path": f"{cam}/{p.name}", "identity": m["identity"], "camera": cam,
                         "orientation": None})
    return rows


def load_dataset(root: str | Path, manifest: str | Path | None = None) -> Dataset:
    """Load a dataset from ``manifest`` (CSV ``path,identity,camera[,role][,orientation]``).

    Without a manifest, ``root/manifest.csv`` is tried, then the
    ``cam_a/`` + ``cam_b/`` layout with ``<identity>_<seq>.png`` names.
    """
    root = Path(root)
    if manifest is None and (root / "manifest.csv").exists():
        manifest = root / "manifest.csv"
    if manifest is not None:
        manifest = Path(manifest)
        if not manifest.is_absolute() and not manifest.exists():
            manifest = root / manifest
        rows = _read_manifest(root, manifest)
        source = str(manifest)
    else:
        rows = _scan_layout(root)
        source = str(root)
    if not rows:
        raise DatasetError(f"{source}: no images listed")

    seen: dict[str, object] = {}
    for r in rows:
        if r["path"] in seen:
            where = f" (line {r['_line']})" if "_line" in r else ""
            raise DatasetError(f"{source}: duplicate entry {r['path']!r}{where}")
        seen[r["path"]] = True
        if not (root / r["path"]).is_file():
            raise DatasetError(f"{source}: missing file {r['path']!r}")
    _assign_roles(rows, source)

    entries = sorted(
        (Entry(r["path"], r["identity"], r["camera"], r["role"], r.get("orientation"))
         for r in rows), key=lambda e: e.path)
    ds = Dataset(root=root, entries=tuple(entries))
    complete = set(ds.identities)
    lonely = sorted({e.identity for e in entries} - complete)
    if lonely:
        warnings.warn(f"{len(lonely)} identities appear under one role only and are excluded "
                      f"from pairs: {lonely[:5]}{'...' if len(lonely) > 5 else ''}")
    return Dataset(root=root, entries=ds.entries, excluded=tuple(lonely))


def write_manifest(entries: Iterable[Entry], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["path", "identity", "camera", "role", "orientation"])
        for e in entries:
            w.writerow([e.path, e.identity, e.camera, e.role,
                        "" if e.orientation is None else e.orientation])


def load_orientation_labels(path: str | Path) -> dict[str, int]:
    """Read a ``path,label`` CSV of orientation classes 0..7."""
    labels = {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or {"path", "label"} - set(reader.fieldnames):
            raise DatasetError(f"{path}: header must be 'path,label'")
        for lineno, row in enumerate(reader, start=2):
            try:
                lab = int(row["label"])
            except (TypeError, ValueError):
                raise DatasetError(f"{path} line {lineno}: bad label {row['label']!r}") from None
            if not 0 <= lab <= 7:
                raise LabelOutOfRange(f"{path} line {lineno}: label {lab} outside 0..7")
            labels[row["path"]] = lab
    return labels


def split_identities(dataset: Dataset, rng: np.random.Generator,
                     train_fraction: float = 0.5) -> tuple[list[str], list[str]]:
    """Random disjoint train/test identity lists (each sorted)."""
    ids = dataset.identities
    perm = rng.permutation(len(ids))
    n_train = int(len(ids) * train_fraction)
    train = sorted(ids[k] for k in perm[:n_train])
    test = sorted(ids[k] for k in perm[n_train:])
    return train, test


def load_rgb(path: str | Path, width: int, height: int) -> np.ndarray:
    with Image.open(path) as im:
        im = im.convert("RGB")
        if im.size != (width, height):
            im = im.resize((width, height), Image.BILINEAR)
        return np.asarray(im, dtype=np.uint8)


def load_gray(path: str | Path, width: int, height: int) -> np.ndarray:
    with Image.open(path) as im:
        im = im.convert("L")
        if im.size != (width, height):
            im = im.resize((width, height), Image.BILINEAR)
        return np.asarray(im, dtype=np.float64) / 255.0
