"""Correspondence transfer, gallery ranking and CMC evaluation."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Hashable, Iterable, Mapping, Sequence

import numpy as np

from .errors import IndexOutOfGrid, MissingGroundTruth, NoReferences
from .gmatch import CorrespondenceTemplate
from .metric import MetricModel, pairwise_distances


def pair_distance(probe_descrs, gallery_descrs, templates: Sequence[CorrespondenceTemplate],
                  metric: MetricModel, normalize_by_count: bool = False) -> float:
    """Sum of metric distances over every correspondence of every template.

    The sum is exactly rounded, so reordering templates or correspondences
    cannot change the result.
    """
    if not templates:
        raise NoReferences("at least one reference template is required")
    Fp = np.asarray(probe_descrs, dtype=np.float64)
    Fg = np.asarray(gallery_descrs, dtype=np.float64)
    D = pairwise_distances(metric, Fp, Fg)
    terms = []
    for t in templates:
        for wp, wg in t.correspondences:
            if not (0 <= wp < D.shape[0] and 0 <= wg < D.shape[1]):
                raise IndexOutOfGrid(f"template {t.pair_id} uses patch ({wp}, {wg}) outside the grid")
            terms.append(D[wp, wg])
    total = math.fsum(terms)
    if normalize_by_count:
        return total / len(terms) if terms else 0.0
    return total


def aligned_distance(probe_descrs, gallery_descrs, metric: MetricModel) -> float:
    """Baseline: same-position patches only, no matching."""
    Fp = np.asarray(probe_descrs, dtype=np.float64)
    Fg = np.asarray(gallery_descrs, dtype=np.float64)
    Z = (Fp - Fg) @ metric.factor
    return math.fsum(np.einsum("ij,ij->i", Z, Z))


@dataclass(frozen=True)
class RankedList:
    probe_id: Hashable
    gallery_ids: tuple
    distances: tuple[float, ...]

    def rank_of(self, gallery_id) -> int | None:
        """1-based rank of ``gallery_id`` or None when absent."""
        try:
            return self.gallery_ids.index(gallery_id) + 1
        except ValueError:
            return None


def make_ranked_list(probe_id, distances: Mapping[Hashable, float]) -> RankedList:
    order = sorted(distances.items(), key=lambda kv: (kv[1], kv[0]))
    return RankedList(probe_id, tuple(k for k, _ in order), tuple(float(v) for _, v in order))


def rank_gallery(probe_id, probe_descrs, gallery: Mapping[Hashable, np.ndarray],
                 select: Callable[[Hashable], Sequence[int]],
                 templates: Mapping[int, CorrespondenceTemplate], metric: MetricModel,
                 normalize_by_count: bool = False) -> RankedList:
    """Rank gallery images by transferred-correspondence distance to one probe.

    ``select(gallery_id)`` returns the reference pair ids for the test pair
    ``(probe, gallery_id)``.
    """
    if not gallery:
        raise NoReferences("gallery is empty")
    dist = {}
    for gid in gallery:
        refs = [templates[pid] for pid in select(gid)]
        dist[gid] = pair_distance(probe_descrs, gallery[gid], refs, metric, normalize_by_count)
    return make_ranked_list(probe_id, dist)


def collapse_multishot(ranked: RankedList, identity_of: Mapping[Hashable, Hashable]) -> RankedList:
    """Reduce an image-level ranking to identities by minimum distance."""
    best: dict = {}
    for gid, d in zip(ranked.gallery_ids, ranked.distances):
        ident = identity_of[gid]
        if ident not in best or d < best[ident]:
            best[ident] = d
    return make_ranked_list(ranked.probe_id, best)


@dataclass(frozen=True)
class CmcCurve:
    rates: tuple[float, ...]

    def __getitem__(self, rank: int) -> float:
        """Rate at 1-based ``rank``."""
        if rank < 1:
            raise IndexError("ranks start at 1")
        return self.rates[min(rank, len(self.rates)) - 1]

    def __len__(self) -> int:
        return len(self.rates)


def compute_cmc(ranked_lists: Iterable[RankedList], ground_truth: Mapping) -> CmcCurve:
    """Fraction of probes whose true match sits at rank <= r, for r = 1..G."""
    lists = list(ranked_lists)
    if not lists:
        return CmcCurve(())
    G = max(len(r.gallery_ids) for r in lists)
    hits = np.zeros(G + 1)
    for r in lists:
        if r.probe_id not in ground_truth:
            raise MissingGroundTruth(f"no ground truth for probe {r.probe_id!r}")
        k = r.rank_of(ground_truth[r.probe_id])
        if k is None:
            raise MissingGroundTruth(f"true match of probe {r.probe_id!r} is not in its gallery")
        hits[k] += 1
    rates = np.cumsum(hits[1:]) / len(lists)
    return CmcCurve(tuple(float(x) for x in rates))


def mean_cmc(curves: Sequence[CmcCurve]) -> CmcCurve:
    G = max(len(c) for c in curves)
    arr = np.array([[c[r] for r in range(1, G + 1)] for c in curves])
    return CmcCurve(tuple(float(x) for x in arr.mean(axis=0)))


def write_cmc_csv(curve: CmcCurve, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["rank", "rate"])
        for r, rate in enumerate(curve.rates, start=1):
            w.writerow([r, repr(rate)])


def read_cmc_csv(path: str | Path) -> CmcCurve:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return CmcCurve(tuple(float(r["rate"]) for r in sorted(rows, key=lambda r: int(r["rank"]))))


def write_ranked_csv(lists: Iterable[RankedList], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["probe_id", "rank", "gallery_id", "distance"])
        for rl in lists:
            for k, (gid, d) in enumerate(zip(rl.gallery_ids, rl.distances), start=1):
                w.writerow([rl.probe_id, k, gid, repr(d)])


def read_ranked_csv(path: str | Path) -> list[RankedList]:
    grouped: dict[str, list] = {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            grouped.setdefault(row["probe_id"], []).append(
                (int(row["rank"]), row["gallery_id"], float(row["distance"])))
    out = []
    for pid, rows in grouped.items():
        rows.sort()
        out.append(RankedList(pid, tuple(g for _, g, _ in rows), tuple(d for _, _, d in rows)))
    return out
