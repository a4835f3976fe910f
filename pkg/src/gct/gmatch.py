"""Outlier-regularised graph matching and correspondence templates.

The matching objective over a binary correspondence vector ``x`` is

    x^T K x - lam * ||x||^2

subject to each probe and each gallery vertex being used at most once.
For binary ``x`` the penalty is simply ``lam`` times the number of active
correspondences, so ``lam`` is the price a correspondence has to earn back
through its own affinity and its context with the other active ones.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from .affinity import AffinityMatrix, build_affinity
from .errors import GeometryMismatch, InstanceTooLarge, InvalidConfig
from .patchgraph import AttributeGraph, Pair, candidate_pairs

BRUTEFORCE_LIMIT = 20


@dataclass(frozen=True)
class Assignment:
    pairs: tuple[Pair, ...]
    score: float

    def __len__(self) -> int:
        return len(self.pairs)

    def is_injective(self) -> bool:
        probes = [i for i, _ in self.pairs]
        gallery = [a for _, a in self.pairs]
        return len(set(probes)) == len(probes) and len(set(gallery)) == len(gallery)


def objective(K: AffinityMatrix, pairs: Iterable[Pair], lam: float) -> float:
    """Regularised matching score of a set of correspondences."""
    idx = [K.index(p) for p in pairs]
    if not idx:
        return 0.0
    sub = K.values[np.ix_(idx, idx)]
    return float(sub.sum() - lam * len(idx))


def _finish(K: AffinityMatrix, indices: Iterable[int], lam: float) -> Assignment:
    pairs = tuple(sorted(K.pairs[p] for p in indices))
    return Assignment(pairs=pairs, score=objective(K, pairs, lam))


def _greedy_path(V: np.ndarray, conflict: np.ndarray, start: int | None):
    """Grow one assignment by best marginal quadratic gain until nothing fits.

    Yields ``(quadratic_total, active_indices)`` after every addition. The
    path does not depend on ``lam``: the penalty lowers every gain equally.
    """
    n = V.shape[0]
    gain = np.diag(V).copy()
    feasible = np.ones(n, dtype=bool)
    active: list[int] = []
    total = 0.0
    while feasible.any():
        if start is not None and not active:
            p = start
        else:
            # argmax returns the first maximiser, i.e. the lexicographically smallest pair
            p = int(np.argmax(np.where(feasible, gain, -np.inf)))
        total += gain[p]
        active.append(p)
        feasible &= ~conflict[p]
        gain += 2.0 * V[:, p]
        yield total, list(active)


def solve_greedy(K: AffinityMatrix, lam: float, restarts: bool = True) -> Assignment:
    """Greedy marginal-gain solver with best-prefix stopping.

    From the empty assignment, the feasible candidate with the largest gain
    ``K[p,p] + 2 * sum_active K[p,q] - lam`` is added until no candidate is
    feasible; the best prefix of that path is returned. With ``restarts`` the
    same is repeated with every candidate forced first and the best prefix
    over all paths wins. Ties prefer fewer pairs, then the lexicographically
    smaller pair set.

    Every path is independent of ``lam``, so raising ``lam`` can only move
    the chosen prefix towards fewer pairs.
    """
    V = K.values
    conflict = K.conflicts()
    starts: list[int | None] = [None]
    if restarts:
        starts += list(range(K.dim))

    best_key = (0.0, 0, ())
    best: list[int] = []
    seen: set[tuple[int, ...]] = set()
    for s in starts:
        for total, active in _greedy_path(V, conflict, s):
            members = tuple(sorted(active))
            if members in seen:
                continue
            seen.add(members)
            value = total - lam * len(active)
            key = (-value, len(active), tuple(K.pairs[p] for p in members))
            if key < best_key:
                best_key, best = key, list(members)
    return _finish(K, best, lam)


def solve_bruteforce(K: AffinityMatrix, lam: float) -> Assignment:
    """Exhaustive search over every injective partial assignment.

    Intended as a reference for small instances only.
    """
    n = K.dim
    if n > BRUTEFORCE_LIMIT:
        raise InstanceTooLarge(f"{n} candidates exceeds the exhaustive limit of {BRUTEFORCE_LIMIT}")
    V = K.values.tolist()
    pairs = K.pairs
    best = [(0.0, 0, ()), ()]  # key (neg objective, size, pair tuple), members

    def visit(t: int, members: tuple[int, ...], used_i: frozenset, used_a: frozenset, quad: float):
        if t == n:
            return
        # branch that skips candidate t
        visit(t + 1, members, used_i, used_a, quad)
        i, a = pairs[t]
        if i in used_i or a in used_a:
            return
        row = V[t]
        q = quad + row[t] + 2.0 * sum(row[m] for m in members)
        grown = members + (t,)
        key = (-(q - lam * len(grown)), len(grown), tuple(pairs[m] for m in grown))
        if key < best[0]:
            best[0], best[1] = key, grown
        visit(t + 1, grown, used_i | {i}, used_a | {a}, q)

    visit(0, (), frozenset(), frozenset(), 0.0)
    return _finish(K, best[1], lam)


Solver = Callable[[AffinityMatrix, float], Assignment]


@dataclass(frozen=True)
class CorrespondenceTemplate:
    """Patch correspondences learned on one positive training pair."""

    pair_id: int
    correspondences: tuple[Pair, ...]
    stripes: tuple[int, ...] = ()
    probe_path: str = ""
    gallery_path: str = ""

    def __len__(self) -> int:
        return len(self.correspondences)

    def to_record(self) -> dict:
        return {
            "pair_id": self.pair_id,
            "probe_path": self.probe_path,
            "gallery_path": self.gallery_path,
            "correspondences": [[int(p), int(g)] for p, g in self.correspondences],
        }

    @classmethod
    def from_record(cls, rec: dict) -> "CorrespondenceTemplate":
        corr = tuple((int(p), int(g)) for p, g in rec["correspondences"])
        return cls(pair_id=rec["pair_id"], correspondences=corr,
                   probe_path=rec.get("probe_path", ""), gallery_path=rec.get("gallery_path", ""))


@dataclass(frozen=True, eq=False)
class TrainingPair:
    pair_id: int
    probe: AttributeGraph
    gallery: AttributeGraph
    probe_path: str = ""
    gallery_path: str = ""
    probe_identity: object = None
    gallery_identity: object = None


def _contributions(K: AffinityMatrix, assignment: Assignment) -> dict[Pair, float]:
    idx = [K.index(p) for p in assignment.pairs]
    sub = K.values[np.ix_(idx, idx)]
    own = np.diag(sub)
    context = sub.sum(axis=1) - own
    return {p: float(own[k] + 2.0 * context[k]) for k, p in enumerate(assignment.pairs)}


def learn_template(pair: TrainingPair, lam: float = 2.0, search_margin: int | None = None,
                   solver: Solver = solve_greedy) -> CorrespondenceTemplate:
    """Match one positive pair stripe by stripe and merge the results.

    When ``search_margin > 0`` two probe stripes may claim the same gallery
    patch; the claim with the larger contribution to its stripe's objective
    is kept (ties go to the smaller pair).
    """
    if pair.probe_identity is not None and pair.probe_identity != pair.gallery_identity:
        raise InvalidConfig(f"training pair {pair.pair_id} is not a positive pair")
    g1, g2 = pair.probe, pair.gallery
    if g1.grid is None or g2.grid is None:
        raise GeometryMismatch("graphs must carry their patch grid")
    claims: dict[int, tuple[float, Pair, int]] = {}
    for stripe in range(g1.grid.rows):
        cands = candidate_pairs(g1.grid, g2.grid, search_margin, probe_stripe=stripe)
        if not cands:
            continue
        K = build_affinity(g1, g2, cands)
        found = solver(K, lam)
        for p, c in _contributions(K, found).items():
            prev = claims.get(p[1])
            if prev is None or (-c, p) < (-prev[0], prev[1]):
                claims[p[1]] = (c, p, stripe)
    kept = sorted((p, s) for _, p, s in claims.values())
    return CorrespondenceTemplate(
        pair_id=pair.pair_id,
        correspondences=tuple(p for p, _ in kept),
        stripes=tuple(s for _, s in kept),
        probe_path=pair.probe_path,
        gallery_path=pair.gallery_path,
    )


def learn_templates(pairs: Iterable[TrainingPair], lam: float = 2.0,
                    search_margin: int | None = None,
                    solver: Solver = solve_greedy) -> list[CorrespondenceTemplate]:
    out = [learn_template(p, lam, search_margin, solver) for p in pairs]
    return sorted(out, key=lambda t: t.pair_id)


def save_templates(templates: Sequence[CorrespondenceTemplate], path: str | Path) -> None:
    with open(path, "w") as fh:
        json.dump([t.to_record() for t in templates], fh, indent=1)
        fh.write("\n")


def load_templates(path: str | Path) -> list[CorrespondenceTemplate]:
    with open(path) as fh:
        return [CorrespondenceTemplate.from_record(r) for r in json.load(fh)]
