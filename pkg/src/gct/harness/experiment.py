"""Train -> select -> transfer -> evaluate, over repeated random splits."""

from __future__ import annotations

import json
import logging
import warnings
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from ..errors import GctError, InsufficientData
from ..features import PcaModel, apply_pca, extract_image_descriptors, fit_pca
from ..gmatch import (CorrespondenceTemplate, TrainingPair, learn_templates, save_templates,
                      load_templates, solve_greedy)
from ..metric import MetricModel, fit_kissme
from ..orientation import (OrientationForest, extract_hog, proximity_matrix, rank_references,
                           train_forest)
from ..patchgraph import PatchGrid, build_graph, decompose
from ..transfer import (CmcCurve, RankedList, aligned_distance, collapse_multishot, compute_cmc,
                        make_ranked_list, mean_cmc, pair_distance, write_cmc_csv,
                        write_ranked_csv)
from .config import ExperimentConfig
from .dataset import Dataset, Entry, load_gray, load_orientation_labels, load_rgb, split_identities
from .seeds import substream, substream_int

log = logging.getLogger(__name__)

MODES = ("gct", "baseline")


class ExperimentError(GctError):
    pass


@contextmanager
def stage(name: str, trial: int | None = None):
    try:
        yield
    except GctError as exc:
        where = f"trial {trial}, " if trial is not None else ""
        raise ExperimentError(f"{where}stage '{name}': {exc}") from exc


class FeatureStore:
    """Lazily computed per-image descriptors and HoG vectors."""

    def __init__(self, dataset: Dataset, config: ExperimentConfig):
        self.dataset = dataset
        self.config = config
        self.grid: PatchGrid = decompose(config.grid())
        self.hog_config = config.hog()
        self._desc: dict[str, np.ndarray] = {}
        self._hog: dict[str, np.ndarray] = {}

    def rgb(self, path: str) -> np.ndarray:
        c = self.config
        return load_rgb(self.dataset.resolve(path), c.canon_w, c.canon_h)

    def descriptors(self, path: str) -> np.ndarray:
        if path not in self._desc:
            d = extract_image_descriptors(self.rgb(path), self.grid, self.config.descriptor())
            d.setflags(write=False)
            self._desc[path] = d
        return self._desc[path]

    def hog(self, path: str) -> np.ndarray:
        if path not in self._hog:
            h = self.hog_config
            img = load_gray(self.dataset.resolve(path), h.image_width, h.image_height)
            self._hog[path] = extract_hog(img, h)
        return self._hog[path]


@dataclass
class GctModel:
    config: ExperimentConfig
    pair_ids: list[int]
    templates: dict[int, CorrespondenceTemplate]
    pca: PcaModel
    metric: MetricModel
    baseline_metric: MetricModel
    forest: OrientationForest
    train_probe_leaves: np.ndarray
    train_gallery_leaves: np.ndarray
    train_identities: list[str] = field(default_factory=list)

    def project(self, descriptors: np.ndarray) -> np.ndarray:
        return apply_pca(self.pca, descriptors)

    def references(self, probe_leaves: np.ndarray, gallery_leaves: np.ndarray) -> list[int]:
        op = proximity_matrix(probe_leaves, self.train_probe_leaves)[0]
        og = proximity_matrix(gallery_leaves, self.train_gallery_leaves)[0]
        return [pid for pid, _ in rank_references(op, og, self.pair_ids, self.config.refs)]

    def save(self, out_dir: str | Path) -> None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        save_templates([self.templates[i] for i in self.pair_ids], out / "templates.json")
        self.metric.save(out / "metric.json")
        self.baseline_metric.save(out / "baseline_metric.json")
        self.forest.save(out / "forest.json")
        (out / "pca.json").write_text(json.dumps(self.pca.to_dict()) + "\n")
        (out / "config.txt").write_text(self.config.to_text())
        (out / "split.json").write_text(json.dumps({"train": self.train_identities}, indent=1) + "\n")

    @classmethod
    def load(cls, model_dir: str | Path, store: FeatureStore) -> "GctModel":
        from .config import load_config

        d = Path(model_dir)
        cfg = load_config(d / "config.txt")
        templates = {t.pair_id: t for t in load_templates(d / "templates.json")}
        ids = sorted(templates)
        forest = OrientationForest.load(d / "forest.json")
        tp = forest.leaves(np.vstack([store.hog(templates[i].probe_path) for i in ids]))
        tg = forest.leaves(np.vstack([store.hog(templates[i].gallery_path) for i in ids]))
        split = json.loads((d / "split.json").read_text())
        return cls(cfg, ids, templates, PcaModel.from_dict(json.loads((d / "pca.json").read_text())),
                   MetricModel.load(d / "metric.json"), MetricModel.load(d / "baseline_metric.json"),
                   forest, tp, tg, split.get("train", []))


def positive_pairs(dataset: Dataset, identities: Iterable[str]) -> list[tuple[int, Entry, Entry]]:
    out = []
    for ident in identities:
        for p in dataset.by_identity(ident, "probe"):
            for g in dataset.by_identity(ident, "gallery"):
                out.append((len(out), p, g))
    return out


def _diffs(Fp: Sequence[np.ndarray], Fg: Sequence[np.ndarray],
           corr: Sequence[Sequence[tuple[int, int]]], rng: np.random.Generator, negatives: int):
    """Positive and negative difference vectors along the given correspondences.

    Negatives pair a probe with the gallery of another training pair, using
    the probe's own correspondences.
    """
    pos, neg = [], []
    n = len(Fp)
    for k in range(n):
        if not corr[k]:
            continue
        wp, wg = np.asarray(corr[k]).T
        pos.append(Fp[k][wp] - Fg[k][wg])
        if n < 2:
            continue
        others = [j for j in range(n) if j != k]
        for j in rng.choice(others, size=min(negatives, len(others)), replace=False):
            neg.append(Fp[k][wp] - Fg[j][wg])
    if not pos or not neg:
        raise InsufficientData("no correspondences to learn the metric from")
    return np.vstack(pos), np.vstack(neg)


def _orientation_labels(dataset: Dataset, config: ExperimentConfig) -> dict[str, int]:
    """Labels from the manifest plus the external ``orientation_csv``.

    External paths are taken relative to the CSV's own directory.
    """
    labels = {e.path: e.orientation for e in dataset.entries if e.orientation is not None}
    if config.orientation_csv:
        base = Path(config.orientation_csv).resolve().parent
        external = load_orientation_labels(config.orientation_csv)
        labels.update({str(base / p): lab for p, lab in external.items()})
    return labels


def train_model(dataset: Dataset, train_ids: Sequence[str], config: ExperimentConfig,
                store: FeatureStore | None = None, trial: int = 0) -> GctModel:
    store = store or FeatureStore(dataset, config)
    grid = store.grid
    pairs = positive_pairs(dataset, train_ids)
    if not pairs:
        raise InsufficientData("no positive training pairs")
    paths = sorted({e.path for _, p, g in pairs for e in (p, g)})

    with stage("pca", trial):
        raw = np.vstack([store.descriptors(p) for p in paths])
        d = min(config.pca_dim, raw.shape[1], raw.shape[0])
        if d < config.pca_dim:
            log.info("pca_dim %d clamped to %d (descriptor dim %d)", config.pca_dim, d, raw.shape[1])
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            pca = fit_pca(raw, d)

    with stage("templates", trial):
        tpairs = [TrainingPair(pid, build_graph(grid, store.descriptors(p.path)),
                               build_graph(grid, store.descriptors(g.path)),
                               p.path, g.path, p.identity, g.identity)
                  for pid, p, g in pairs]
        solver = solve_greedy if config.restarts else (lambda K, lam: solve_greedy(K, lam, False))
        templates = {t.pair_id: t for t in learn_templates(tpairs, config.lam,
                                                           config.search_margin, solver)}
        sizes = [len(t) for t in templates.values()]
        log.info("trial %d: %d templates, mean size %.1f", trial, len(sizes), float(np.mean(sizes)))

    with stage("metric", trial):
        Fp = [apply_pca(pca, store.descriptors(p.path)) for _, p, _ in pairs]
        Fg = [apply_pca(pca, store.descriptors(g.path)) for _, _, g in pairs]
        ids = [pid for pid, _, _ in pairs]
        corr = [templates[i].correspondences for i in ids]
        pos, neg = _diffs(Fp, Fg, corr, substream(config.seed, "negatives", trial),
                          config.negatives_per_pair)
        metric = fit_kissme(pos, neg, config.ridge)
        aligned = [tuple((w, w) for w in range(len(grid)))] * len(ids)
        pos, neg = _diffs(Fp, Fg, aligned, substream(config.seed, "negatives", trial),
                          config.negatives_per_pair)
        baseline_metric = fit_kissme(pos, neg, config.ridge)

    with stage("forest", trial):
        labels = _orientation_labels(dataset, config)
        external = sorted(p for p in labels if Path(p).is_absolute())
        labelled = [p for p in paths if p in labels] + external
        if not labelled:
            raise InsufficientData("no orientation labels for the training images")
        forest = train_forest(np.vstack([store.hog(p) for p in labelled]),
                              [labels[p] for p in labelled], n_trees=config.trees,
                              seed=substream_int(config.seed, "forest", trial))
        tp = forest.leaves(np.vstack([store.hog(p.path) for _, p, _ in pairs]))
        tg = forest.leaves(np.vstack([store.hog(g.path) for _, _, g in pairs]))

    return GctModel(config, ids, templates, pca, metric, baseline_metric, forest, tp, tg,
                    list(train_ids))


@dataclass
class Evaluation:
    ranked: list[RankedList]
    ground_truth: dict[str, str]
    cmc: CmcCurve


def evaluate(model: GctModel, dataset: Dataset, test_ids: Sequence[str], store: FeatureStore,
             mode: str = "gct") -> Evaluation:
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    cfg = model.config
    probes = [e for i in test_ids for e in dataset.by_identity(i, "probe")]
    gallery = [e for i in test_ids for e in dataset.by_identity(i, "gallery")]
    G = {e.path: model.project(store.descriptors(e.path)) for e in gallery}
    identity_of = {e.path: e.identity for e in gallery}
    if mode == "gct":
        g_leaves = {e.path: model.forest.leaves(store.hog(e.path)) for e in gallery}

    ranked, truth = [], {}
    for pe in probes:
        Fp = model.project(store.descriptors(pe.path))
        if mode == "gct":
            op = proximity_matrix(model.forest.leaves(store.hog(pe.path)), model.train_probe_leaves)[0]
        dist = {}
        for ge in gallery:
            if mode == "gct":
                og = proximity_matrix(g_leaves[ge.path], model.train_gallery_leaves)[0]
                refs = rank_references(op, og, model.pair_ids, cfg.refs)
                dist[ge.path] = pair_distance(Fp, G[ge.path], [model.templates[p] for p, _ in refs],
                                              model.metric, cfg.normalize_by_count)
            else:
                dist[ge.path] = aligned_distance(Fp, G[ge.path], model.baseline_metric)
        pid = pe.path if len(dataset.by_identity(pe.identity, "probe")) > 1 else pe.identity
        ranked.append(collapse_multishot(make_ranked_list(pid, dist), identity_of))
        truth[pid] = pe.identity
    return Evaluation(ranked, truth, compute_cmc(ranked, truth))


def run_experiment(config: ExperimentConfig, dataset: Dataset, out_dir: str | Path | None = None,
                   modes: Sequence[str] = ("gct",)) -> dict:
    """Run ``config.trials`` random half/half splits and summarise CMC per mode.

    Writes, per mode, ``<mode>_trial_XX_cmc.csv``, ``<mode>_trial_XX_ranked.csv``
    and ``<mode>_cmc_mean.csv``, plus ``summary.json`` and, when enabled,
    ``cmc.png``. The returned report is what ``summary.json`` holds.
    """
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    store = FeatureStore(dataset, config)
    curves: dict[str, list[CmcCurve]] = {m: [] for m in modes}
    splits = []
    for trial in range(config.trials):
        train_ids, test_ids = split_identities(dataset, substream(config.seed, "split", trial),
                                               config.train_fraction)
        if set(train_ids) & set(test_ids):
            raise ExperimentError("train and test identities overlap")
        splits.append({"train": len(train_ids), "test": len(test_ids)})
        model = train_model(dataset, train_ids, config, store, trial)
        for mode in modes:
            with stage(f"evaluate:{mode}", trial):
                ev = evaluate(model, dataset, test_ids, store, mode)
            curves[mode].append(ev.cmc)
            log.info("trial %d %s rank-1 %.3f", trial, mode, ev.cmc[1])
            if out is not None:
                write_cmc_csv(ev.cmc, out / f"{mode}_trial_{trial:02d}_cmc.csv")
                write_ranked_csv(ev.ranked, out / f"{mode}_trial_{trial:02d}_ranked.csv")

    report = {"config": config.to_text().splitlines(), "splits": splits, "modes": {}}
    for mode in modes:
        mean = mean_cmc(curves[mode])
        report["modes"][mode] = {
            "mean": list(mean.rates),
            "trials": [list(c.rates) for c in curves[mode]],
            "rank": {str(r): mean[r] for r in (1, 5, 10, 20) if r <= len(mean)},
        }
        if out is not None:
            write_cmc_csv(mean, out / f"{mode}_cmc_mean.csv")
    if out is not None:
        (out / "summary.json").write_text(json.dumps(report, indent=1, sort_keys=True) + "\n")
        if config.figures:
            from ..plotting import plot_cmc

            plot_cmc({m: CmcCurve(tuple(report["modes"][m]["mean"])) for m in modes},
                     out / "cmc.png")
    return report
