"""Command line entry point: ``gct synth|train|eval|match|baseline|run``."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

from ..errors import GctError
from ..gmatch import solve_greedy
from ..patchgraph import GridConfig, build_graph, candidate_pairs
from .config import ExperimentConfig, load_config
from .dataset import load_dataset, split_identities
from .experiment import (ExperimentError, FeatureStore, GctModel, evaluate, run_experiment,
                         train_model)
from .seeds import substream
from .synth import SynthParams, synth_generate

log = logging.getLogger("gct")


def _config(args) -> ExperimentConfig:
    cfg = load_config(args.config) if getattr(args, "config", None) else ExperimentConfig()
    changes = {}
    if getattr(args, "seed", None) is not None:
        changes["seed"] = args.seed
    if getattr(args, "lam", None) is not None:
        changes["lam"] = args.lam
    if getattr(args, "refs", None) is not None:
        changes["refs"] = args.refs
    if getattr(args, "trials", None) is not None:
        changes["trials"] = args.trials
    return cfg.replace(**changes) if changes else cfg


def _common(p: argparse.ArgumentParser, out_required: bool = True) -> None:
    p.add_argument("--config", help="flat key = value config file")
    p.add_argument("--seed", type=int)
    p.add_argument("--lambda", dest="lam", type=float, help="outlier penalty")
    p.add_argument("--refs", type=int, help="reference pairs per test pair")
    p.add_argument("--out", required=out_required, help="output directory")


def _data(p: argparse.ArgumentParser) -> None:
    p.add_argument("--data", required=True, help="dataset root")
    p.add_argument("--manifest", help="manifest CSV (default: <data>/manifest.csv)")


def cmd_synth(args) -> int:
    cfg = _config(args)
    params = SynthParams(identities=args.identities, shift=args.shift, noise=args.noise,
                         palette=args.palette, levels=args.levels, grating=args.grating,
                         gallery_turn=args.gallery_turn,
                         orientation_samples=args.orientation_samples, seed=cfg.seed,
                         grid=GridConfig(cfg.canon_w, cfg.canon_h, cfg.patch_w, cfg.patch_h,
                                         cfg.stride_x, cfg.stride_y))
    res = synth_generate(args.out, params)
    print(f"wrote {len(res.dataset)} images for {len(res.ground_truth)} identities to {args.out}")
    return 0


def _split(dataset, cfg, trial: int = 0):
    return split_identities(dataset, substream(cfg.seed, "split", trial), cfg.train_fraction)


def cmd_train(args) -> int:
    cfg = _config(args)
    ds = load_dataset(args.data, args.manifest)
    train_ids, _ = _split(ds, cfg)
    store = FeatureStore(ds, cfg)
    model = train_model(ds, train_ids, cfg, store)
    model.save(args.out)
    sizes = [len(t) for t in model.templates.values()]
    print(f"trained on {len(train_ids)} identities, {len(sizes)} templates "
          f"(mean size {sum(sizes) / len(sizes):.1f}); model in {args.out}")
    return 0


def _eval(args, mode: str) -> int:
    ds = load_dataset(args.data, args.manifest)
    base = _config(args)
    store = FeatureStore(ds, base)
    model = GctModel.load(args.model, store)
    overrides = {k: v for k, v in (("refs", args.refs), ("lam", args.lam)) if v is not None}
    if overrides:
        model.config = model.config.replace(**overrides)
    if model.config.grid().geometry() != base.grid().geometry():
        store = FeatureStore(ds, model.config)
    train = set(model.train_identities)
    test_ids = [i for i in ds.identities if i not in train]
    if not test_ids:
        raise ExperimentError("every identity was used for training; nothing to evaluate")
    ev = evaluate(model, ds, test_ids, store, mode)
    from ..transfer import write_cmc_csv, write_ranked_csv

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_cmc_csv(ev.cmc, out / f"{mode}_cmc.csv")
    write_ranked_csv(ev.ranked, out / f"{mode}_ranked.csv")
    if model.config.figures:
        from ..plotting import plot_cmc

        plot_cmc({mode: ev.cmc}, out / f"{mode}_cmc.png")
    ranks = [r for r in (1, 5, 10, 20) if r <= len(ev.cmc)]
    print(" ".join(f"rank-{r} {100 * ev.cmc[r]:.1f}%" for r in ranks))
    return 0


def cmd_eval(args) -> int:
    if args.model:
        return _eval(args, "gct")
    return _run(args, ("gct",))


def _run(args, modes) -> int:
    cfg = _config(args)
    ds = load_dataset(args.data, args.manifest)
    report = run_experiment(cfg, ds, args.out, modes=modes)
    for mode in modes:
        ranks = report["modes"][mode]["rank"]
        print(f"{mode}: " + " ".join(f"rank-{r} {100 * v:.1f}%" for r, v in ranks.items()))
    return 0


def cmd_baseline(args) -> int:
    if args.model:
        return _eval(args, "baseline")
    return _run(args, ("baseline",))


def cmd_run(args) -> int:
    return _run(args, ("gct", "baseline"))


def cmd_match(args) -> int:
    ds = load_dataset(args.data, args.manifest)
    cfg = _config(args)
    store = FeatureStore(ds, cfg)
    model = GctModel.load(args.model, store)
    if args.refs is not None:
        model.config = model.config.replace(refs=args.refs)
    from ..transfer import pair_distance

    probe = str(Path(args.probe).resolve()) if Path(args.probe).exists() else args.probe
    gallery = str(Path(args.gallery).resolve()) if Path(args.gallery).exists() else args.gallery
    Fp = model.project(store.descriptors(probe))
    Fg = model.project(store.descriptors(gallery))
    refs = model.references(model.forest.leaves(store.hog(probe)),
                            model.forest.leaves(store.hog(gallery)))
    templates = [model.templates[r] for r in refs]
    dist = pair_distance(Fp, Fg, templates, model.metric, model.config.normalize_by_count)
    result = {"probe": args.probe, "gallery": args.gallery, "distance": dist, "references": refs}

    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "correspondences.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["pair_id", "probe_patch", "gallery_patch"])
            for t in templates:
                for wp, wg in t.correspondences:
                    w.writerow([t.pair_id, wp, wg])
        if args.dump_affinity:
            # direct matching of this pair, mostly useful to inspect K
            from ..affinity import build_affinity

            g1 = build_graph(store.grid, store.descriptors(probe))
            g2 = build_graph(store.grid, store.descriptors(gallery))
            K = build_affinity(g1, g2, candidate_pairs(store.grid, store.grid, cfg.search_margin))
            K.to_csv(out / "affinity.csv")
            with open(out / "affinity_pairs.csv", "w", newline="") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(["row", "probe_patch", "gallery_patch"])
                for k, (i, a) in enumerate(K.pairs):
                    w.writerow([k, i, a])
            direct = solve_greedy(K, model.config.lam)
            result["direct_match"] = [list(p) for p in direct.pairs]
        (out / "match.json").write_text(json.dumps(result, indent=1) + "\n")
        if model.config.figures:
            from ..plotting import plot_correspondences

            corr = sorted({p for t in templates for p in t.correspondences})
            plot_correspondences(store.rgb(probe), store.rgb(gallery), store.grid, corr,
                                 out / "correspondences.png")
    print(f"distance {dist:.6g} over {len(refs)} references")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="gct", description="Graph correspondence transfer re-id")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic two-camera dataset")
    _common(p)
    p.add_argument("--identities", type=int, default=50)
    p.add_argument("--shift", type=int, default=1, help="gallery shift in patch columns")
    p.add_argument("--noise", type=float, default=0.04)
    p.add_argument("--palette", type=int, default=0, help="shared colours (0: free colours)")
    p.add_argument("--levels", type=int, default=8, help="colour levels per HSV channel")
    p.add_argument("--grating", type=float, default=0.05, help="orientation cue contrast")
    p.add_argument("--gallery-turn", type=int, default=0,
                   help="gallery orientation class minus probe orientation class")
    p.add_argument("--orientation-samples", type=int, default=0,
                   help="extra orientation-labelled images per class")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="learn templates, metric and orientation forest")
    _common(p)
    _data(p)
    p.set_defaults(func=cmd_train)

    for name, func, text in (("eval", cmd_eval, "rank and score with GCT"),
                             ("baseline", cmd_baseline, "aligned-patch baseline")):
        p = sub.add_parser(name, help=text)
        _common(p)
        _data(p)
        p.add_argument("--model", help="trained model dir; without it every trial is trained")
        p.add_argument("--trials", type=int)
        p.set_defaults(func=func)

    p = sub.add_parser("run", help="all trials, GCT and baseline, with report and figure")
    _common(p)
    _data(p)
    p.add_argument("--trials", type=int)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("match", help="distance and correspondences for one image pair")
    _common(p, out_required=False)
    _data(p)
    p.add_argument("--model", required=True)
    p.add_argument("--probe", required=True)
    p.add_argument("--gallery", required=True)
    p.add_argument("--dump-affinity", action="store_true",
                   help="also write the affinity matrix of a direct match")
    p.set_defaults(func=cmd_match)
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (GctError, ExperimentError, OSError) as exc:
        print(f"gct: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
