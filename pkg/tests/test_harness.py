from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np
import pytest

from gct.errors import DatasetError, InvalidConfig
from gct.harness.cli import main
from gct.harness.config import ExperimentConfig, load_config, parse_config
from gct.harness.dataset import (Dataset, Entry, load_dataset, load_orientation_labels,
                                 split_identities)
from gct.harness.experiment import positive_pairs, run_experiment
from gct.harness.seeds import substream, substream_int
from gct.harness.synth import SynthParams, ground_truth_pairs, render_pair, synth_generate
from gct.patchgraph import GridConfig


# -- config -------------------------------------------------------------------

def test_config_parse_and_alias():
    cfg = parse_config("# comment\nlambda = 1.5\nrefs=5  # trailing\n\nhog_cells = 8,16\n")
    assert cfg.lam == 1.5 and cfg.refs == 5 and cfg.hog_cells == (8, 16)
    assert parse_config(cfg.to_text()) == cfg


def test_config_defaults():
    cfg = ExperimentConfig()
    assert (cfg.lam, cfg.trees, cfg.refs, cfg.trials, cfg.pca_dim) == (2.0, 500, 20, 10, 34)
    assert (cfg.patch_w, cfg.patch_h) == (24, 32)


def test_config_errors_name_the_line():
    with pytest.raises(InvalidConfig, match="line 2"):
        parse_config("refs = 3\nbogus = 1\n")
    with pytest.raises(InvalidConfig, match="line 1"):
        parse_config("refs = many\n")
    with pytest.raises(InvalidConfig):
        parse_config("trials = 0\n")


def test_config_file(tmp_path):
    (tmp_path / "c.cfg").write_text("seed = 9\nridge = auto\nnormalize_by_count = yes\n")
    cfg = load_config(tmp_path / "c.cfg")
    assert cfg.seed == 9 and cfg.ridge is None and cfg.normalize_by_count


def test_substreams_are_independent_and_stable():
    assert substream_int(0, "split", 1) == substream_int(0, "split", 1)
    assert substream_int(0, "split", 1) != substream_int(0, "split", 2)
    assert substream_int(0, "split") != substream_int(0, "forest")
    a, b = substream(4, "x").random(3), substream(4, "x").random(3)
    assert np.array_equal(a, b)


# -- dataset ------------------------------------------------------------------

def _touch(root: Path, *names):
    for n in names:
        (root / n).parent.mkdir(parents=True, exist_ok=True)
        (root / n).write_bytes(b"")


def test_two_identities_two_cameras(tmp_path):
    _touch(tmp_path, "cam_a/1_0.png", "cam_a/2_0.png", "cam_b/1_0.png", "cam_b/2_0.png")
    ds = load_dataset(tmp_path)
    assert ds.identities == ["1", "2"]
    assert len(positive_pairs(ds, ds.identities)) == 2
    assert {e.role for e in ds.entries if e.camera == "cam_a"} == {"probe"}


def test_manifest_malformed_row_names_line(tmp_path):
    _touch(tmp_path, "a.png", "b.png")
    (tmp_path / "m.csv").write_text("path,identity,camera\na.png,1,c1\nb.png,1\n")
    with pytest.raises(DatasetError, match="line 3"):
        load_dataset(tmp_path, tmp_path / "m.csv")


def test_manifest_duplicates_and_missing(tmp_path):
    _touch(tmp_path, "a.png")
    (tmp_path / "m.csv").write_text("path,identity,camera\na.png,1,c1\na.png,1,c2\n")
    with pytest.raises(DatasetError, match="duplicate"):
        load_dataset(tmp_path, "m.csv")
    (tmp_path / "m.csv").write_text("path,identity,camera\na.png,1,c1\nzz.png,1,c2\n")
    with pytest.raises(DatasetError, match="missing"):
        load_dataset(tmp_path, "m.csv")


def test_many_cameras_need_roles(tmp_path):
    _touch(tmp_path, "a.png", "b.png", "c.png")
    (tmp_path / "m.csv").write_text("path,identity,camera\na.png,1,c1\nb.png,1,c2\nc.png,1,c3\n")
    with pytest.raises(DatasetError, match="role"):
        load_dataset(tmp_path, "m.csv")
    (tmp_path / "m.csv").write_text(
        "path,identity,camera,role\na.png,1,c1,probe\nb.png,1,c2,gallery\nc.png,1,c3,gallery\n")
    ds = load_dataset(tmp_path, "m.csv")
    assert len(positive_pairs(ds, ["1"])) == 2


def test_single_role_identity_warns(tmp_path):
    _touch(tmp_path, "cam_a/1_0.png", "cam_b/1_0.png", "cam_a/2_0.png")
    with pytest.warns(UserWarning, match="one role"):
        ds = load_dataset(tmp_path)
    assert ds.identities == ["1"] and ds.excluded == ("2",)


def test_half_split_of_632():
    entries = tuple(Entry(f"{r}/{k}.png", str(k), r, r) for k in range(632)
                    for r in ("probe", "gallery"))
    train, test = split_identities(Dataset(Path("."), entries), np.random.default_rng(0), 0.5)
    assert (len(train), len(test)) == (316, 316)
    assert not set(train) & set(test)


def test_orientation_labels(tmp_path):
    (tmp_path / "o.csv").write_text("path,label\na.png,3\n")
    assert load_orientation_labels(tmp_path / "o.csv") == {"a.png": 3}
    (tmp_path / "o.csv").write_text("path,label\na.png,9\n")
    with pytest.raises(Exception, match="line 2"):
        load_orientation_labels(tmp_path / "o.csv")


# -- synthetic data -------------------------------------------------------------

def test_shift_zero_noise_zero_views_identical():
    p, g, cols = render_pair(np.random.default_rng(0), SynthParams(shift=0, noise=0.0), 2)
    assert cols == 0 and np.array_equal(p, g)


def test_ground_truth_offset_by_one_column():
    cfg = GridConfig()
    gt = ground_truth_pairs(cfg, 1)
    assert len(gt) == 7 * 2
    assert all(b == a + 1 and a % 3 != 2 for a, b in gt)
    assert all(b == a - 1 for a, b in ground_truth_pairs(cfg, -1))


def test_shifted_content_really_moves():
    params = SynthParams(noise=0.0, grating=0.0)
    p, g, cols = render_pair(np.random.default_rng(1), params, 0)
    assert cols == 1
    assert np.array_equal(p[:, :36], g[:, 12:])


def _digest(root: Path) -> str:
    h = hashlib.sha256()
    for f in sorted(root.rglob("*")):
        if f.is_file():
            h.update(f.relative_to(root).as_posix().encode())
            h.update(f.read_bytes())
    return h.hexdigest()


def test_synth_is_byte_identical(tmp_path):
    params = SynthParams(identities=4, orientation_samples=1, seed=11)
    synth_generate(tmp_path / "a", params)
    synth_generate(tmp_path / "b", params)
    assert _digest(tmp_path / "a") == _digest(tmp_path / "b")
    truth = json.loads((tmp_path / "a" / "ground_truth.json").read_text())
    assert len(truth) == 4 and len((tmp_path / "a" / "orientation.csv").read_text().splitlines()) == 9


# -- experiment and CLI ---------------------------------------------------------

SMALL = ExperimentConfig(lam=1.0, refs=3, trees=10, trials=2, seed=5)


@pytest.fixture(scope="module")
def small_data(tmp_path_factory):
    root = tmp_path_factory.mktemp("syn")
    synth_generate(root, SynthParams(identities=12, seed=5))
    return root


def test_run_experiment_writes_reports(small_data, tmp_path):
    ds = load_dataset(small_data)
    report = run_experiment(SMALL, ds, tmp_path, modes=("gct", "baseline"))
    for mode in ("gct", "baseline"):
        for t in range(2):
            assert (tmp_path / f"{mode}_trial_{t:02d}_cmc.csv").exists()
        assert (tmp_path / f"{mode}_cmc_mean.csv").exists()
        assert report["modes"][mode]["mean"][-1] == 1.0
    assert (tmp_path / "cmc.png").stat().st_size > 0
    assert json.loads((tmp_path / "summary.json").read_text()) == report


def test_single_trial_mean_is_the_trial(small_data, tmp_path):
    ds = load_dataset(small_data)
    report = run_experiment(SMALL.replace(trials=1, figures=False), ds, tmp_path)
    assert report["modes"]["gct"]["mean"] == report["modes"]["gct"]["trials"][0]
    assert (tmp_path / "gct_trial_00_cmc.csv").read_text() == (tmp_path / "gct_cmc_mean.csv").read_text()


def test_cli_end_to_end(tmp_path, capsys):
    data, model, out = tmp_path / "data", tmp_path / "model", tmp_path / "out"
    (tmp_path / "c.cfg").write_text("trees = 10\ntrials = 1\nlambda = 1.0\n")
    cfg = ["--config", str(tmp_path / "c.cfg")]
    assert main(["synth", "--out", str(data), "--identities", "10", "--seed", "2"]) == 0
    assert main(["train", "--data", str(data), "--out", str(model), "--refs", "3", *cfg]) == 0
    assert {"templates.json", "metric.json", "forest.json", "pca.json"} <= {
        p.name for p in model.iterdir()}
    assert main(["eval", "--data", str(data), "--model", str(model), "--out", str(out), *cfg]) == 0
    assert (out / "gct_cmc.csv").exists() and (out / "gct_ranked.csv").exists()
    assert main(["baseline", "--data", str(data), "--model", str(model), "--out", str(out)]) == 0
    assert (out / "baseline_cmc.csv").exists()
    probe, gallery = data / "cam_a" / "0_0.png", data / "cam_b" / "0_0.png"
    assert main(["match", "--data", str(data), "--model", str(model), "--probe", str(probe),
                 "--gallery", str(gallery), "--out", str(out / "m"), "--dump-affinity"]) == 0
    result = json.loads((out / "m" / "match.json").read_text())
    assert result["distance"] >= 0 and len(result["references"]) == 3
    assert (out / "m" / "affinity.csv").exists() and (out / "m" / "correspondences.png").exists()
    assert "distance" in capsys.readouterr().out


def test_cli_reports_errors(tmp_path, capsys):
    assert main(["run", "--data", str(tmp_path / "nothing"), "--out", str(tmp_path / "o")]) == 2
    assert "error" in capsys.readouterr().err
