import csv
import json

import jsonschema
import numpy as np
import pytest

from drugban import cli
from drugban.checkpoint import load_checkpoint, save_checkpoint
from drugban.data import read_dataset_csv
from drugban.errors import DataError, NumericError
from drugban.metrics import METRICS_SCHEMA
from drugban.split import write_manifest
from drugban.synthetic import separable_pairs, write_dataset_csv

SMALL = {"max_protein_len": 40, "max_drug_atoms": 16, "kernel_sizes": [3, 3, 3], "batch_size": 16,
         "lr": 3e-3, "max_epochs": 60, "drug_embedding": 8, "gcn_hidden": [8, 8, 8], "protein_embedding": 8,
         "num_filters": [8, 8, 8], "ban_dim": 12, "decoder_hidden": 16, "disc_hidden": 8}


def run(capsys, *argv):
    code = cli.main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def stdout_json(out):
    lines = out.strip().splitlines()
    assert len(lines) == 1  # stdout carries one JSON document
    return json.loads(lines[0])


@pytest.fixture
def dataset(tmp_path):
    return write_dataset_csv(tmp_path / "sep.csv", separable_pairs(16, seed=0))


@pytest.fixture
def config(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(SMALL))
    return path


def manifest_roles(path):
    with open(path) as fh:
        return [r["role"] for r in csv.DictReader(fh)]


def test_split_random_ten_rows(tmp_path, capsys):
    data = write_dataset_csv(tmp_path / "ten.csv", separable_pairs(10, seed=2))
    code, out, _ = run(capsys, "split", "--input", data, "--strategy", "random", "--seed", 0, "--out", tmp_path / "s")
    assert code == 0
    summary = stdout_json(out)
    assert (summary["n_train"], summary["n_val"], summary["n_test"]) == (7, 1, 2)
    roles = manifest_roles(tmp_path / "s" / "manifest.csv")
    assert (roles.count("train"), roles.count("val"), roles.count("test")) == (7, 1, 2)
    assert json.loads((tmp_path / "s" / "summary.json").read_text()) == summary


def test_split_cluster_toy(tmp_path, capsys):
    # two far-apart drug families and two far-apart protein families
    drugs = ["CCCCCCCC", "CCCCCCCCC", "c1ccncc1", "c1cnccn1"]
    prots = ["AAAAAAAAAA", "AAAAAAAAAG", "WWWWWWWWWW", "WWWWWWWWWY"]
    path = tmp_path / "toy.csv"
    with open(path, "w") as fh:
        fh.write("smiles,sequence,label\n")
        for i, d in enumerate(drugs):
            for j, p in enumerate(prots):
                fh.write(f"{d},{p},{(i + j) % 2}\n")
    code, out, _ = run(capsys, "split", "--input", path, "--strategy", "cluster", "--frac", 0.5, "--out",
                       tmp_path / "c")
    assert code == 0
    s = stdout_json(out)
    assert (s["n_drug_clusters"], s["n_protein_clusters"]) == (2, 2)
    assert (s["n_source"], s["n_target_train"] + s["n_target_test"], s["n_discarded"]) == (4, 4, 8)


def test_split_errors(tmp_path, capsys, dataset):
    code, _, err = run(capsys, "split", "--input", dataset, "--strategy", "scaffold", "--out", tmp_path / "x")
    assert code == 2 and json.loads(err.strip().splitlines()[-1])["exit_code"] == 2
    empty = tmp_path / "empty.csv"
    empty.write_text("")
    assert run(capsys, "split", "--input", empty, "--strategy", "random", "--out", tmp_path / "x")[0] == 2
    code, _, err = run(capsys, "split", "--input", tmp_path / "nope.csv", "--strategy", "random", "--out", tmp_path / "x")
    assert code == 1 and "nope.csv" in err


def test_seed_from_environment(tmp_path, capsys, dataset, monkeypatch):
    monkeypatch.setenv("DRUGBAN_SEED", "11")
    _, out, _ = run(capsys, "split", "--input", dataset, "--strategy", "random", "--out", tmp_path / "e")
    assert stdout_json(out)["seed"] == 11


def test_default_config_echo():
    cfg = cli.load_config(None)
    assert (cfg.batch_size, cfg.lr, cfg.heads, cfg.ban_dim, cfg.pool_stride) == (64, 5e-5, 2, 768, 3)
    assert (cfg.max_protein_len, cfg.max_drug_atoms, cfg.max_epochs) == (1200, 290, 100)


@pytest.fixture
def trained(tmp_path, capsys, dataset, config):
    # every pair in every role: an overfit checkpoint on the separable set
    man = tmp_path / "man.csv"
    pairs = read_dataset_csv(dataset)
    write_manifest(man, [(p, r, "none", p.label) for r in ("train", "val", "test") for p in pairs], seed=0)
    code, out, _ = run(capsys, "train", "--manifest", man, "--config", config, "--seed", 0, "--out", tmp_path / "run")
    assert code == 0
    return tmp_path / "run", stdout_json(out)


def test_train_run_directory(trained):
    run_dir, metrics = trained
    for rel in ("config.json", "manifest.csv", "checkpoints/best.bin", "metrics.json", "train_log.csv"):
        assert (run_dir / rel).exists(), rel
    resolved = json.loads((run_dir / "config.json").read_text())
    assert resolved["heads"] == 2 and resolved["pool_stride"] == 3 and resolved["lr"] == 3e-3
    assert json.loads((run_dir / "metrics.json").read_text()) == metrics
    jsonschema.validate(metrics, METRICS_SCHEMA)


def test_train_rerun_identical(tmp_path, capsys, trained, config):
    run_dir, _ = trained
    code, _, _ = run(capsys, "train", "--manifest", run_dir / "manifest.csv", "--config", config, "--seed", 0,
                     "--out", tmp_path / "run2")
    assert code == 0
    for rel in ("metrics.json", "checkpoints/best.bin"):
        assert (run_dir / rel).read_bytes() == (tmp_path / "run2" / rel).read_bytes()


def test_eval_overfit_checkpoint(trained, capsys, dataset):
    run_dir, _ = trained
    code, out, _ = run(capsys, "eval", "--checkpoint", run_dir / "checkpoints" / "best.bin", "--pairs", dataset)
    assert code == 0
    rec = stdout_json(out)
    jsonschema.validate(rec, METRICS_SCHEMA)
    assert rec["auroc"] == 1.0


def test_eval_single_class_and_corrupt_checkpoint(trained, capsys, tmp_path):
    run_dir, _ = trained
    ckpt = run_dir / "checkpoints" / "best.bin"
    one = write_dataset_csv(tmp_path / "one.csv", [p for p in separable_pairs(16) if p.label == 1])
    assert run(capsys, "eval", "--checkpoint", ckpt, "--pairs", one)[0] == 2
    bad = tmp_path / "bad.bin"
    bad.write_bytes(ckpt.read_bytes()[:100])
    assert run(capsys, "eval", "--checkpoint", bad, "--pairs", one)[0] == 2


def test_interpret_reports(trained, capsys, tmp_path):
    run_dir, _ = trained
    ckpt = run_dir / "checkpoints" / "best.bin"
    three = write_dataset_csv(tmp_path / "three.csv", separable_pairs(3, seed=5))
    code, out, _ = run(capsys, "interpret", "--checkpoint", ckpt, "--pairs", three, "--out", tmp_path / "rep")
    assert code == 0 and stdout_json(out)["n_reports"] == 3
    index = json.loads((tmp_path / "rep" / "index.json").read_text())
    assert len(index["reports"]) == 3
    for entry in index["reports"]:
        assert (tmp_path / "rep" / entry["file"]).exists()
    code, _, _ = run(capsys, "interpret", "--checkpoint", ckpt, "--pairs", three, "--topk", 100, "--format", "csv",
                     "--out", tmp_path / "all")
    assert code == 0
    for entry in json.loads((tmp_path / "all" / "index.json").read_text())["reports"]:
        assert len(entry["top_atoms"]) == entry["n_atoms"]
    assert run(capsys, "interpret", "--checkpoint", ckpt, "--pairs", three, "--topk", 0, "--out", tmp_path / "z")[0] == 2


def test_train_numeric_failure_exit_code(trained, capsys, tmp_path, config, monkeypatch):
    run_dir, _ = trained

    def diverge(*a, **k):
        raise NumericError("non-finite loss")

    monkeypatch.setattr(cli, "train_in_domain", diverge)
    code, _, err = run(capsys, "train", "--manifest", run_dir / "manifest.csv", "--config", config,
                       "--out", tmp_path / "r3")
    assert code == 3 and json.loads(err.strip().splitlines()[-1])["error"] == "NumericError"


def test_train_mode_manifest_mismatch(trained, capsys, tmp_path):
    run_dir, _ = trained
    cfg = tmp_path / "cdan.json"
    cfg.write_text(json.dumps({**SMALL, "mode": "cdan"}))
    assert run(capsys, "train", "--manifest", run_dir / "manifest.csv", "--config", cfg, "--out", tmp_path / "r4")[0] == 2
    cfg.write_text(json.dumps({"bogus_field": 1}))
    assert run(capsys, "train", "--manifest", run_dir / "manifest.csv", "--config", cfg, "--out", tmp_path / "r5")[0] == 2


# -- checkpoint container ----------------------------------------------------------------
def test_checkpoint_round_trip(tmp_path):
    state = {"a": np.arange(6, dtype=np.float32).reshape(2, 3), "b": np.array(1.5, dtype=np.float32)}
    save_checkpoint(tmp_path / "c.bin", state, {"x": 1})
    back, cfg = load_checkpoint(tmp_path / "c.bin")
    assert cfg == {"x": 1} and list(back) == ["a", "b"]
    for k in state:
        assert back[k].tobytes() == state[k].tobytes() and back[k].shape == state[k].shape


def test_checkpoint_corruption(tmp_path):
    save_checkpoint(tmp_path / "c.bin", {"a": np.ones(4, np.float32)}, {})
    raw = (tmp_path / "c.bin").read_bytes()
    for name, blob in [("magic", b"NOTACKPT" + raw[8:]), ("short", raw[:-3]), ("long", raw + b"\0")]:
        (tmp_path / name).write_bytes(blob)
        with pytest.raises(DataError):
            load_checkpoint(tmp_path / name)
