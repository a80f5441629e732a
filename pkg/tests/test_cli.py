import json
import subprocess
import sys

import pytest

from edgediffusion.cli import run
from edgediffusion.ingest import read_graph
from edgediffusion.sampling import read_dataset
from edgediffusion.training import load_checkpoint


def tree_bytes(root):
    """Relative path -> bytes for every artifact, skipping run manifests."""
    return {
        str(p.relative_to(root)): p.read_bytes()
        for p in sorted(root.rglob("*"))
        if p.is_file() and "run_manifest" not in p.name
    }


def pipeline(root, threads=1):
    root.mkdir(parents=True, exist_ok=True)
    t = ["--threads", str(threads)]
    steps = [
        ["gen-synth", "--out", root / "corpus", "--n-ingredients", "24", "--n-compounds", "8",
         "--n-recipes", "400", "--seed", "7"],
        ["build-graph", "--recipes", root / "corpus/recipes.tsv", "--flavor-assoc", root / "corpus/associations.tsv",
         "--categories", root / "corpus/categories.tsv", "--out", root / "graph"],
        ["sample", "--graph", root / "graph", "--m", "6", "--n-train", "24", "--n-val", "8", "--seed", "1",
         "--out", root / "ds6"],
        ["sample", "--graph", root / "graph", "--m", "4", "--n-train", "24", "--n-val", "8", "--seed", "1",
         "--out", root / "ds4"],
        ["train", "--dataset", root / "ds6", "--graph", root / "graph", "--fingerprints",
         root / "corpus/fingerprints.tsv", "--dim", "8", "--time-dim", "8", "--T", "10", "--epochs", "2",
         "--batch-size", "4", "--seed", "3", "--out", root / "m6.ckpt"],
        ["train", "--dataset", root / "ds4", "--graph", root / "graph", "--dim", "8", "--time-dim", "8",
         "--T", "10", "--epochs", "2", "--batch-size", "4", "--seed", "3", "--out", root / "m4.ckpt"],
        ["eval", "nmi", "--checkpoint", root / "m6.ckpt", "--graph", root / "graph", "--categories",
         root / "corpus/categories.tsv", "--k", "4", "--repeats", "3", "--json", "--out", root / "nmi.txt"],
        ["eval", "gen", "--checkpoint", root / "m4.ckpt", root / "m6.ckpt", "--dataset", root / "ds4", root / "ds6",
         "--json", "--out", root / "gen.tsv"],
        ["reconstruct", "--checkpoint", root / "m6.ckpt", "--graph", root / "graph", "--dataset", root / "ds6",
         "--steps", "5", "--trace", "--seed", "2", "--out", root / "recon"],
        ["export-emb", "--checkpoint", root / "m6.ckpt", "--graph", root / "graph", "--ingredients-only",
         "--out", root / "emb.tsv"],
    ]
    for argv in steps:
        assert run([str(a) for a in argv] + t) == 0, argv


@pytest.fixture(scope="module")
def pipelines(tmp_path_factory):
    base = tmp_path_factory.mktemp("cli")
    pipeline(base / "a", threads=1)
    pipeline(base / "b", threads=1)
    pipeline(base / "c", threads=3)
    return base


def test_pipeline_artifacts(pipelines):
    root = pipelines / "a"
    g = read_graph(root / "graph")
    assert len(g.ingredient_ids()) == 24
    assert read_dataset(root / "ds6").m == 6
    ck = load_checkpoint(root / "m6.ckpt")
    assert ck.record.csp_weight == 0.1 and ck.config.fingerprint_bits == 881
    assert load_checkpoint(root / "m4.ckpt").config.fingerprint_bits == 0
    nmi = (root / "nmi.txt").read_text()
    assert nmi.startswith("nmi_mean=")
    assert "reference\tdiffusion+CSP (200 nodes)\t0.341\t0.015" in nmi
    assert json.loads((root / "nmi.txt.json").read_text())["repeats"] == 3
    gen = (root / "gen.tsv").read_text().splitlines()
    assert gen[0] == "Train Size\tTest (4)\tTest (6)"
    assert [row.split("\t")[0] for row in gen[1:]] == ["4", "6"]
    assert float(gen[2].split("\t")[2]) == ck.record.final_val_mse
    steps = sorted(p.name for p in (root / "recon").glob("step_*.tsv"))
    assert steps == [f"step_{k:03d}.tsv" for k in range(6)]
    emb = (root / "emb.tsv").read_text().splitlines()
    assert len(emb) == 1 + 24
    manifest = json.loads((root / "m6.ckpt.run_manifest.json").read_text())
    assert manifest["command"] == "train" and manifest["seed"] == 3
    assert (root / "graph" / "run_manifest.json").is_file()


def test_pipeline_byte_identical_across_runs_and_threads(pipelines):
    a = tree_bytes(pipelines / "a")
    assert a == tree_bytes(pipelines / "b")
    assert a == tree_bytes(pipelines / "c")


@pytest.mark.parametrize("argv", [
    ["frobnicate"],
    ["sample", "--graph", "x"],
    ["train", "--dataset", "d", "--graph", "g", "--out", "o", "--bogus"],
    ["sample", "--graph", "x", "--out", "y", "--threads", "0"],
])
def test_usage_errors_exit_1(argv, capsys):
    assert run(argv) == 1
    assert capsys.readouterr().err


def test_value_and_file_errors(tmp_path, pipelines):
    root = pipelines / "a"
    assert run(["build-graph", "--recipes", str(tmp_path / "missing.tsv"), "--out", str(tmp_path / "g")]) == 2
    (tmp_path / "bad.tsv").write_text("a\t\tb\n")
    assert run(["build-graph", "--recipes", str(tmp_path / "bad.tsv"), "--out", str(tmp_path / "g")]) == 2
    assert run(["sample", "--graph", str(root / "graph"), "--m", "200", "--out", str(tmp_path / "d")]) == 1
    assert run(["reconstruct", "--checkpoint", str(root / "m6.ckpt"), "--graph", str(root / "graph"),
                "--nodes", "nope,ing_00", "--out", str(tmp_path / "r")]) == 1
    assert run(["train", "--dataset", str(root / "ds6"), "--graph", str(root / "graph"), "--csp-weight", "0.5",
                "--out", str(tmp_path / "x.ckpt")]) == 1
    assert run(["eval", "gen", "--checkpoint", str(root / "m6.ckpt"), "--dataset", str(root / "ds6"),
                "--T", "11", "--out", str(tmp_path / "g.tsv")]) == 1


def test_reconstruct_by_names(tmp_path, pipelines):
    root = pipelines / "a"
    assert run(["reconstruct", "--checkpoint", str(root / "m6.ckpt"), "--graph", str(root / "graph"),
                "--nodes", "ing_00,ing_01,ing_05", "--out", str(tmp_path / "r")]) == 0
    assert len((tmp_path / "r" / "final.tsv").read_text().splitlines()) == 3
    assert not list((tmp_path / "r").glob("step_*"))


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "edgediffusion", "--help"], capture_output=True, text=True)
    assert res.returncode == 0
    for cmd in ("gen-synth", "build-graph", "sample", "train", "reconstruct", "eval", "export-emb"):
        assert cmd in res.stdout
