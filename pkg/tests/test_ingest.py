import numpy as np
import pytest

from edgediffusion.graph import build_hetero_graph, compute_npmi, CorpusStats
from edgediffusion.ingest import (
    FINGERPRINT_BITS,
    FormatError,
    format_fingerprint,
    format_manifest,
    graph_hash,
    parse_associations,
    parse_categories,
    parse_fingerprints,
    parse_manifest,
    parse_recipe_corpus,
    read_graph,
    write_graph,
)
from edgediffusion.synthetic import generate_synthetic_corpus, synthetic_corpus

CORPUS = [["A", "B"], ["A", "B"], ["A", "C"], ["B", "C"]]


def write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text, encoding="utf-8")
    return p


def test_recipe_counts(tmp_path):
    stats = parse_recipe_corpus(write(tmp_path, "r.tsv", "a\tb\na\tc\n"))
    idx = stats.index()
    assert stats.n_recipes == 2
    assert stats.counts[idx["a"]] == 2
    assert stats.pair_counts[(idx["a"], idx["b"])] == 1


def test_recipe_set_semantics(tmp_path):
    stats = parse_recipe_corpus(write(tmp_path, "r.tsv", "a\ta\tb\n"))
    idx = stats.index()
    assert stats.counts[idx["a"]] == 1
    assert list(stats.pair_counts) == [(idx["a"], idx["b"])]


def test_recipe_empty_and_blank(tmp_path):
    with pytest.raises(FormatError):
        parse_recipe_corpus(write(tmp_path, "e.tsv", ""))
    stats = parse_recipe_corpus(write(tmp_path, "b.tsv", "a\tb\n\n  \nb\tc\n"))
    assert stats.n_recipes == 2
    assert stats.skipped_empty == 2


def test_recipe_malformed_names_line(tmp_path):
    with pytest.raises(FormatError, match="line 2"):
        parse_recipe_corpus(write(tmp_path, "m.tsv", "a\tb\na\t\tc\n"))


def test_associations_and_categories(tmp_path):
    rows = parse_associations(write(tmp_path, "a.tsv", "A\tc1\nA\tc1\nB\tc2\n"))
    assert rows == [("A", "c1"), ("A", "c1"), ("B", "c2")]
    with pytest.raises(FormatError, match="line 1"):
        parse_associations(write(tmp_path, "bad.tsv", "A c1\n"))
    cats = parse_categories(write(tmp_path, "c.tsv", "A\tMeat\nB\tFruits\n"))
    assert cats == {"A": "Meat", "B": "Fruits"}
    with pytest.raises(FormatError):
        parse_categories(write(tmp_path, "cc.tsv", "A\tMeat\nA\tFruits\n"))


def test_fingerprints(tmp_path):
    zeros = "0" * FINGERPRINT_BITS
    fps = parse_fingerprints(write(tmp_path, "f.tsv", f"c1\t{zeros}\n"))
    assert fps["c1"].dtype == np.uint8 and not fps["c1"].any()
    with pytest.raises(FormatError, match="'c2'"):
        parse_fingerprints(write(tmp_path, "s.tsv", f"c1\t{zeros}\nc2\t{zeros[:-1]}\n"))
    with pytest.raises(FormatError, match="duplicate"):
        parse_fingerprints(write(tmp_path, "d.tsv", f"c1\t{zeros}\nc1\t{zeros}\n"))
    with pytest.raises(FormatError, match="binary"):
        parse_fingerprints(write(tmp_path, "x.tsv", f"c1\t{'2' + zeros[1:]}\n"))


def test_fingerprint_format_roundtrip(tmp_path):
    bits = (np.random.default_rng(0).random(FINGERPRINT_BITS) < 0.3).astype(np.uint8)
    fps = parse_fingerprints(write(tmp_path, "f.tsv", f"c\t{format_fingerprint(bits)}\n"))
    assert np.array_equal(fps["c"], bits)


def test_manifest_roundtrip():
    items = {"a": 1, "b": "x y", "c": 0.25}
    assert parse_manifest(format_manifest(items)) == {"a": "1", "b": "x y", "c": "0.25"}
    with pytest.raises(FormatError):
        parse_manifest("no equals sign\n")


def test_synthetic_same_seed_identical_files(tmp_path):
    a = generate_synthetic_corpus(tmp_path / "a", 40, 10, 500, 4, seed=7)
    b = generate_synthetic_corpus(tmp_path / "b", 40, 10, 500, 4, seed=7)
    c = generate_synthetic_corpus(tmp_path / "c", 40, 10, 500, 4, seed=8)
    for key in a:
        assert a[key].read_bytes() == b[key].read_bytes()
    assert a["recipes"].read_bytes() != c["recipes"].read_bytes()


def test_synthetic_rejects_unbalanced():
    with pytest.raises(ValueError):
        synthetic_corpus(7, 5, 10, 4, seed=0)


def test_synthetic_single_category():
    _, _, _, cats = synthetic_corpus(6, 3, 20, 1, seed=0)
    assert len(set(cats.values())) == 1


def test_synthetic_planted_npmi_structure():
    recipes, _, _, cats = synthetic_corpus(40, 10, 500, 4, seed=7)
    stats = CorpusStats.from_recipes(recipes)
    within, cross = [], []
    sets = [set(r) for r in recipes]
    names = sorted(cats)
    for i, a in enumerate(names):
        for b in names[i + 1:]:
            cij = sum(1 for s in sets if a in s and b in s)
            ci = sum(1 for s in sets if a in s)
            cj = sum(1 for s in sets if b in s)
            v = compute_npmi(cij, ci, cj, len(sets))
            (within if cats[a] == cats[b] else cross).append(v)
    assert stats.n_recipes == 500
    assert np.mean(within) > np.mean(cross)


def test_synthetic_hubs_per_category():
    recipes, assoc, fps, cats = synthetic_corpus(40, 10, 500, 4, seed=7)
    hub_names = {a for a, _ in assoc}
    for cat in set(cats.values()):
        members = [n for n, c in cats.items() if c == cat]
        assert any(n in hub_names for n in members)
        assert any(n not in hub_names for n in members)
    assert all(c in fps for _, c in assoc)


def test_graph_roundtrip(tmp_path):
    g = build_hetero_graph(CORPUS, flavor_assoc=[("A", "c1")], min_cooccur=1, npmi_threshold=-1.0)
    write_graph(g, tmp_path / "g")
    h = read_graph(tmp_path / "g")
    assert h == g
    assert h.meta["n_recipes"] == g.meta["n_recipes"]
    assert len(graph_hash(tmp_path / "g")) == 64


def test_graph_roundtrip_no_edges(tmp_path):
    g = build_hetero_graph(CORPUS, npmi_threshold=1.0)
    assert g.edges == []
    write_graph(g, tmp_path / "g")
    assert read_graph(tmp_path / "g") == g


def test_graph_read_errors(tmp_path):
    g = build_hetero_graph(CORPUS, flavor_assoc=[("A", "c1")], min_cooccur=1)
    d = tmp_path / "g"
    write_graph(g, d)
    (d / "edges.tsv").unlink()
    with pytest.raises(FormatError, match="edges"):
        read_graph(d)

    write_graph(g, d)
    lines = (d / "edges.tsv").read_text().splitlines(keepends=True)
    (d / "edges.tsv").write_text("".join(lines[:-1]))
    with pytest.raises(FormatError):
        read_graph(d)

    write_graph(g, d)
    man = (d / "manifest.txt").read_text().replace("format_version=1", "format_version=9")
    (d / "manifest.txt").write_text(man)
    with pytest.raises(FormatError, match="version"):
        read_graph(d)


def test_graph_hash_stable(tmp_path):
    g = build_hetero_graph(CORPUS, min_cooccur=1, npmi_threshold=-1.0)
    write_graph(g, tmp_path / "a")
    write_graph(g, tmp_path / "b")
    assert graph_hash(tmp_path / "a") == graph_hash(tmp_path / "b")
