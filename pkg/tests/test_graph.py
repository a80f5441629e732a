import math
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, strategies as st

from edgediffusion.graph import (
    CorpusStats,
    Edge,
    HeteroGraph,
    Node,
    NodeKind,
    build_hetero_graph,
    compute_npmi,
    hub_partition,
)

CORPUS = [["A", "B"], ["A", "B"], ["A", "C"], ["B", "C"]]


def brute_force_weights(recipes, threshold, min_cooccur):
    """Independent pair counting over the raw corpus."""
    sets = [set(r) for r in recipes if r]
    n = len(sets)
    single = Counter(x for s in sets for x in s)
    pair = Counter()
    for s in sets:
        for a in s:
            for b in s:
                if a < b:
                    pair[(a, b)] += 1
    out = {}
    for (a, b), c in pair.items():
        if c < min_cooccur:
            continue
        v = compute_npmi(c, single[a], single[b], n)
        if v >= threshold:
            out[frozenset((a, b))] = (v + 1.0) / 2.0
    return out


def test_npmi_examples():
    assert compute_npmi(2, 2, 2, 4) == 1.0
    assert compute_npmi(1, 2, 2, 4) == 0.0
    # ln(1.5) / -ln(0.375), evaluated with mpmath at 30 digits
    assert compute_npmi(3, 4, 4, 8) == pytest.approx(0.413390105222847, abs=1e-12)
    assert compute_npmi(0, 3, 2, 10) == -1.0


@pytest.mark.parametrize("args", [(1, 1, 1, 0), (3, 2, 4, 5), (3, 4, 2, 5), (1, 0, 1, 3)])
def test_npmi_rejects_inconsistent_counts(args):
    with pytest.raises(ValueError):
        compute_npmi(*args)


@st.composite
def count_tuples(draw):
    n = draw(st.integers(1, 200))
    ci = draw(st.integers(1, n))
    cj = draw(st.integers(1, n))
    cij = draw(st.integers(max(0, ci + cj - n), min(ci, cj)))
    return cij, ci, cj, n


@given(count_tuples())
def test_npmi_symmetric_and_bounded(c):
    cij, ci, cj, n = c
    v = compute_npmi(cij, ci, cj, n)
    assert v == compute_npmi(cij, cj, ci, n)
    assert -1.0 <= v <= 1.0


@given(count_tuples())
def test_npmi_fixed_points(c):
    cij, ci, cj, n = c
    v = compute_npmi(cij, ci, cj, n)
    if cij == ci == cj:
        assert v == 1.0
    elif cij * n == ci * cj and cij > 0:
        assert abs(v) <= 1e-12


def test_build_small_corpus_matches_brute_force():
    g = build_hetero_graph(CORPUS, npmi_threshold=0.0, min_cooccur=1)
    assert [n.name for n in g.nodes] == ["A", "B", "C"]
    assert all(n.kind is NodeKind.NON_HUB_INGREDIENT for n in g.nodes)
    expected = brute_force_weights(CORPUS, 0.0, 1)
    got = {frozenset((g.nodes[e.a].name, g.nodes[e.b].name)): e.weight for e in g.edges}
    assert got == expected
    # A,B co-occur in 2 of 4 recipes against 3/4 * 3/4 expected: negative NPMI
    assert got == {}
    assert hub_partition(g) == (set(), {0, 1, 2})


def test_association_makes_hub():
    g = build_hetero_graph(CORPUS, flavor_assoc=[("A", "c1")], npmi_threshold=0.0, min_cooccur=1)
    a, c1 = g.node_id("A"), g.node_id("c1")
    assert g.nodes[a].kind is NodeKind.HUB_INGREDIENT
    assert g.nodes[c1].kind is NodeKind.FLAVOR_COMPOUND
    assert g.weight(a, c1) == 1.0
    assert hub_partition(g) == ({a}, {g.node_id("B"), g.node_id("C")})


def test_drug_compound_and_duplicates_counted():
    g = build_hetero_graph(
        CORPUS,
        flavor_assoc=[("A", "c1"), ("A", "c1")],
        drug_assoc=[("B", "d1")],
        min_cooccur=1,
    )
    assert g.meta["duplicate_associations"] == 1
    assert g.nodes[g.node_id("d1")].kind is NodeKind.DRUG_COMPOUND
    hubs, non_hubs = hub_partition(g)
    assert hubs == {g.node_id("A"), g.node_id("B")}
    assert non_hubs == {g.node_id("C")}


def test_all_hubs_partition():
    g = build_hetero_graph(CORPUS, flavor_assoc=[("A", "x"), ("B", "x"), ("C", "y")], min_cooccur=1)
    hubs, non_hubs = hub_partition(g)
    assert hubs == {0, 1, 2} and non_hubs == set()


def test_empty_corpus_rejected():
    with pytest.raises(ValueError):
        build_hetero_graph([])
    with pytest.raises(ValueError):
        build_hetero_graph([[], []])


def test_min_cooccur_and_threshold_filter():
    g = build_hetero_graph(CORPUS, npmi_threshold=-1.0, min_cooccur=2)
    names = {frozenset((g.nodes[e.a].name, g.nodes[e.b].name)) for e in g.edges}
    assert names == {frozenset("AB")}
    g = build_hetero_graph(CORPUS, npmi_threshold=1.0, min_cooccur=1)
    assert g.edges == []


def test_graph_invariants_enforced():
    nodes = [Node(0, "a", NodeKind.NON_HUB_INGREDIENT), Node(1, "c", NodeKind.FLAVOR_COMPOUND),
             Node(2, "d", NodeKind.FLAVOR_COMPOUND)]
    with pytest.raises(ValueError):
        HeteroGraph(nodes, [Edge(1, 2, 1.0)])
    with pytest.raises(ValueError):
        HeteroGraph(nodes, [Edge(0, 1, 1.0), Edge(0, 1, 0.5)])
    with pytest.raises(ValueError):
        Edge(2, 1, 0.5)
    with pytest.raises(ValueError):
        Edge(0, 1, 1.5)
    with pytest.raises(ValueError):
        HeteroGraph([Node(1, "a", NodeKind.NON_HUB_INGREDIENT)], [])


@pytest.mark.parametrize("seed", range(20))
def test_random_corpora_match_brute_force(seed):
    rng = np.random.default_rng(seed)
    vocab = [f"i{k}" for k in range(int(rng.integers(3, 12)))]
    recipes = [
        list(rng.choice(vocab, size=int(rng.integers(1, 6)), replace=True))
        for _ in range(int(rng.integers(1, 51)))
    ]
    threshold = float(rng.uniform(-1, 0.5))
    min_co = int(rng.integers(0, 3))
    g = build_hetero_graph(recipes, npmi_threshold=threshold, min_cooccur=min_co)
    got = {frozenset((g.nodes[e.a].name, g.nodes[e.b].name)): e.weight for e in g.edges}
    assert got == brute_force_weights(recipes, threshold, min_co)


def test_corpus_stats_set_semantics():
    stats = CorpusStats.from_recipes([["a", "a", "b"], ["a", "c"]])
    idx = stats.index()
    assert stats.n_recipes == 2
    assert stats.counts[idx["a"]] == 2
    assert all(i < j for i, j in stats.pair_counts)
    assert (idx["a"], idx["a"]) not in stats.pair_counts
    assert stats.pair_counts[(idx["a"], idx["b"])] == 1


def test_weights_rescaled_into_unit_interval():
    g = build_hetero_graph(CORPUS, npmi_threshold=-1.0, min_cooccur=0)
    for e in g.edges:
        assert 0.0 <= e.weight <= 1.0
    # pair (A, C): one co-occurrence, marginals 3 and 2 of 4 recipes
    v = math.log((1 / 4) / ((3 / 4) * (2 / 4))) / -math.log(1 / 4)
    assert g.weight(g.node_id("A"), g.node_id("C")) == (v + 1) / 2
