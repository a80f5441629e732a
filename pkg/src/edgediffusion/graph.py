"""Heterogeneous ingredient/compound graph with NPMI-weighted co-occurrence edges."""

from __future__ import annotations

import enum
import math
from collections import Counter
from dataclasses import dataclass, field
from itertools import combinations
from typing import Iterable, Mapping, Sequence


class NodeKind(enum.Enum):
    HUB_INGREDIENT = "hub_ingredient"
    NON_HUB_INGREDIENT = "non_hub_ingredient"
    FLAVOR_COMPOUND = "flavor_compound"
    DRUG_COMPOUND = "drug_compound"

    @property
    def is_ingredient(self) -> bool:
        return self in (NodeKind.HUB_INGREDIENT, NodeKind.NON_HUB_INGREDIENT)


@dataclass(frozen=True)
class Node:
    id: int
    name: str
    kind: NodeKind
    category: str | None = None


@dataclass(frozen=True)
class Edge:
    a: int
    b: int
    weight: float

    def __post_init__(self):
        if not self.a < self.b:
            raise ValueError(f"edge endpoints must satisfy a < b, got ({self.a}, {self.b})")
        if not 0.0 <= self.weight <= 1.0:
            raise ValueError(f"edge weight {self.weight!r} outside [0, 1]")


@dataclass
class CorpusStats:
    """Ingredient and pair counts of a recipe corpus.

    ``names`` interns ingredients to dense ids in order of first appearance.
    ``pair_counts`` is keyed by ``(i, j)`` with ``i < j``.
    """

    n_recipes: int
    names: list[str]
    counts: list[int]
    pair_counts: dict[tuple[int, int], int]
    skipped_empty: int = 0

    @classmethod
    def from_recipes(cls, recipes: Iterable[Iterable[str]]) -> "CorpusStats":
        index: dict[str, int] = {}
        names: list[str] = []
        counts: list[int] = []
        pairs: Counter = Counter()
        n = 0
        skipped = 0
        for recipe in recipes:
            ids = []
            for name in recipe:
                if name not in index:
                    index[name] = len(names)
                    names.append(name)
                    counts.append(0)
                ids.append(index[name])
            ids = sorted(set(ids))
            if not ids:
                skipped += 1
                continue
            n += 1
            for i in ids:
                counts[i] += 1
            pairs.update(combinations(ids, 2))
        return cls(n, names, counts, dict(pairs), skipped)

    def index(self) -> dict[str, int]:
        return {name: i for i, name in enumerate(self.names)}


def compute_npmi(count_ij: int, count_i: int, count_j: int, n_recipes: int) -> float:
    """Normalized PMI of two items from co-occurrence counts.

    Returns a value in [-1, 1]; -1 when the pair never co-occurs.
    """
    if n_recipes <= 0:
        raise ValueError("n_recipes must be positive")
    if count_i < 1 or count_j < 1:
        raise ValueError("marginal counts must be >= 1")
    if count_ij < 0 or count_ij > count_i or count_ij > count_j:
        raise ValueError(
            f"inconsistent counts: pair {count_ij} vs marginals {count_i}, {count_j}"
        )
    if count_i > n_recipes or count_j > n_recipes:
        raise ValueError("marginal count exceeds n_recipes")
    if count_ij == 0:
        return -1.0
    # exact integer checks for the two fixed points
    if count_ij == count_i == count_j:
        return 1.0
    if count_ij * n_recipes == count_i * count_j:
        return 0.0
    p_ij = count_ij / n_recipes
    p_i = count_i / n_recipes
    p_j = count_j / n_recipes
    pmi = math.log(p_ij / (p_i * p_j))
    value = pmi / -math.log(p_ij)
    return min(1.0, max(-1.0, value))


def npmi_to_weight(npmi: float) -> float:
    return (npmi + 1.0) / 2.0


@dataclass
class HeteroGraph:
    nodes: list[Node]
    edges: list[Edge]
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        for i, node in enumerate(self.nodes):
            if node.id != i:
                raise ValueError(f"node ids must be contiguous, got {node.id} at position {i}")
        if len({n.name for n in self.nodes}) != len(self.nodes):
            raise ValueError("node names must be unique")
        seen = set()
        self.neighbors: list[dict[int, float]] = [{} for _ in self.nodes]
        for e in self.edges:
            if (e.a, e.b) in seen:
                raise ValueError(f"duplicate edge ({e.a}, {e.b})")
            if e.b >= len(self.nodes):
                raise ValueError(f"edge ({e.a}, {e.b}) references unknown node")
            ka, kb = self.nodes[e.a].kind, self.nodes[e.b].kind
            if not (ka.is_ingredient or kb.is_ingredient):
                raise ValueError(f"compound-compound edge ({e.a}, {e.b}) not allowed")
            seen.add((e.a, e.b))
            self.neighbors[e.a][e.b] = e.weight
            self.neighbors[e.b][e.a] = e.weight
        self._by_name = {n.name: n.id for n in self.nodes}

    def __eq__(self, other):
        if not isinstance(other, HeteroGraph):
            return NotImplemented
        return self.nodes == other.nodes and self.edges == other.edges

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    def node_id(self, name: str) -> int:
        return self._by_name[name]

    def weight(self, a: int, b: int) -> float:
        return self.neighbors[a].get(b, 0.0)

    def ingredient_ids(self) -> list[int]:
        return [n.id for n in self.nodes if n.kind.is_ingredient]

    def compound_neighbors(self, i: int) -> list[int]:
        return sorted(j for j in self.neighbors[i] if not self.nodes[j].kind.is_ingredient)

    def degree(self, i: int) -> int:
        return len(self.neighbors[i])


def hub_partition(g: HeteroGraph) -> tuple[set[int], set[int]]:
    """Split ingredients by whether they touch at least one compound."""
    hubs, non_hubs = set(), set()
    for node in g.nodes:
        if not node.kind.is_ingredient:
            continue
        if g.compound_neighbors(node.id):
            hubs.add(node.id)
        else:
            non_hubs.add(node.id)
    return hubs, non_hubs


def _dedupe(rows: Iterable[tuple[str, str]]) -> tuple[list[tuple[str, str]], int]:
    seen = set()
    out = []
    dup = 0
    for row in rows:
        row = tuple(row)
        if row in seen:
            dup += 1
            continue
        seen.add(row)
        out.append(row)
    return out, dup


def build_hetero_graph(
    recipes: CorpusStats | Iterable[Iterable[str]],
    flavor_assoc: Sequence[tuple[str, str]] = (),
    drug_assoc: Sequence[tuple[str, str]] = (),
    npmi_threshold: float = 0.0,
    min_cooccur: int = 2,
    categories: Mapping[str, str] | None = None,
) -> HeteroGraph:
    """Build the ingredient/compound graph.

    Ingredient pairs co-occurring in at least ``min_cooccur`` recipes with
    NPMI >= ``npmi_threshold`` become edges weighted ``(npmi + 1) / 2``.
    Every ingredient-compound association becomes an edge of weight 1.0.
    Nodes are ordered: corpus ingredients (first appearance), association-only
    ingredients, flavor compounds, drug compounds.
    """
    if not -1.0 <= npmi_threshold <= 1.0:
        raise ValueError("npmi_threshold must lie in [-1, 1]")
    if min_cooccur < 0:
        raise ValueError("min_cooccur must be non-negative")
    stats = recipes if isinstance(recipes, CorpusStats) else CorpusStats.from_recipes(recipes)
    if stats.n_recipes == 0:
        raise ValueError("empty recipe corpus")
    categories = dict(categories or {})

    flavor, dup_f = _dedupe(flavor_assoc)
    drug, dup_d = _dedupe(drug_assoc)

    ingredient_names = list(stats.names)
    known = set(ingredient_names)
    for ing, _ in flavor + drug:
        if ing not in known:
            known.add(ing)
            ingredient_names.append(ing)
    compound_kind: dict[str, NodeKind] = {}
    compound_names: list[str] = []
    for rows, kind in ((flavor, NodeKind.FLAVOR_COMPOUND), (drug, NodeKind.DRUG_COMPOUND)):
        for _, comp in rows:
            if comp in known:
                raise ValueError(f"name {comp!r} used both as ingredient and compound")
            prev = compound_kind.get(comp)
            if prev is None:
                compound_kind[comp] = kind
                compound_names.append(comp)
            elif prev is not kind:
                raise ValueError(f"compound {comp!r} appears in both flavor and drug associations")

    n_ing = len(ingredient_names)
    ing_index = {name: i for i, name in enumerate(ingredient_names)}
    comp_index = {name: n_ing + k for k, name in enumerate(compound_names)}

    weights: dict[tuple[int, int], float] = {}
    for (i, j), c_ij in stats.pair_counts.items():
        if c_ij < min_cooccur:
            continue
        npmi = compute_npmi(c_ij, stats.counts[i], stats.counts[j], stats.n_recipes)
        if npmi >= npmi_threshold:
            weights[(i, j)] = npmi_to_weight(npmi)
    hub = [False] * n_ing
    for ing, comp in flavor + drug:
        a, b = ing_index[ing], comp_index[comp]
        weights[(a, b)] = 1.0
        hub[a] = True

    nodes = [
        Node(
            i,
            name,
            NodeKind.HUB_INGREDIENT if hub[i] else NodeKind.NON_HUB_INGREDIENT,
            categories.get(name),
        )
        for i, name in enumerate(ingredient_names)
    ]
    nodes += [
        Node(comp_index[name], name, compound_kind[name], categories.get(name))
        for name in compound_names
    ]
    edges = [Edge(a, b, w) for (a, b), w in sorted(weights.items())]
    meta = {
        "duplicate_associations": dup_f + dup_d,
        "n_recipes": stats.n_recipes,
        "skipped_empty_recipes": stats.skipped_empty,
    }
    return HeteroGraph(nodes, edges, meta)
