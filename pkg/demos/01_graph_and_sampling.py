# Build an ingredient/compound graph from a synthetic corpus and draw subgraphs.
import numpy as np

from edgediffusion.graph import build_hetero_graph, compute_npmi, hub_partition
from edgediffusion.sampling import build_dataset, sample_balanced_subgraph
from edgediffusion.synthetic import synthetic_corpus

# %% NPMI on a few hand counts
print(compute_npmi(2, 2, 2, 4))  # always together -> 1.0
print(compute_npmi(1, 2, 2, 4))  # independent -> 0.0
print(compute_npmi(3, 4, 4, 8))  # mild attraction, about 0.413

# %% a corpus with four planted categories
recipes, assoc, fingerprints, categories = synthetic_corpus(
    n_ingredients=40, n_compounds=10, n_recipes=500, n_categories=4, seed=7
)
print(recipes[:3])
print(assoc[:5])

g = build_hetero_graph(recipes, flavor_assoc=assoc, categories=categories)
hubs, non_hubs = hub_partition(g)
print(g.n_nodes, "nodes,", len(g.edges), "edges,", len(hubs), "hubs,", len(non_hubs), "non-hubs")

# ingredient-ingredient weights are (npmi + 1) / 2, ingredient-compound weights are 1
w = np.array([e.weight for e in g.edges])
print("weight range", w.min(), w.max())

# %% one balanced subgraph: hubs first, then non-hubs
s = sample_balanced_subgraph(g, 10, np.random.default_rng(0))
print([g.nodes[i].name for i in s.node_ids])
print(np.round(s.x0, 2))

# %% a dataset; every sample has its own seeded generator, so threads do not matter
ds = build_dataset(g, m=10, n_train=200, n_val=20, seed=3, threads=4)
print(len(ds.train), len(ds.validation), ds.train[0].node_ids)
