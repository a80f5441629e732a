# Train a small noise predictor with the fingerprint loss, then evaluate it.
import time

import numpy as np

from edgediffusion import diffusion
from edgediffusion.csp import csp_targets
from edgediffusion.denoiser import DenoiserConfig
from edgediffusion.evaluation import generalization_matrix, nmi_protocol, project_2d
from edgediffusion.graph import build_hetero_graph
from edgediffusion.sampling import build_dataset
from edgediffusion.synthetic import synthetic_corpus
from edgediffusion.training import OptimizerConfig, TrainConfig, reconstruct, train

recipes, assoc, fps, cats = synthetic_corpus(160, 40, 6000, 4, seed=7)
g = build_hetero_graph(recipes, flavor_assoc=assoc, categories=cats)
targets = csp_targets(g, fps)
sched = diffusion.make_schedule(20)

# %% train on 10-node subgraphs (a few hundred steps takes well under a minute)
ds10 = build_dataset(g, 10, 1000, 64, seed=3)
ds25 = build_dataset(g, 25, 1000, 64, seed=3)
cfg = DenoiserConfig(g.n_nodes, n_layers=2, node_dim=32, edge_dim=32, time_dim=32, fingerprint_bits=881)
t0 = time.time()
ck = train(ds10, cfg, sched, OptimizerConfig(), seed=0,
           train_config=TrainConfig(epochs=100, batch_size=16, max_steps=400, csp_weight=0.1, validate=False),
           csp_targets=targets)
print(f"{ck.record.steps} steps in {time.time() - t0:.0f}s, final validation MSE {ck.record.final_val_mse:.4f}")

# %% hub embeddings against the planted categories
rep = nmi_protocol(ck, g, cats, k=4, repeats=10)
print(f"NMI {rep.mean:.3f} +/- {rep.std:.3f} over {rep.n_items} hubs")

# %% the same checkpoint on both subgraph sizes
print(generalization_matrix([ck], [ds10, ds25]).to_tsv())

# %% reconstruct one validation subgraph from noise
s = ds10.validation[0]
final, states = reconstruct(ck, s.node_ids, seed=0, trace=True, steps=10)
for k in (0, 5, 10):
    print(k, "error", np.linalg.norm(states[k] - s.x0).round(3))

# %% 2-D layout of ingredient embeddings
ids = g.ingredient_ids()
xy = project_2d(ck.params.weights["emb"][ids])
print(xy[:5].round(3))
