# Forward corruption of an edge matrix and deterministic DDIM recovery.
import numpy as np

from edgediffusion import diffusion

sched = diffusion.make_schedule(20)  # linear betas 1e-2 .. 0.3
print("alpha_bar at 1, 10, 20:", sched.alpha_bar[[1, 10, 20]])

rng = np.random.default_rng(0)
w0 = np.triu(rng.random((6, 6)), 1)
w0 = w0 + w0.T
x0 = diffusion.to_model_space(w0)
np.fill_diagonal(x0, 0.0)

# %% closed-form corruption at a few steps
eps = diffusion.symmetric_noise(rng, (6, 6))
for t in (1, 5, 20):
    x_t = diffusion.forward_sample(x0, t, eps, sched)
    print(t, "distance from x0:", np.linalg.norm(x_t - x0).round(3))

# %% with the true noise, one DDIM jump recovers x0 exactly
x_t = diffusion.forward_sample(x0, 12, eps, sched)
print(np.abs(diffusion.ddim_step(x_t, 12, eps, sched, 0) - x0).max())


# %% a perfect noise predictor drives the sampler straight to x0
def oracle(x, t, node_ids):
    ab = sched.alpha_bar[t]
    return (x - np.sqrt(ab) * x0) / np.sqrt(1 - ab)


final, states = diffusion.reconstruct(np.arange(6), oracle, sched, seed=1, trace=True, steps=10)
print(len(states), "states, final error", np.abs(final - w0)[~np.eye(6, dtype=bool)].max())
