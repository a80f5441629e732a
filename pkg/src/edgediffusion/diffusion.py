"""Gaussian diffusion over symmetric edge matrices: schedules, corruption, DDIM."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np


@dataclass(frozen=True)
class NoiseSchedule:
    """Per-step noise variances, 1-indexed.

    ``beta``, ``alpha`` and ``alpha_bar`` have length ``T + 1``; index 0 holds
    the ``alpha_bar[0] = 1`` convention (``beta[0] = 0``).
    """

    T: int
    beta: np.ndarray
    alpha: np.ndarray
    alpha_bar: np.ndarray
    beta_start: float
    beta_end: float
    kind: str = "linear"

    def check_t(self, t):
        t = np.asarray(t)
        if np.any(t < 1) or np.any(t > self.T):
            raise ValueError(f"timestep out of range 1..{self.T}: {t}")

    def __eq__(self, other):
        return (
            isinstance(other, NoiseSchedule)
            and (self.T, self.kind, self.beta_start, self.beta_end)
            == (other.T, other.kind, other.beta_start, other.beta_end)
            and np.array_equal(self.beta, other.beta)
        )

    def __hash__(self):
        return hash((self.T, self.kind, self.beta_start, self.beta_end))


def make_schedule(T: int, beta_start: float = 1e-2, beta_end: float = 0.3, kind: str = "linear") -> NoiseSchedule:
    if T < 1:
        raise ValueError("T must be >= 1")
    if not 0.0 < beta_start <= beta_end < 1.0:
        raise ValueError("need 0 < beta_start <= beta_end < 1")
    if kind != "linear":
        raise ValueError(f"unknown schedule kind {kind!r}")
    if T == 1:
        steps = np.array([beta_start])
    else:
        steps = beta_start + np.arange(T) / (T - 1) * (beta_end - beta_start)
    beta = np.concatenate([[0.0], steps])
    alpha = 1.0 - beta
    alpha_bar = np.cumprod(alpha)
    return NoiseSchedule(T, beta, alpha, alpha_bar, float(beta_start), float(beta_end), kind)


def schedule_from_betas(betas, beta_start=None, beta_end=None) -> NoiseSchedule:
    """Schedule from an explicit beta sequence (tests and custom schedules)."""
    steps = np.asarray(betas, dtype=np.float64)
    if steps.ndim != 1 or steps.size < 1 or np.any(steps <= 0) or np.any(steps >= 1):
        raise ValueError("betas must be a non-empty sequence in (0, 1)")
    beta = np.concatenate([[0.0], steps])
    alpha = 1.0 - beta
    return NoiseSchedule(
        steps.size, beta, alpha, np.cumprod(alpha),
        float(steps[0] if beta_start is None else beta_start),
        float(steps[-1] if beta_end is None else beta_end),
        "custom",
    )


def to_model_space(w):
    """Edge weights in [0, 1] -> [-1, 1]."""
    return 2.0 * np.asarray(w) - 1.0


def from_model_space(x, clamp: bool = True):
    w = (np.asarray(x) + 1.0) / 2.0
    return np.clip(w, 0.0, 1.0) if clamp else w


def symmetric_noise(rng: np.random.Generator, shape) -> np.ndarray:
    """Standard normal noise mirrored across the last two axes, zero diagonal."""
    *lead, m, m2 = shape
    if m != m2:
        raise ValueError("noise must be square in its last two axes")
    iu = np.triu_indices(m, 1)
    out = np.zeros(shape)
    out[(..., *iu)] = rng.standard_normal((*lead, len(iu[0])))
    return out + np.swapaxes(out, -1, -2)


def _per_sample(coef, ndim):
    coef = np.asarray(coef, dtype=np.float64)
    return coef.reshape(coef.shape + (1,) * (ndim - coef.ndim))


def forward_sample(x0, t, eps, sched: NoiseSchedule) -> np.ndarray:
    """Closed-form corruption ``sqrt(ab_t) x0 + sqrt(1 - ab_t) eps``.

    ``t`` is an int or one step per leading batch entry.
    """
    x0 = np.asarray(x0, dtype=np.float64)
    eps = np.asarray(eps, dtype=np.float64)
    if x0.shape != eps.shape:
        raise ValueError(f"shape mismatch: x0 {x0.shape} vs eps {eps.shape}")
    sched.check_t(t)
    ab = _per_sample(sched.alpha_bar[np.asarray(t)], x0.ndim)
    return np.sqrt(ab) * x0 + np.sqrt(1.0 - ab) * eps


def posterior_params(x0, x_t, t: int, sched: NoiseSchedule):
    """Mean and variance of q(x_{t-1} | x_t, x0)."""
    sched.check_t(t)
    ab_t, ab_prev = sched.alpha_bar[t], sched.alpha_bar[t - 1]
    beta_t, alpha_t = sched.beta[t], sched.alpha[t]
    c0 = np.sqrt(ab_prev) * beta_t / (1.0 - ab_t)
    ct = np.sqrt(alpha_t) * (1.0 - ab_prev) / (1.0 - ab_t)
    mu = c0 * np.asarray(x0, dtype=np.float64) + ct * np.asarray(x_t, dtype=np.float64)
    var = (1.0 - ab_prev) / (1.0 - ab_t) * beta_t
    return mu, var


def posterior_coefficients(t: int, sched: NoiseSchedule) -> tuple[float, float]:
    sched.check_t(t)
    ab_t, ab_prev = sched.alpha_bar[t], sched.alpha_bar[t - 1]
    return (
        float(np.sqrt(ab_prev) * sched.beta[t] / (1.0 - ab_t)),
        float(np.sqrt(sched.alpha[t]) * (1.0 - ab_prev) / (1.0 - ab_t)),
    )


def predict_x0(x_t, t, eps_hat, sched: NoiseSchedule) -> np.ndarray:
    ab = sched.alpha_bar[t]
    return (np.asarray(x_t) - np.sqrt(1.0 - ab) * np.asarray(eps_hat)) / np.sqrt(ab)


def ddim_step(x_t, t: int, eps_hat, sched: NoiseSchedule, t_prev: int | None = None) -> np.ndarray:
    """Deterministic DDIM update from step ``t`` to ``t_prev`` (default ``t - 1``)."""
    sched.check_t(t)
    t_prev = t - 1 if t_prev is None else t_prev
    if not 0 <= t_prev < t:
        raise ValueError(f"t_prev must satisfy 0 <= t_prev < t, got {t_prev}")
    x0_hat = predict_x0(x_t, t, eps_hat, sched)
    ab_prev = sched.alpha_bar[t_prev]
    return np.sqrt(ab_prev) * x0_hat + np.sqrt(1.0 - ab_prev) * np.asarray(eps_hat)


def ddim_timesteps(T: int, steps: int | None = None) -> list[int]:
    """Decreasing visit order ``[T, ..., 0]`` with ``steps`` transitions."""
    steps = T if steps is None else steps
    if not 1 <= steps <= T:
        raise ValueError(f"steps must lie in 1..{T}")
    ts = np.round(np.linspace(T, 0, steps + 1)).astype(int)
    return [int(t) for t in ts]


def edge_mse(pred, target) -> float | np.ndarray:
    """Mean squared error over strict upper-triangle entries, averaged over any batch axis."""
    pred = np.asarray(pred)
    target = np.asarray(target)
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {target.shape}")
    m = pred.shape[-1]
    iu = np.triu_indices(m, 1)
    diff = (pred - target)[(..., *iu)]
    return float(np.mean(diff**2))


def draw_training_noise(rng: np.random.Generator, batch: int, m: int, sched: NoiseSchedule):
    """Timesteps ``t ~ U{1..T}`` and symmetric noise for a batch of size ``batch``."""
    t = rng.integers(1, sched.T + 1, size=batch)
    eps = symmetric_noise(rng, (batch, m, m))
    return t, eps


def training_loss(x0_batch, rng: np.random.Generator, sched: NoiseSchedule, model: Callable) -> float:
    """Noise-prediction loss of ``model(x_t, t)`` on a batch of model-space edge matrices."""
    x0_batch = np.asarray(x0_batch, dtype=np.float64)
    if x0_batch.ndim != 3 or x0_batch.shape[0] == 0:
        raise ValueError("x0_batch must be a non-empty (B, m, m) array")
    t, eps = draw_training_noise(rng, x0_batch.shape[0], x0_batch.shape[1], sched)
    x_t = forward_sample(x0_batch, t, eps, sched)
    return edge_mse(model(x_t, t), eps)


def reconstruct(
    node_ids,
    model: Callable,
    sched: NoiseSchedule,
    seed: int,
    trace: bool = False,
    steps: int | None = None,
):
    """Denoise from ``x_T ~ N(0, I)`` with DDIM.

    ``model(x_t, t, node_ids)`` returns the noise estimate for one ``(m, m)``
    matrix. Returns the final matrix in [0, 1] and, when ``trace`` is set, the
    list of all visited states in value space (``steps + 1`` matrices,
    clamped to [0, 1]).
    """
    node_ids = np.asarray(node_ids, dtype=np.int64)
    m = len(node_ids)
    if m < 2:
        raise ValueError("need at least two nodes")
    rng = np.random.default_rng(seed)
    x = symmetric_noise(rng, (m, m))
    states = [from_model_space(x)] if trace else None
    ts = ddim_timesteps(sched.T, steps)
    for t, t_prev in zip(ts[:-1], ts[1:]):
        eps_hat = model(x, t, node_ids)
        x = ddim_step(x, t, eps_hat, sched, t_prev)
        if trace:
            states.append(from_model_space(x))
    return from_model_space(x), states
