"""Training loop, validation loss, checkpoints and checkpoint-driven reconstruction."""

from __future__ import annotations

import logging
import struct
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Mapping

import numpy as np

from . import diffusion
from .csp import batch_csp
from .denoiser import DenoiserConfig, DenoiserParams, backward, forward, init_params, predict_noise
from .ingest import FormatError, write_bytes_atomic

log = logging.getLogger(__name__)

CHECKPOINT_MAGIC = "EDGEDIFF-CHECKPOINT"
CHECKPOINT_VERSION = "1"
EVAL_CHUNK = 32


class TrainingDiverged(RuntimeError):
    """Loss became non-finite; ``checkpoint`` holds the last finite state."""

    def __init__(self, message, checkpoint):
        super().__init__(message)
        self.checkpoint = checkpoint


@dataclass(frozen=True)
class OptimizerConfig:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 10
    batch_size: int = 16
    max_steps: int | None = None
    csp_weight: float = 0.0
    validate: bool = True


@dataclass
class TrainingRecord:
    seed: int = 0
    m: int = 0
    epochs: int = 0
    steps: int = 0
    batch_size: int = 0
    lr: float = 0.0
    csp_weight: float = 0.0
    status: str = "complete"
    train_mse: list[float] = field(default_factory=list)
    val_mse: list[float] = field(default_factory=list)
    final_val_mse: float = float("nan")


@dataclass
class Checkpoint:
    params: DenoiserParams
    schedule: diffusion.NoiseSchedule
    record: TrainingRecord

    @property
    def config(self) -> DenoiserConfig:
        return self.params.config

    def __eq__(self, other):
        return (
            isinstance(other, Checkpoint)
            and self.params == other.params
            and self.schedule == other.schedule
            and _record_items(self.record) == _record_items(other.record)
        )


class Adam:
    def __init__(self, cfg: OptimizerConfig):
        self.cfg = cfg
        self.t = 0
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}

    def step(self, weights: dict[str, np.ndarray], grads: Mapping[str, np.ndarray]):
        c = self.cfg
        self.t += 1
        bc1 = 1.0 - c.beta1**self.t
        bc2 = 1.0 - c.beta2**self.t
        for name, gr in grads.items():
            if name not in self.m:
                self.m[name] = np.zeros_like(gr)
                self.v[name] = np.zeros_like(gr)
            self.m[name] = c.beta1 * self.m[name] + (1 - c.beta1) * gr
            self.v[name] = c.beta2 * self.v[name] + (1 - c.beta2) * gr * gr
            weights[name] = weights[name] - c.lr * (self.m[name] / bc1) / (np.sqrt(self.v[name] / bc2) + c.eps)


def _edge_loss_grad(out, eps):
    """Upper-triangle MSE and its gradient with respect to ``out``."""
    B, m, _ = out.shape
    iu = np.triu_indices(m, 1)
    n = B * len(iu[0])
    diff = np.zeros_like(out)
    diff[:, iu[0], iu[1]] = (out - eps)[:, iu[0], iu[1]]
    loss = float((diff**2).sum() / n)
    return loss, 2.0 * diff / n


def _stack(batch):
    if isinstance(batch, tuple):
        x0, ids = batch
        return np.asarray(x0, dtype=np.float64), np.asarray(ids, dtype=np.int64)
    return (
        np.stack([s.x0 for s in batch]).astype(np.float64),
        np.stack([s.node_ids for s in batch]).astype(np.int64),
    )


def loss_and_grads(
    params: DenoiserParams,
    x0m,
    node_ids,
    t,
    eps,
    sched: diffusion.NoiseSchedule,
    csp_targets: Mapping[int, np.ndarray] | None = None,
    csp_weight: float = 0.0,
):
    """Train-mode loss and exact gradients for fixed timesteps and noise.

    ``x0m`` holds model-space edge matrices ``(B, m, m)``. Returns
    ``(total, recon, csp, grads, batch_stats)``.
    """
    x_t = diffusion.forward_sample(x0m, t, eps, sched)
    out, cache, stats = forward(params, x_t, t, node_ids, train=True)
    recon, dout = _edge_loss_grad(out, eps)
    grads = backward(params, cache, dout)
    csp = 0.0
    if csp_weight and csp_targets:
        hubs = [int(i) for i in np.unique(node_ids) if int(i) in csp_targets]
        if hubs:
            W = params.weights
            rows = W["emb"][hubs]
            target = np.stack([csp_targets[i] for i in hubs])
            csp, drows, dw, db = batch_csp(rows, W["csp.w"], W["csp.b"], target)
            grads["emb"][hubs] += csp_weight * drows
            grads["csp.w"] += csp_weight * dw
            grads["csp.b"] += csp_weight * db
    return recon + csp_weight * csp, recon, csp, grads, stats


def _check_finite(loss, params, grads):
    if np.isfinite(loss) and all(np.all(np.isfinite(g)) for g in grads.values()):
        return
    # a non-finite weight is the cause; a non-finite gradient may only be a symptom
    for name, w in params.weights.items():
        if not np.all(np.isfinite(w)):
            raise FloatingPointError(f"non-finite loss; offending parameter {name!r}")
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise FloatingPointError(f"non-finite loss; offending parameter {name!r}")
    raise FloatingPointError("non-finite loss")


def parameter_gradients(
    batch,
    params: DenoiserParams,
    sched: diffusion.NoiseSchedule,
    rng: np.random.Generator,
    csp_targets: Mapping[int, np.ndarray] | None = None,
    csp_weight: float = 0.0,
):
    """Draw ``t`` and noise for ``batch`` and return ``(loss, grads)``.

    ``batch`` is a sequence of ``Subgraph`` or an ``(x0, node_ids)`` pair of
    value-space arrays.
    """
    x0, ids = _stack(batch)
    if len(x0) == 0:
        raise ValueError("empty batch")
    t, eps = diffusion.draw_training_noise(rng, x0.shape[0], x0.shape[1], sched)
    total, _, _, grads, _ = loss_and_grads(
        params, diffusion.to_model_space(x0), ids, t, eps, sched, csp_targets, csp_weight
    )
    _check_finite(total, params, grads)
    return total, grads


def evaluate_mse(params: DenoiserParams, sched: diffusion.NoiseSchedule, samples, seed: int) -> float:
    """Eval-mode noise-prediction MSE over ``samples``.

    Sample ``k`` draws its timestep and noise from a generator seeded with
    ``(seed, 2, k)``, so the value is a pure function of the arguments.
    """
    x0, ids = _stack(samples)
    n, m, _ = x0.shape
    per_sample = np.empty(n)
    iu = np.triu_indices(m, 1)
    for start in range(0, n, EVAL_CHUNK):
        stop = min(start + EVAL_CHUNK, n)
        ts, epss = [], []
        for k in range(start, stop):
            rng = np.random.default_rng([seed, 2, k])
            t, eps = diffusion.draw_training_noise(rng, 1, m, sched)
            ts.append(t[0])
            epss.append(eps[0])
        t = np.array(ts)
        eps = np.stack(epss)
        x_t = diffusion.forward_sample(diffusion.to_model_space(x0[start:stop]), t, eps, sched)
        out, _, _ = forward(params, x_t, t, ids[start:stop], train=False)
        per_sample[start:stop] = ((out - eps)[:, iu[0], iu[1]] ** 2).mean(axis=1)
    return float(per_sample.mean())


def train(
    dataset,
    config: DenoiserConfig,
    sched: diffusion.NoiseSchedule,
    optimizer: OptimizerConfig = OptimizerConfig(),
    seed: int = 0,
    train_config: TrainConfig = TrainConfig(),
    csp_targets: Mapping[int, np.ndarray] | None = None,
    init: DenoiserParams | None = None,
) -> Checkpoint:
    """Minibatch Adam on the noise-prediction loss (plus weighted CSP loss).

    ``dataset`` is a ``SubgraphDataset``. Per-epoch train MSE is the mean
    minibatch reconstruction loss; validation MSE uses ``evaluate_mse``
    with the training seed.
    """
    train_set = list(dataset.train)
    val_set = list(dataset.validation)
    if not train_set:
        raise ValueError("empty training set")
    if train_config.csp_weight and config.fingerprint_bits == 0:
        raise ValueError("csp_weight > 0 requires a config with fingerprint_bits")
    params = init.copy() if init is not None else init_params(config, seed)
    rng = np.random.default_rng([seed, 1])
    opt = Adam(optimizer)
    record = TrainingRecord(
        seed=seed, m=dataset.m, batch_size=train_config.batch_size, lr=optimizer.lr,
        csp_weight=train_config.csp_weight,
    )
    x0_all, ids_all = _stack(train_set)
    x0m_all = diffusion.to_model_space(x0_all)
    n = len(train_set)
    bs = min(train_config.batch_size, n)
    steps = 0

    def snapshot(status):
        record.status = status
        return Checkpoint(params.copy(), sched, record)

    for epoch in range(train_config.epochs):
        perm = rng.permutation(n)
        losses = []
        for start in range(0, n - bs + 1, bs):
            if train_config.max_steps is not None and steps >= train_config.max_steps:
                break
            idx = perm[start:start + bs]
            t, eps = diffusion.draw_training_noise(rng, bs, x0m_all.shape[1], sched)
            total, recon, _, grads, stats = loss_and_grads(
                params, x0m_all[idx], ids_all[idx], t, eps, sched, csp_targets, train_config.csp_weight
            )
            if not np.isfinite(total) or not all(np.all(np.isfinite(g)) for g in grads.values()):
                raise TrainingDiverged(f"non-finite loss at step {steps}", snapshot("diverged"))
            opt.step(params.weights, grads)
            params.buffers.update(stats)
            losses.append(recon)
            steps += 1
        if not losses:
            break
        record.epochs = epoch + 1
        record.steps = steps
        record.train_mse.append(float(np.mean(losses)))
        if train_config.validate and val_set:
            record.val_mse.append(evaluate_mse(params, sched, val_set, seed))
            log.info("epoch %d train %.6f val %.6f", epoch + 1, record.train_mse[-1], record.val_mse[-1])
        else:
            log.info("epoch %d train %.6f", epoch + 1, record.train_mse[-1])
    if val_set:
        record.final_val_mse = evaluate_mse(params, sched, val_set, seed)
    return snapshot("complete")


def model_fn(params: DenoiserParams):
    """Adapter ``(x_t, t, node_ids) -> eps_hat`` in eval mode for ``diffusion.reconstruct``."""
    return lambda x_t, t, node_ids: predict_noise(x_t, t, node_ids, params, mode="eval")


def reconstruct(ckpt: Checkpoint, node_ids, seed: int, trace: bool = False, steps: int | None = None):
    node_ids = np.asarray(node_ids, dtype=np.int64)
    if np.any(node_ids < 0) or np.any(node_ids >= ckpt.config.n_nodes_total):
        raise ValueError("unknown node id")
    return diffusion.reconstruct(node_ids, model_fn(ckpt.params), ckpt.schedule, seed, trace, steps)


# -- checkpoint files --------------------------------------------------------

def _floats(values) -> str:
    return ",".join(repr(float(v)) for v in values)


def _record_items(record: TrainingRecord) -> dict[str, str]:
    out = {}
    for f in fields(TrainingRecord):
        value = getattr(record, f.name)
        out[f.name] = _floats(value) if isinstance(value, list) else repr(value) if isinstance(value, float) else str(value)
    return out


def save_checkpoint(ckpt: Checkpoint, path) -> None:
    """Header of ``key=value`` lines ended by a blank line, then float64 LE parameters."""
    cfg = ckpt.config
    sched = ckpt.schedule
    items = [("format_version", CHECKPOINT_VERSION)]
    items += [(f"config.{f.name}", repr(getattr(cfg, f.name))) for f in fields(DenoiserConfig)]
    items += [
        ("schedule.kind", sched.kind),
        ("schedule.T", str(sched.T)),
        ("schedule.beta_start", repr(sched.beta_start)),
        ("schedule.beta_end", repr(sched.beta_end)),
        ("schedule.betas", _floats(sched.beta[1:])),
    ]
    items += [(f"record.{k}", v) for k, v in _record_items(ckpt.record).items()]
    flat = ckpt.params.flat().astype("<f8")
    items.append(("n_values", str(flat.size)))
    header = CHECKPOINT_MAGIC + "\n" + "".join(f"{k}={v}\n" for k, v in items) + "\n"
    write_bytes_atomic(path, header.encode("utf-8") + flat.tobytes())


def load_checkpoint(path) -> Checkpoint:
    data = Path(path).read_bytes()
    sep = data.find(b"\n\n")
    if sep < 0 or not data.startswith(CHECKPOINT_MAGIC.encode() + b"\n"):
        raise FormatError(f"{path}: not a checkpoint file")
    header = data[: sep + 1].decode("utf-8").splitlines()[1:]
    items = dict(line.split("=", 1) for line in header)
    if items.get("format_version") != CHECKPOINT_VERSION:
        raise FormatError(f"{path}: unsupported checkpoint version {items.get('format_version')!r}")

    cfg_kwargs = {}
    for f in fields(DenoiserConfig):
        raw = items[f"config.{f.name}"]
        cfg_kwargs[f.name] = float(raw) if f.type in ("float", float) else int(raw)
    cfg = DenoiserConfig(**cfg_kwargs)

    betas = [float(b) for b in items["schedule.betas"].split(",")]
    sched = diffusion.schedule_from_betas(
        betas, float(items["schedule.beta_start"]), float(items["schedule.beta_end"])
    )
    sched = diffusion.NoiseSchedule(
        sched.T, sched.beta, sched.alpha, sched.alpha_bar, sched.beta_start, sched.beta_end,
        items["schedule.kind"],
    )
    if sched.kind == "linear":
        rebuilt = diffusion.make_schedule(sched.T, sched.beta_start, sched.beta_end)
        if not np.array_equal(rebuilt.beta, sched.beta):
            raise FormatError(f"{path}: schedule betas inconsistent with linear parameters")
        sched = rebuilt

    rec_kwargs = {}
    for f in fields(TrainingRecord):
        raw = items[f"record.{f.name}"]
        if f.name in ("train_mse", "val_mse"):
            rec_kwargs[f.name] = [float(v) for v in raw.split(",")] if raw else []
        elif f.type in ("float", float):
            rec_kwargs[f.name] = float(raw)
        elif f.type in ("int", int):
            rec_kwargs[f.name] = int(raw)
        else:
            rec_kwargs[f.name] = raw
    record = TrainingRecord(**rec_kwargs)

    body = data[sep + 2:]
    n_values = int(items["n_values"])
    if len(body) != 8 * n_values:
        raise FormatError(f"{path}: truncated parameter block")
    flat = np.array(struct.unpack(f"<{n_values}d", body))
    return Checkpoint(DenoiserParams.from_flat(cfg, flat), sched, record)
