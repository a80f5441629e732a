"""Anisotropic edge-gated GNN noise predictor with an analytic backward pass.

Shapes: ``B`` batch, ``m`` nodes per subgraph, ``d`` feature width. Node
features ``h`` are ``(B, m, d)``, edge features ``e`` are ``(B, m, m, d)``.
Each layer computes

    a    = e P + (h Q)_i + (h R)_j
    e'   = e + MLP_e(BN(a)) + MLP_t(t)
    h'   = h + ReLU(BN(h U + sum_{j != i} sigmoid(a_ij) * (h V)_j))

and the head maps ``ReLU(e_L)`` through a two-layer MLP to one scalar per
edge, symmetrized by transpose averaging with a zeroed diagonal.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class DenoiserConfig:
    n_nodes_total: int
    n_layers: int = 2
    node_dim: int = 32
    edge_dim: int = 32
    time_dim: int = 32
    fingerprint_bits: int = 0
    bn_momentum: float = 0.1
    bn_eps: float = 1e-5

    def __post_init__(self):
        for name in ("n_nodes_total", "n_layers", "node_dim", "edge_dim", "time_dim"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.node_dim != self.edge_dim:
            # the sigmoid gate multiplies edge features into node messages
            raise ValueError("node_dim must equal edge_dim")
        if self.time_dim % 2:
            raise ValueError("time_dim must be even")
        if self.fingerprint_bits < 0:
            raise ValueError("fingerprint_bits must be >= 0")

    @property
    def d(self) -> int:
        return self.edge_dim


def param_spec(cfg: DenoiserConfig) -> list[tuple[str, tuple[int, ...]]]:
    """Canonical (name, shape) order of the learnable tensors."""
    d, td = cfg.d, cfg.time_dim
    spec = [("emb", (cfg.n_nodes_total, d)), ("edge_in.w", (d,)), ("edge_in.b", (d,))]
    for l in range(cfg.n_layers):
        p = f"layer{l}."
        spec += [
            (p + "P", (d, d)), (p + "Q", (d, d)), (p + "R", (d, d)),
            (p + "U", (d, d)), (p + "V", (d, d)),
            (p + "bn_e.gamma", (d,)), (p + "bn_e.beta", (d,)),
            (p + "mlp_e.w1", (d, d)), (p + "mlp_e.b1", (d,)),
            (p + "mlp_e.w2", (d, d)), (p + "mlp_e.b2", (d,)),
            (p + "mlp_t.w1", (td, d)), (p + "mlp_t.b1", (d,)),
            (p + "mlp_t.w2", (d, d)), (p + "mlp_t.b2", (d,)),
            (p + "bn_h.gamma", (d,)), (p + "bn_h.beta", (d,)),
        ]
    spec += [("head.w1", (d, d)), ("head.b1", (d,)), ("head.w2", (d,)), ("head.b2", (1,))]
    if cfg.fingerprint_bits:
        spec += [("csp.w", (d, cfg.fingerprint_bits)), ("csp.b", (cfg.fingerprint_bits,))]
    return spec


def buffer_spec(cfg: DenoiserConfig) -> list[tuple[str, tuple[int, ...]]]:
    spec = []
    for l in range(cfg.n_layers):
        for bn in ("bn_e", "bn_h"):
            spec += [(f"layer{l}.{bn}.mean", (cfg.d,)), (f"layer{l}.{bn}.var", (cfg.d,))]
    return spec


@dataclass
class DenoiserParams:
    config: DenoiserConfig
    weights: dict[str, np.ndarray]
    buffers: dict[str, np.ndarray] = field(default_factory=dict)

    def copy(self) -> "DenoiserParams":
        return DenoiserParams(
            self.config,
            {k: v.copy() for k, v in self.weights.items()},
            {k: v.copy() for k, v in self.buffers.items()},
        )

    def flat(self) -> np.ndarray:
        """Weights then buffers, in canonical order, as one float64 vector."""
        parts = [self.weights[k].ravel() for k, _ in param_spec(self.config)]
        parts += [self.buffers[k].ravel() for k, _ in buffer_spec(self.config)]
        return np.concatenate(parts)

    @classmethod
    def from_flat(cls, config: DenoiserConfig, vec: np.ndarray) -> "DenoiserParams":
        vec = np.asarray(vec, dtype=np.float64)
        weights, buffers, pos = {}, {}, 0
        for target, spec in ((weights, param_spec(config)), (buffers, buffer_spec(config))):
            for name, shape in spec:
                size = int(np.prod(shape))
                if pos + size > vec.size:
                    raise ValueError("parameter vector too short")
                target[name] = vec[pos:pos + size].reshape(shape).copy()
                pos += size
        if pos != vec.size:
            raise ValueError("parameter vector too long")
        return cls(config, weights, buffers)

    def __eq__(self, other):
        return (
            isinstance(other, DenoiserParams)
            and self.config == other.config
            and np.array_equal(self.flat(), other.flat())
        )


def init_params(config: DenoiserConfig, seed: int) -> DenoiserParams:
    """Linear weights ~ N(0, 1/fan_in), embeddings ~ N(0, 1/d), biases 0, BN scale 1."""
    rng = np.random.default_rng(seed)
    weights = {}
    for name, shape in param_spec(config):
        leaf = name.rsplit(".", 1)[-1]
        if name == "emb":
            weights[name] = rng.standard_normal(shape) / np.sqrt(config.d)
        elif name == "edge_in.w":
            weights[name] = rng.standard_normal(shape)
        elif name == "head.w2":
            weights[name] = rng.standard_normal(shape) / np.sqrt(config.d)
        elif leaf == "gamma":
            weights[name] = np.ones(shape)
        elif len(shape) == 2:
            weights[name] = rng.standard_normal(shape) / np.sqrt(shape[0])
        else:
            weights[name] = np.zeros(shape)
    buffers = {
        name: (np.ones(shape) if name.endswith(".var") else np.zeros(shape))
        for name, shape in buffer_spec(config)
    }
    return DenoiserParams(config, weights, buffers)


def timestep_features(t, time_dim: int) -> np.ndarray:
    """Interleaved ``[sin(t f_0), cos(t f_0), sin(t f_1), ...]``.

    Frequencies are geometric from 1 down to 1e-4 (base 10,000).
    Accepts a scalar or an array of steps; returns ``(..., time_dim)``.
    """
    if time_dim % 2:
        raise ValueError("time_dim must be even")
    t = np.asarray(t, dtype=np.float64)
    if np.any(t < 0):
        raise ValueError("t must be non-negative")
    half = time_dim // 2
    if half == 1:
        freqs = np.ones(1)
    else:
        freqs = 10000.0 ** (-np.arange(half) / (half - 1))
    angles = t[..., None] * freqs
    out = np.empty(t.shape + (time_dim,))
    out[..., 0::2] = np.sin(angles)
    out[..., 1::2] = np.cos(angles)
    return out


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def _mm(x, w):
    """``x @ w`` over the last axis, flattening leading axes for BLAS."""
    return (x.reshape(-1, x.shape[-1]) @ w).reshape(x.shape[:-1] + (w.shape[-1],))


def _wgrad(x, dy):
    """Weight gradient ``sum over leading axes of x^T dy``."""
    return x.reshape(-1, x.shape[-1]).T @ dy.reshape(-1, dy.shape[-1])


def _bn_forward(a, gamma, beta, mean, var, eps, weight, train):
    """Feature-wise normalization over all leading axes.

    ``weight`` (broadcastable 0/1 mask or None) selects the entries that
    contribute to batch statistics. Returns output, cache, batch stats.
    """
    axes = tuple(range(a.ndim - 1))
    if train:
        if weight is None:
            n = np.prod(a.shape[:-1])
            mu = a.mean(axis=axes)
            var_b = ((a - mu) ** 2).mean(axis=axes)
        else:
            n = np.broadcast_to(weight, a.shape[:-1] + (1,)).sum()
            mu = (weight * a).sum(axis=axes) / n
            var_b = (weight * (a - mu) ** 2).sum(axis=axes) / n
        inv = 1.0 / np.sqrt(var_b + eps)
        xhat = (a - mu) * inv
        stats = (mu, var_b, n)
    else:
        inv = 1.0 / np.sqrt(var + eps)
        xhat = (a - mean) * inv
        stats = None
    return gamma * xhat + beta, (xhat, inv, weight, train), stats


def _bn_backward(dy, gamma, cache):
    xhat, inv, weight, train = cache
    axes = tuple(range(dy.ndim - 1))
    dgamma = (dy * xhat).sum(axis=axes)
    dbeta = dy.sum(axis=axes)
    dxhat = dy * gamma
    if not train:
        return dxhat * inv, dgamma, dbeta
    if weight is None:
        m1 = dxhat.mean(axis=axes)
        m2 = (dxhat * xhat).mean(axis=axes)
        da = inv * (dxhat - m1 - xhat * m2)
    else:
        n = np.broadcast_to(weight, dy.shape[:-1] + (1,)).sum()
        m1 = (weight * dxhat).sum(axis=axes) / n
        m2 = (weight * dxhat * xhat).sum(axis=axes) / n
        da = inv * (dxhat - weight * (m1 + xhat * m2))
    return da, dgamma, dbeta


def forward(params: DenoiserParams, x_t, t, node_ids, train: bool = False):
    """Batched forward pass.

    ``x_t`` is ``(B, m, m)``, ``t`` is ``(B,)``, ``node_ids`` is ``(B, m)``.
    Returns ``(eps_hat, cache, batch_stats)``; ``batch_stats`` maps buffer
    names to running-statistic updates (empty in eval mode).
    """
    cfg = params.config
    W = params.weights
    x = np.asarray(x_t, dtype=np.float64)
    ids = np.asarray(node_ids)
    if x.ndim != 3 or x.shape[1] != x.shape[2]:
        raise ValueError(f"x_t must be (B, m, m), got {x.shape}")
    B, m, _ = x.shape
    if ids.shape != (B, m):
        raise ValueError(f"node_ids must have shape {(B, m)}, got {ids.shape}")
    if np.any(ids < 0) or np.any(ids >= cfg.n_nodes_total):
        raise ValueError("node id outside the embedding table")
    t = np.broadcast_to(np.asarray(t), (B,))

    mask = 1.0 - np.eye(m)
    emask = mask[None, :, :, None]
    tf = timestep_features(t, cfg.time_dim)

    h = W["emb"][ids]
    e = x[..., None] * W["edge_in.w"] + W["edge_in.b"]
    layers = []
    stats = {}
    for l in range(cfg.n_layers):
        p = f"layer{l}."
        bufs = params.buffers
        a = _mm(e, W[p + "P"]) + _mm(h, W[p + "Q"])[:, :, None, :] + _mm(h, W[p + "R"])[:, None, :, :]
        ye, bn_e, st_e = _bn_forward(
            a, W[p + "bn_e.gamma"], W[p + "bn_e.beta"],
            bufs.get(p + "bn_e.mean"), bufs.get(p + "bn_e.var"), cfg.bn_eps, emask, train,
        )
        z1 = _mm(ye, W[p + "mlp_e.w1"]) + W[p + "mlp_e.b1"]
        r1 = np.maximum(z1, 0.0)
        me = _mm(r1, W[p + "mlp_e.w2"]) + W[p + "mlp_e.b2"]
        tz = tf @ W[p + "mlp_t.w1"] + W[p + "mlp_t.b1"]
        tr = np.maximum(tz, 0.0)
        mt = tr @ W[p + "mlp_t.w2"] + W[p + "mlp_t.b2"]
        e_new = e + me + mt[:, None, None, :]

        sig = _sigmoid(a)
        gate = sig * emask
        vh = _mm(h, W[p + "V"])
        agg = (gate * vh[:, None, :, :]).sum(axis=2)
        u = _mm(h, W[p + "U"]) + agg
        yh, bn_h, st_h = _bn_forward(
            u, W[p + "bn_h.gamma"], W[p + "bn_h.beta"],
            bufs.get(p + "bn_h.mean"), bufs.get(p + "bn_h.var"), cfg.bn_eps, None, train,
        )
        h_new = h + np.maximum(yh, 0.0)
        layers.append(dict(e=e, h=h, a=a, ye=ye, bn_e=bn_e, z1=z1, r1=r1, tz=tz, tr=tr,
                           sig=sig, gate=gate, vh=vh, yh=yh, bn_h=bn_h))
        if train:
            for bn, (mu, var_b, n) in (("bn_e", st_e), ("bn_h", st_h)):
                unbiased = var_b * n / max(n - 1, 1)
                mom = cfg.bn_momentum
                stats[p + bn + ".mean"] = (1 - mom) * bufs[p + bn + ".mean"] + mom * mu
                stats[p + bn + ".var"] = (1 - mom) * bufs[p + bn + ".var"] + mom * unbiased
        e, h = e_new, h_new

    r = np.maximum(e, 0.0)
    o1 = _mm(r, W["head.w1"]) + W["head.b1"]
    o1r = np.maximum(o1, 0.0)
    o = o1r @ W["head.w2"] + W["head.b2"][0]
    out = 0.5 * (o + np.swapaxes(o, 1, 2)) * mask
    cache = dict(x=x, ids=ids, tf=tf, mask=mask, emask=emask, layers=layers, eL=e, r=r, o1=o1, o1r=o1r)
    return out, cache, stats


def backward(params: DenoiserParams, cache, dout) -> dict[str, np.ndarray]:
    """Gradients of a scalar loss given ``dout = dL/d eps_hat`` (train-mode cache)."""
    cfg = params.config
    W = params.weights
    g = {name: np.zeros(shape) for name, shape in param_spec(cfg)}
    mask, emask = cache["mask"], cache["emask"]

    dm = np.asarray(dout) * mask
    do = 0.5 * (dm + np.swapaxes(dm, 1, 2))
    o1r, o1, r = cache["o1r"], cache["o1"], cache["r"]
    g["head.w2"] = np.einsum("bijd,bij->d", o1r, do)
    g["head.b2"] = np.array([do.sum()])
    do1 = do[..., None] * W["head.w2"] * (o1 > 0)
    g["head.w1"] = _wgrad(r, do1)
    g["head.b1"] = do1.sum(axis=(0, 1, 2))
    de = _mm(do1, W["head.w1"].T) * (cache["eL"] > 0)
    dh = np.zeros_like(cache["layers"][0]["h"]) if cache["layers"] else None

    for l in reversed(range(cfg.n_layers)):
        p = f"layer{l}."
        c = cache["layers"][l]
        h, e, a = c["h"], c["e"], c["a"]
        # node stream
        dyh = dh * (c["yh"] > 0)
        du, g[p + "bn_h.gamma"], g[p + "bn_h.beta"] = _bn_backward(dyh, W[p + "bn_h.gamma"], c["bn_h"])
        g[p + "U"] = _wgrad(h, du)
        dh_prev = dh + _mm(du, W[p + "U"].T)
        gate, vh = c["gate"], c["vh"]
        dgate = du[:, :, None, :] * vh[:, None, :, :]
        dvh = (gate * du[:, :, None, :]).sum(axis=1)
        g[p + "V"] = _wgrad(h, dvh)
        dh_prev += _mm(dvh, W[p + "V"].T)
        da = dgate * gate * (1.0 - c["sig"])
        # edge stream
        dmt = de.sum(axis=(1, 2))
        g[p + "mlp_t.w2"] = c["tr"].T @ dmt
        g[p + "mlp_t.b2"] = dmt.sum(axis=0)
        dtz = (dmt @ W[p + "mlp_t.w2"].T) * (c["tz"] > 0)
        g[p + "mlp_t.w1"] = cache["tf"].T @ dtz
        g[p + "mlp_t.b1"] = dtz.sum(axis=0)
        g[p + "mlp_e.w2"] = _wgrad(c["r1"], de)
        g[p + "mlp_e.b2"] = de.sum(axis=(0, 1, 2))
        dz1 = _mm(de, W[p + "mlp_e.w2"].T) * (c["z1"] > 0)
        g[p + "mlp_e.w1"] = _wgrad(c["ye"], dz1)
        g[p + "mlp_e.b1"] = dz1.sum(axis=(0, 1, 2))
        dye = _mm(dz1, W[p + "mlp_e.w1"].T)
        da_bn, g[p + "bn_e.gamma"], g[p + "bn_e.beta"] = _bn_backward(dye, W[p + "bn_e.gamma"], c["bn_e"])
        da = da + da_bn
        g[p + "P"] = _wgrad(e, da)
        de = de + _mm(da, W[p + "P"].T)
        dhq = da.sum(axis=2)
        dhr = da.sum(axis=1)
        g[p + "Q"] = _wgrad(h, dhq)
        g[p + "R"] = _wgrad(h, dhr)
        dh = dh_prev + _mm(dhq, W[p + "Q"].T) + _mm(dhr, W[p + "R"].T)

    x = cache["x"]
    g["edge_in.w"] = (de * x[..., None]).sum(axis=(0, 1, 2))
    g["edge_in.b"] = de.sum(axis=(0, 1, 2))
    if dh is None:
        dh = np.zeros(cache["ids"].shape + (cfg.d,))
    np.add.at(g["emb"], cache["ids"].ravel(), dh.reshape(-1, cfg.d))
    return g


def predict_noise(x_t, t, node_ids, params: DenoiserParams, mode: str = "eval") -> np.ndarray:
    """Noise estimate for one ``(m, m)`` matrix or a ``(B, m, m)`` batch.

    ``mode="train"`` normalizes with batch statistics (running statistics are
    not updated); ``mode="eval"`` uses the stored running statistics.
    """
    if mode not in ("train", "eval"):
        raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
    x = np.asarray(x_t, dtype=np.float64)
    ids = np.asarray(node_ids)
    single = x.ndim == 2
    if single:
        x, ids = x[None], ids[None]
        t = np.asarray(t).reshape(1)
    out, _, _ = forward(params, x, t, ids, train=(mode == "train"))
    return out[0] if single else out
