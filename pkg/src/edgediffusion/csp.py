"""Chemical structure prediction: fingerprint targets and the binary cross-entropy head."""

from __future__ import annotations

from typing import Mapping

import numpy as np

from .graph import HeteroGraph, NodeKind

CLAMP_EPS = 1e-7


def aggregate_target_fingerprint(g: HeteroGraph, fingerprints: Mapping[str, np.ndarray], hub_id: int) -> np.ndarray:
    """Bitwise OR of the fingerprints of a hub's compound neighbors."""
    if g.nodes[hub_id].kind is not NodeKind.HUB_INGREDIENT:
        raise ValueError(f"node {hub_id} ({g.nodes[hub_id].name!r}) is not a hub ingredient")
    fps = [fingerprints[g.nodes[j].name] for j in g.compound_neighbors(hub_id) if g.nodes[j].name in fingerprints]
    if not fps:
        raise ValueError(f"hub {g.nodes[hub_id].name!r} has no fingerprinted compound neighbor")
    out = np.zeros_like(np.asarray(fps[0], dtype=np.uint8))
    for fp in fps:
        out |= np.asarray(fp, dtype=np.uint8)
    return out


def csp_targets(g: HeteroGraph, fingerprints: Mapping[str, np.ndarray]) -> dict[int, np.ndarray]:
    """Targets for every hub with at least one fingerprinted neighbor."""
    out = {}
    for node in g.nodes:
        if node.kind is NodeKind.HUB_INGREDIENT and any(
            g.nodes[j].name in fingerprints for j in g.compound_neighbors(node.id)
        ):
            out[node.id] = aggregate_target_fingerprint(g, fingerprints, node.id)
    return out


def bce_from_logits(logits, target):
    """Summed clamped binary cross-entropy over the last axis and its logit gradient."""
    logits = np.asarray(logits, dtype=np.float64)
    y = np.asarray(target, dtype=np.float64)
    raw = 0.5 * (1.0 + np.tanh(0.5 * logits))
    f = np.clip(raw, CLAMP_EPS, 1.0 - CLAMP_EPS)
    loss = -(y * np.log(f) + (1.0 - y) * np.log1p(-f)).sum(axis=-1)
    inside = (raw > CLAMP_EPS) & (raw < 1.0 - CLAMP_EPS)
    dlogits = np.where(inside, f - y, 0.0)
    return loss, dlogits


def csp_loss(embedding, w, b, target) -> float:
    """Cross-entropy of fingerprint bits predicted as ``sigmoid(embedding @ w + b)``."""
    loss, _ = bce_from_logits(np.asarray(embedding) @ w + b, target)
    return float(loss)


def csp_loss_and_grads(embedding, w, b, target):
    """``(loss, d_embedding, d_w, d_b)`` for a single embedding."""
    embedding = np.asarray(embedding, dtype=np.float64)
    loss, dz = bce_from_logits(embedding @ w + b, target)
    return float(loss), w @ dz, np.outer(embedding, dz), dz


def batch_csp(emb_rows, w, b, targets):
    """Mean CSP loss over rows; returns ``(loss, d_rows, d_w, d_b)``."""
    n = len(emb_rows)
    losses, dz = bce_from_logits(emb_rows @ w + b, targets)
    dz = dz / n
    return float(losses.mean()), dz @ w.T, emb_rows.T @ dz, dz.sum(axis=0)
