import math

import numpy as np
import pytest

from edgediffusion.csp import (
    CLAMP_EPS,
    aggregate_target_fingerprint,
    batch_csp,
    bce_from_logits,
    csp_loss,
    csp_loss_and_grads,
    csp_targets,
)
from edgediffusion.graph import build_hetero_graph
from edgediffusion.ingest import FINGERPRINT_BITS
from edgediffusion.synthetic import synthetic_corpus


def bits(*on):
    out = np.zeros(FINGERPRINT_BITS, dtype=np.uint8)
    out[list(on)] = 1
    return out


@pytest.fixture(scope="module")
def graph():
    recipes = [["A", "B"], ["A", "C"], ["B", "C"]]
    assoc = [("A", "c1"), ("B", "c1"), ("B", "c2"), ("C", "c3")]
    return build_hetero_graph(recipes, flavor_assoc=assoc, min_cooccur=1)


def test_single_neighbor_identity(graph):
    fps = {"c1": bits(1, 5), "c2": bits(3), "c3": bits(880)}
    assert np.array_equal(aggregate_target_fingerprint(graph, fps, graph.node_id("A")), bits(1, 5))


def test_or_of_disjoint_bits(graph):
    fps = {"c1": bits(3), "c2": bits(7)}
    assert np.array_equal(aggregate_target_fingerprint(graph, fps, graph.node_id("B")), bits(3, 7))


def test_no_fingerprinted_neighbor(graph):
    with pytest.raises(ValueError, match="no fingerprinted"):
        aggregate_target_fingerprint(graph, {"c1": bits(0)}, graph.node_id("C"))
    with pytest.raises(ValueError, match="not a hub"):
        aggregate_target_fingerprint(graph, {"c1": bits(0)}, graph.node_id("c1"))
    targets = csp_targets(graph, {"c1": bits(0)})
    assert set(targets) == {graph.node_id("A"), graph.node_id("B")}


def test_or_aggregation_matches_loop_oracle():
    recipes, assoc, fps, _ = synthetic_corpus(40, 10, 300, 4, seed=5)
    g = build_hetero_graph(recipes, flavor_assoc=assoc)
    targets = csp_targets(g, fps)
    neighbors = {}
    for ing, cmp in assoc:
        neighbors.setdefault(ing, set()).add(cmp)
    assert len(targets) == len(neighbors)
    for hub, target in targets.items():
        ref = [0] * FINGERPRINT_BITS
        for c in neighbors[g.nodes[hub].name]:
            for k in range(FINGERPRINT_BITS):
                ref[k] = ref[k] | int(fps[c][k])
        assert target.tolist() == ref


def test_half_probability_loss():
    loss, _ = bce_from_logits(np.zeros(FINGERPRINT_BITS), bits(*range(0, 881, 2)))
    # 881 * ln 2, evaluated with mpmath at 30 digits
    assert float(loss) == pytest.approx(610.662666073311818, abs=1e-9)
    assert float(loss) == pytest.approx(FINGERPRINT_BITS * math.log(2), rel=1e-14)


def test_perfect_and_clamped_predictions():
    y = bits(*range(0, 881, 3)).astype(float)
    logits = np.where(y == 1, 50.0, -50.0)
    loss, grad = bce_from_logits(logits, y)
    assert float(loss) < FINGERPRINT_BITS * 1e-6
    # beyond the clamp the probability is constant, so the gradient vanishes
    assert np.all(grad == 0.0)
    loss, _ = bce_from_logits(np.full(FINGERPRINT_BITS, -math.log(1 / CLAMP_EPS - 1)), np.zeros(FINGERPRINT_BITS))
    assert float(loss) < FINGERPRINT_BITS * 1.01e-7


def test_bce_matches_direct_formula():
    rng = np.random.default_rng(0)
    z = rng.standard_normal(50) * 3
    y = (rng.random(50) < 0.5).astype(float)
    f = 1 / (1 + np.exp(-z))
    ref = -(y * np.log(f) + (1 - y) * np.log(1 - f)).sum()
    loss, grad = bce_from_logits(z, y)
    assert float(loss) == pytest.approx(ref, rel=1e-12)
    assert np.allclose(grad, f - y, atol=1e-15)


def test_csp_gradients_finite_difference():
    rng = np.random.default_rng(1)
    d, k = 5, 12
    emb = rng.standard_normal(d)
    w = rng.standard_normal((d, k))
    b = rng.standard_normal(k)
    y = (rng.random(k) < 0.4).astype(float)
    loss, de, dw, db = csp_loss_and_grads(emb, w, b, y)
    assert loss == pytest.approx(csp_loss(emb, w, b, y), abs=0)
    h = 1e-6
    for arr, grad in ((emb, de), (w, dw), (b, db)):
        for idx in np.ndindex(arr.shape):
            old = arr[idx]
            arr[idx] = old + h
            lp = csp_loss(emb, w, b, y)
            arr[idx] = old - h
            lm = csp_loss(emb, w, b, y)
            arr[idx] = old
            fd = (lp - lm) / (2 * h)
            assert abs(fd - grad[idx]) / max(abs(fd), abs(grad[idx]), 1e-5) < 1e-4


def test_batch_is_mean_of_rows():
    rng = np.random.default_rng(2)
    rows = rng.standard_normal((3, 4))
    w = rng.standard_normal((4, 6))
    b = rng.standard_normal(6)
    y = (rng.random((3, 6)) < 0.5).astype(float)
    loss, drows, dw, db = batch_csp(rows, w, b, y)
    singles = [csp_loss_and_grads(rows[i], w, b, y[i]) for i in range(3)]
    assert loss == pytest.approx(np.mean([s[0] for s in singles]), rel=1e-14)
    assert np.allclose(drows, np.stack([s[1] for s in singles]) / 3, atol=1e-15)
    assert np.allclose(dw, sum(s[2] for s in singles) / 3, atol=1e-15)
    assert np.allclose(db, sum(s[3] for s in singles) / 3, atol=1e-15)
