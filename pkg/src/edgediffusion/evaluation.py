"""Clustering NMI, cross-size generalization MSE and embedding projection."""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from typing import Mapping, Sequence

import numpy as np

from .graph import HeteroGraph, NodeKind
from .training import Checkpoint, evaluate_mse

# Reference rows (mean, std) of the published NMI comparison; full-scale data only.
REFERENCE_NMI = {
    "FlavorGraph": (0.2995, 0.0403),
    "FlavorGraph+CSP": (0.3102, 0.0407),
    "diffusion (25 nodes)": (0.2167, 0.0319),
    "diffusion (50 nodes)": (0.3236, 0.0134),
    "diffusion (100 nodes)": (0.3170, 0.0207),
    "diffusion (200 nodes)": (0.2935, 0.0300),
    "diffusion+CSP (25 nodes)": (0.2970, 0.0144),
    "diffusion+CSP (50 nodes)": (0.2862, 0.0152),
    "diffusion+CSP (100 nodes)": (0.3169, 0.0257),
    "diffusion+CSP (200 nodes)": (0.3410, 0.0150),
}

# Published validation MSE, rows = train size, columns = test size (25, 50, 100, 200).
REFERENCE_GENERALIZATION = {
    25: (0.004589, 0.010965, 0.025078, 0.019477),
    50: (0.025235, 0.005884, 0.004420, 0.004123),
    100: (0.003964, 0.003678, 0.004232, 0.003953),
    200: (0.059557, 0.007837, 0.003992, 0.003692),
}


@dataclass
class NmiReport:
    mean: float
    std: float
    repeats: int
    k: int
    n_items: int = 0
    scores: tuple[float, ...] = ()

    def to_text(self) -> str:
        return (
            f"nmi_mean={self.mean!r}\nnmi_std={self.std!r}\nrepeats={self.repeats}\n"
            f"k={self.k}\nn_items={self.n_items}\n"
        )

    def to_json(self) -> str:
        d = asdict(self)
        d["scores"] = list(self.scores)
        return json.dumps(d, indent=2) + "\n"


@dataclass
class GeneralizationMatrix:
    train_sizes: list[int]
    test_sizes: list[int]
    mse: np.ndarray

    def to_tsv(self) -> str:
        """Rows per training size, one column per test size."""
        header = "Train Size\t" + "\t".join(f"Test ({m})" for m in self.test_sizes) + "\n"
        rows = [
            f"{tr}\t" + "\t".join(repr(float(v)) for v in self.mse[i]) + "\n"
            for i, tr in enumerate(self.train_sizes)
        ]
        return header + "".join(rows)

    def to_json(self) -> str:
        return json.dumps(
            {"train_sizes": self.train_sizes, "test_sizes": self.test_sizes, "mse": self.mse.tolist()},
            indent=2,
        ) + "\n"


def _sq_dists(x, centers):
    return ((x[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)


def kmeans_cluster(vectors, k: int, max_iters: int = 100, seed: int = 0, return_history: bool = False):
    """Lloyd's algorithm with k-means++ seeding.

    An emptied cluster is re-seeded at the point farthest from its center.
    With ``return_history`` also returns the inertia after every iteration.
    """
    x = np.asarray(vectors, dtype=np.float64)
    n = len(x)
    if k < 1:
        raise ValueError("k must be >= 1")
    if k > n:
        raise ValueError(f"k={k} exceeds the number of vectors ({n})")
    if not np.all(np.isfinite(x)):
        raise ValueError("vectors must be finite")
    rng = np.random.default_rng(seed)

    centers = np.empty((k, x.shape[1]))
    centers[0] = x[rng.integers(n)]
    closest = _sq_dists(x, centers[:1]).min(axis=1)
    for c in range(1, k):
        total = closest.sum()
        if total > 0:
            idx = int(rng.choice(n, p=closest / total))
        else:
            idx = int(rng.integers(n))
        centers[c] = x[idx]
        closest = np.minimum(closest, _sq_dists(x, centers[c:c + 1])[:, 0])

    labels = _sq_dists(x, centers).argmin(axis=1)
    history = []
    for _ in range(max_iters):
        for c in range(k):
            members = labels == c
            if members.any():
                centers[c] = x[members].mean(axis=0)
            else:
                d = _sq_dists(x, centers)[np.arange(n), labels]
                far = int(d.argmax())
                centers[c] = x[far]
                labels[far] = c
        d = _sq_dists(x, centers)
        new_labels = d.argmin(axis=1)
        history.append(float(d[np.arange(n), new_labels].sum()))
        if np.array_equal(new_labels, labels):
            break
        labels = new_labels
    return (labels, history) if return_history else labels


def inertia(vectors, labels) -> float:
    x = np.asarray(vectors, dtype=np.float64)
    labels = np.asarray(labels)
    return float(sum(((x[labels == c] - x[labels == c].mean(axis=0)) ** 2).sum() for c in np.unique(labels)))


def _entropy(counts):
    p = counts[counts > 0] / counts.sum()
    return float(-(p * np.log(p)).sum())


def nmi_score(labels_a, labels_b) -> float:
    """Mutual information over the arithmetic mean of the two entropies.

    Defined as 0 when either labeling has zero entropy.
    """
    a = np.asarray(labels_a)
    b = np.asarray(labels_b)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError("label arrays must be 1-D with equal length")
    if a.size == 0:
        raise ValueError("labels must be non-empty")
    _, ia = np.unique(a, return_inverse=True)
    _, ib = np.unique(b, return_inverse=True)
    joint = np.zeros((ia.max() + 1, ib.max() + 1))
    np.add.at(joint, (ia, ib), 1.0)
    h_a = _entropy(joint.sum(axis=1))
    h_b = _entropy(joint.sum(axis=0))
    if h_a == 0.0 or h_b == 0.0:
        return 0.0
    n = a.size
    pa = joint.sum(axis=1, keepdims=True) / n
    pb = joint.sum(axis=0, keepdims=True) / n
    pj = joint / n
    nz = pj > 0
    mi = float((pj[nz] * np.log(pj[nz] / (pa @ pb)[nz])).sum())
    return float(min(1.0, max(0.0, mi / ((h_a + h_b) / 2.0))))


def evaluated_hubs(g: HeteroGraph, top_n: int | None = None) -> list[int]:
    """Hub ingredient ids, optionally the ``top_n`` by degree (ties by id)."""
    hubs = [n.id for n in g.nodes if n.kind is NodeKind.HUB_INGREDIENT]
    if top_n is not None:
        hubs = sorted(sorted(hubs, key=lambda i: (-g.degree(i), i))[:top_n])
    return hubs


def nmi_of_embeddings(vectors, labels, k: int, repeats: int = 10, seed: int = 0, threads: int = 1) -> NmiReport:
    vectors = np.asarray(vectors, dtype=np.float64)
    if len(vectors) < k:
        raise ValueError(f"{len(vectors)} items is fewer than k={k}")

    def one(r):
        return nmi_score(labels, kmeans_cluster(vectors, k, seed=int(np.random.SeedSequence([seed, r]).generate_state(1)[0])))

    if threads > 1:
        with ThreadPoolExecutor(threads) as ex:
            scores = list(ex.map(one, range(repeats)))
    else:
        scores = [one(r) for r in range(repeats)]
    return NmiReport(float(np.mean(scores)), float(np.std(scores)), repeats, k, len(vectors), tuple(scores))


def nmi_protocol(
    ckpt: Checkpoint,
    g: HeteroGraph,
    categories: Mapping[str, str],
    k: int = 9,
    repeats: int = 10,
    seed: int = 0,
    top_n: int | None = None,
    threads: int = 1,
) -> NmiReport:
    """Cluster hub-ingredient embedding rows and score them against categories."""
    if ckpt.config.n_nodes_total != g.n_nodes:
        raise ValueError("checkpoint embedding table does not match the graph")
    hubs = evaluated_hubs(g, top_n)
    missing = [g.nodes[i].name for i in hubs if g.nodes[i].name not in categories]
    if missing:
        raise ValueError(f"category file does not cover hub ingredients: {missing[:5]}")
    if len(hubs) < k:
        raise ValueError(f"only {len(hubs)} hub ingredients for k={k}")
    labels = [categories[g.nodes[i].name] for i in hubs]
    return nmi_of_embeddings(ckpt.params.weights["emb"][hubs], labels, k, repeats, seed, threads)


def generalization_matrix(
    checkpoints: Mapping[int, Checkpoint] | Sequence[Checkpoint],
    datasets: Mapping[int, Sequence] | Sequence,
    sched=None,
) -> GeneralizationMatrix:
    """Validation MSE of every checkpoint on every test dataset.

    ``checkpoints`` maps train size to checkpoint (or is a list, keyed by the
    recorded training size); ``datasets`` maps test size to a
    ``SubgraphDataset`` (its validation split is used) or a list of subgraphs.
    Each entry uses the checkpoint's own seed, so the diagonal equals the
    recorded final validation MSE when the datasets are the training ones.
    """
    if not isinstance(checkpoints, Mapping):
        checkpoints = {c.record.m: c for c in checkpoints}
    if not isinstance(datasets, Mapping):
        datasets = {d.m: d for d in datasets}
    train_sizes = sorted(checkpoints)
    test_sizes = sorted(datasets)
    mse = np.zeros((len(train_sizes), len(test_sizes)))
    for i, tr in enumerate(train_sizes):
        ck = checkpoints[tr]
        if sched is not None and ck.schedule != sched:
            raise ValueError(f"schedule mismatch for checkpoint trained at m={tr}")
        for j, te in enumerate(test_sizes):
            ds = datasets[te]
            samples = ds.validation if hasattr(ds, "validation") else ds
            mse[i, j] = evaluate_mse(ck.params, ck.schedule, samples, ck.record.seed)
    return GeneralizationMatrix(train_sizes, test_sizes, mse)


def project_2d(vectors) -> np.ndarray:
    """Centered coordinates on the top two principal axes."""
    x = np.asarray(vectors, dtype=np.float64)
    if x.ndim != 2 or len(x) < 2:
        raise ValueError("need at least two vectors")
    xc = x - x.mean(axis=0)
    cov = xc.T @ xc / (len(x) - 1)
    vals, vecs = np.linalg.eigh(cov)
    order = np.argsort(vals)[::-1][:2]
    axes = vecs[:, order]
    if axes.shape[1] < 2:
        axes = np.pad(axes, ((0, 0), (0, 2 - axes.shape[1])))
    coords = xc @ axes
    if np.allclose(xc, 0.0):
        return np.zeros((len(x), 2))
    # deterministic sign: largest-magnitude coordinate of each axis positive
    for c in range(2):
        col = coords[:, c]
        if col.size and col[np.argmax(np.abs(col))] < 0:
            coords[:, c] = -col
    return coords
