"""Balanced hub/non-hub subgraph sampling and dataset persistence."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .graph import HeteroGraph, hub_partition
from .ingest import FormatError, format_manifest, parse_manifest, write_bytes_atomic, write_text_atomic

DATASET_FORMAT_VERSION = "1"

# rows of the subgraph composition table: nodes per subgraph -> (train, test)
REFERENCE_DATASET_SIZES = {25: (256_000, 256), 50: (128_000, 128), 100: (64_000, 64), 200: (32_000, 32)}


@dataclass
class Subgraph:
    node_ids: np.ndarray  # (m,) int64
    x0: np.ndarray  # (m, m) float64, symmetric, zero diagonal

    @property
    def m(self) -> int:
        return len(self.node_ids)

    def __eq__(self, other):
        return (
            isinstance(other, Subgraph)
            and np.array_equal(self.node_ids, other.node_ids)
            and np.array_equal(self.x0, other.x0)
        )


@dataclass
class SubgraphDataset:
    m: int
    train: list[Subgraph]
    validation: list[Subgraph]
    seed: int
    graph_hash: str = ""

    def __eq__(self, other):
        return (
            isinstance(other, SubgraphDataset)
            and (self.m, self.seed, self.graph_hash) == (other.m, other.seed, other.graph_hash)
            and self.train == other.train
            and self.validation == other.validation
        )


def edge_matrix(g: HeteroGraph, node_ids) -> np.ndarray:
    """Symmetric matrix of graph weights among ``node_ids`` (0 where no edge)."""
    ids = [int(i) for i in node_ids]
    m = len(ids)
    x = np.zeros((m, m))
    for a in range(m):
        nbrs = g.neighbors[ids[a]]
        for b in range(a + 1, m):
            w = nbrs.get(ids[b], 0.0)
            x[a, b] = w
            x[b, a] = w
    return x


class _Pools:
    def __init__(self, g: HeteroGraph):
        hubs, non_hubs = hub_partition(g)
        self.hubs = np.array(sorted(hubs), dtype=np.int64)
        self.non_hubs = np.array(sorted(non_hubs), dtype=np.int64)


def sample_balanced_subgraph(g: HeteroGraph, m: int, rng: np.random.Generator, _pools=None) -> Subgraph:
    """Draw ``ceil(m/2)`` hub and ``floor(m/2)`` non-hub ingredients uniformly.

    Hubs come first in ``node_ids``, each class in draw order.
    """
    if m < 2:
        raise ValueError("m must be >= 2")
    pools = _pools or _Pools(g)
    n_hub, n_non = (m + 1) // 2, m // 2
    if len(pools.hubs) < n_hub:
        raise ValueError(f"need {n_hub} hub ingredients, graph has {len(pools.hubs)}")
    if len(pools.non_hubs) < n_non:
        raise ValueError(f"need {n_non} non-hub ingredients, graph has {len(pools.non_hubs)}")
    ids = np.concatenate(
        [
            rng.choice(pools.hubs, size=n_hub, replace=False),
            rng.choice(pools.non_hubs, size=n_non, replace=False),
        ]
    ).astype(np.int64)
    return Subgraph(ids, edge_matrix(g, ids))


def build_dataset(
    g: HeteroGraph,
    m: int,
    n_train: int,
    n_val: int,
    seed: int,
    threads: int = 1,
    graph_hash: str = "",
) -> SubgraphDataset:
    """Sample train and validation subgraphs.

    Sample ``k`` of split ``s`` (0 train, 1 validation) uses its own generator
    seeded by ``(seed, s, k)``, so results do not depend on ``threads``.
    """
    if n_train < 1 or n_val < 1:
        raise ValueError("n_train and n_val must be >= 1")
    pools = _Pools(g)

    def draw(key):
        return sample_balanced_subgraph(g, m, np.random.default_rng([seed, *key]), pools)

    keys_train = [(0, k) for k in range(n_train)]
    keys_val = [(1, k) for k in range(n_val)]
    if threads > 1:
        with ThreadPoolExecutor(threads) as ex:
            train = list(ex.map(draw, keys_train))
            val = list(ex.map(draw, keys_val))
    else:
        train = [draw(k) for k in keys_train]
        val = [draw(k) for k in keys_val]
    return SubgraphDataset(m, train, val, seed, graph_hash)


def _pack(samples: list[Subgraph]) -> tuple[bytes, bytes]:
    ids = np.stack([s.node_ids for s in samples]).astype("<i8")
    x0 = np.stack([s.x0 for s in samples]).astype("<f8")
    return ids.tobytes(), x0.tobytes()


def write_dataset(ds: SubgraphDataset, directory) -> None:
    """Packed layout: ``{split}_ids.bin`` (int64 LE, n*m) and ``{split}_x0.bin``
    (float64 LE, n*m*m, row-major) plus ``manifest.txt``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for split, samples in (("train", ds.train), ("validation", ds.validation)):
        ids, x0 = _pack(samples)
        write_bytes_atomic(directory / f"{split}_ids.bin", ids)
        write_bytes_atomic(directory / f"{split}_x0.bin", x0)
    manifest = {
        "format_version": DATASET_FORMAT_VERSION,
        "m": ds.m,
        "n_train": len(ds.train),
        "n_validation": len(ds.validation),
        "seed": ds.seed,
        "graph_sha256": ds.graph_hash,
    }
    write_text_atomic(directory / "manifest.txt", format_manifest(manifest))


def read_dataset(directory) -> SubgraphDataset:
    directory = Path(directory)
    if not (directory / "manifest.txt").is_file():
        raise FormatError(f"{directory}: missing manifest.txt")
    man = parse_manifest((directory / "manifest.txt").read_text(encoding="utf-8"))
    if man.get("format_version") != DATASET_FORMAT_VERSION:
        raise FormatError(f"{directory}: unsupported dataset format {man.get('format_version')!r}")
    m = int(man["m"])
    splits = {}
    for split, key in (("train", "n_train"), ("validation", "n_validation")):
        n = int(man[key])
        try:
            ids = np.fromfile(directory / f"{split}_ids.bin", dtype="<i8")
            x0 = np.fromfile(directory / f"{split}_x0.bin", dtype="<f8")
        except FileNotFoundError as exc:
            raise FormatError(f"{directory}: missing {split} block") from exc
        if ids.size != n * m or x0.size != n * m * m:
            raise FormatError(f"{directory}: truncated {split} block")
        ids = ids.reshape(n, m).astype(np.int64)
        x0 = x0.reshape(n, m, m).astype(np.float64)
        splits[split] = [Subgraph(ids[k].copy(), x0[k].copy()) for k in range(n)]
    return SubgraphDataset(m, splits["train"], splits["validation"], int(man["seed"]), man.get("graph_sha256", ""))
