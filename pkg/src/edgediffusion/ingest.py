"""Text file formats: recipe corpora, associations, fingerprints, categories, graphs.

All formats are UTF-8 TSV with ``\\n`` line endings and no header.
"""

from __future__ import annotations

import hashlib
import os
from pathlib import Path

import numpy as np

from .graph import CorpusStats, Edge, HeteroGraph, Node, NodeKind

FINGERPRINT_BITS = 881
GRAPH_FORMAT_VERSION = "1"


class FormatError(ValueError):
    """Raised for malformed or inconsistent input files."""


def _read_lines(path) -> list[str]:
    path = Path(path)
    with open(path, "r", encoding="utf-8", newline="") as fh:
        text = fh.read()
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    return lines


def _check_field(value: str, what: str):
    if not value or "\t" in value or "\n" in value or "\r" in value:
        raise FormatError(f"invalid {what}: {value!r}")


def parse_recipe_corpus(path) -> CorpusStats:
    """Read one recipe per line, ingredient names separated by tabs.

    Duplicate ingredients within a recipe count once; blank lines are
    skipped and tallied in ``CorpusStats.skipped_empty``.
    """
    recipes = []
    skipped = 0
    for lineno, line in enumerate(_read_lines(path), start=1):
        if line.strip() == "":
            skipped += 1
            continue
        fields = line.split("\t")
        if any(f == "" or f != f.strip() for f in fields):
            raise FormatError(f"{path}: line {lineno}: malformed recipe {line!r}")
        recipes.append(fields)
    if not recipes:
        raise FormatError(f"{path}: no recipes")
    stats = CorpusStats.from_recipes(recipes)
    stats.skipped_empty = skipped
    return stats


def _parse_pairs(path, what: str) -> list[tuple[str, str]]:
    rows = []
    for lineno, line in enumerate(_read_lines(path), start=1):
        fields = line.split("\t")
        if len(fields) != 2 or not all(fields):
            raise FormatError(f"{path}: line {lineno}: expected '<name>\\t<{what}>'")
        rows.append((fields[0], fields[1]))
    return rows


def parse_associations(path) -> list[tuple[str, str]]:
    """Rows of ``ingredient<TAB>compound``; duplicates are kept for the builder to count."""
    return _parse_pairs(path, "compound")


def parse_categories(path) -> dict[str, str]:
    out: dict[str, str] = {}
    for name, cat in _parse_pairs(path, "category"):
        if name in out and out[name] != cat:
            raise FormatError(f"{path}: conflicting categories for {name!r}")
        out[name] = cat
    return out


def parse_fingerprints(path) -> dict[str, np.ndarray]:
    out: dict[str, np.ndarray] = {}
    for lineno, line in enumerate(_read_lines(path), start=1):
        fields = line.split("\t")
        if len(fields) != 2 or not fields[0]:
            raise FormatError(f"{path}: line {lineno}: expected '<name>\\t<bits>'")
        name, bits = fields
        if len(bits) != FINGERPRINT_BITS:
            raise FormatError(
                f"{path}: line {lineno}: fingerprint {name!r} has {len(bits)} bits, "
                f"expected {FINGERPRINT_BITS}"
            )
        if name in out:
            raise FormatError(f"{path}: line {lineno}: duplicate fingerprint {name!r}")
        arr = np.frombuffer(bits.encode("ascii", errors="replace"), dtype=np.uint8) - ord("0")
        if np.any(arr > 1):
            raise FormatError(f"{path}: line {lineno}: fingerprint {name!r} is not binary")
        out[name] = arr.astype(np.uint8)
    return out


def format_fingerprint(bits: np.ndarray) -> str:
    bits = np.asarray(bits)
    if bits.shape != (FINGERPRINT_BITS,):
        raise ValueError(f"fingerprint must have {FINGERPRINT_BITS} bits")
    return "".join("1" if b else "0" for b in bits)


def write_text_atomic(path, text: str):
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
    os.replace(tmp, path)


def write_bytes_atomic(path, data: bytes):
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(data)
    os.replace(tmp, path)


def file_sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def format_manifest(items: dict) -> str:
    lines = []
    for key, value in items.items():
        value = str(value)
        if "\n" in value or "=" in key:
            raise ValueError(f"cannot serialize manifest entry {key!r}")
        lines.append(f"{key}={value}\n")
    return "".join(lines)


def parse_manifest(text: str) -> dict[str, str]:
    out = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise FormatError(f"manifest line {lineno}: expected key=value")
        out[key] = value
    return out


def write_graph(g: HeteroGraph, directory) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    node_lines = []
    for n in g.nodes:
        _check_field(n.name, "node name")
        if n.category is not None:
            _check_field(n.category, "category")
        node_lines.append(f"{n.id}\t{n.name}\t{n.kind.value}\t{n.category or ''}\n")
    edge_lines = [f"{e.a}\t{e.b}\t{e.weight!r}\n" for e in g.edges]
    write_text_atomic(directory / "nodes.tsv", "".join(node_lines))
    write_text_atomic(directory / "edges.tsv", "".join(edge_lines))
    manifest = {
        "format_version": GRAPH_FORMAT_VERSION,
        "n_nodes": len(g.nodes),
        "n_edges": len(g.edges),
        "nodes_sha256": file_sha256(directory / "nodes.tsv"),
        "edges_sha256": file_sha256(directory / "edges.tsv"),
    }
    for key, value in sorted(g.meta.items()):
        manifest[f"meta.{key}"] = value
    write_text_atomic(directory / "manifest.txt", format_manifest(manifest))


def graph_hash(directory) -> str:
    """Content hash of a graph directory (nodes and edges files)."""
    directory = Path(directory)
    h = hashlib.sha256()
    h.update(file_sha256(directory / "nodes.tsv").encode())
    h.update(file_sha256(directory / "edges.tsv").encode())
    return h.hexdigest()


def read_graph(directory) -> HeteroGraph:
    directory = Path(directory)
    for name in ("manifest.txt", "nodes.tsv", "edges.tsv"):
        if not (directory / name).is_file():
            raise FormatError(f"{directory}: missing {name}")
    manifest = parse_manifest((directory / "manifest.txt").read_text(encoding="utf-8"))
    version = manifest.get("format_version")
    if version != GRAPH_FORMAT_VERSION:
        raise FormatError(f"{directory}: unsupported graph format version {version!r}")

    kinds = {k.value: k for k in NodeKind}
    nodes = []
    node_lines = _read_lines(directory / "nodes.tsv")
    for lineno, line in enumerate(node_lines, start=1):
        fields = line.split("\t")
        if len(fields) != 4 or fields[2] not in kinds:
            raise FormatError(f"{directory}/nodes.tsv: line {lineno}: malformed node row")
        nodes.append(Node(int(fields[0]), fields[1], kinds[fields[2]], fields[3] or None))
    edges = []
    edge_lines = _read_lines(directory / "edges.tsv")
    for lineno, line in enumerate(edge_lines, start=1):
        fields = line.split("\t")
        if len(fields) != 3:
            raise FormatError(f"{directory}/edges.tsv: line {lineno}: malformed edge row")
        edges.append(Edge(int(fields[0]), int(fields[1]), float(fields[2])))
    if len(nodes) != int(manifest["n_nodes"]) or len(edges) != int(manifest["n_edges"]):
        raise FormatError(f"{directory}: truncated graph (row counts differ from manifest)")
    for name in ("nodes", "edges"):
        expected = manifest.get(f"{name}_sha256")
        if expected and expected != file_sha256(directory / f"{name}.tsv"):
            raise FormatError(f"{directory}/{name}.tsv: checksum mismatch")

    meta = {}
    for key, value in manifest.items():
        if key.startswith("meta."):
            meta[key[5:]] = int(value) if value.lstrip("-").isdigit() else value
    return HeteroGraph(nodes, edges, meta)
