"""Command-line pipeline: gen-synth, build-graph, sample, train, reconstruct, eval, export-emb.

Exit status: 0 success, 1 invalid arguments or values, 2 file errors.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import diffusion
from .csp import csp_targets
from .denoiser import DenoiserConfig
from .evaluation import REFERENCE_NMI, generalization_matrix, nmi_protocol, project_2d
from .graph import build_hetero_graph
from .ingest import (
    FINGERPRINT_BITS,
    FormatError,
    file_sha256,
    graph_hash,
    parse_associations,
    parse_categories,
    parse_fingerprints,
    parse_recipe_corpus,
    read_graph,
    write_graph,
    write_text_atomic,
)
from .sampling import build_dataset, edge_matrix, read_dataset, write_dataset
from .synthetic import generate_synthetic_corpus
from .training import (
    OptimizerConfig,
    TrainConfig,
    TrainingDiverged,
    load_checkpoint,
    reconstruct,
    save_checkpoint,
    train,
)

log = logging.getLogger("edgediffusion")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _matrix_tsv(x: np.ndarray) -> str:
    return "".join("\t".join(repr(float(v)) for v in row) + "\n" for row in x)


def _hash_input(path) -> str:
    path = Path(path)
    if path.is_dir():
        h = hashlib.sha256()
        for f in sorted(p for p in path.rglob("*") if p.is_file() and not p.name.startswith("run_manifest")):
            h.update(str(f.relative_to(path)).encode())
            h.update(file_sha256(f).encode())
        return h.hexdigest()
    return file_sha256(path)


def _write_manifest(args, inputs, outputs, started):
    """Record the invocation next to the produced artifact (atomic write)."""
    out = Path(outputs[0])
    target = out / "run_manifest.json" if out.is_dir() else out.with_name(out.name + ".run_manifest.json")
    flags = {k: v for k, v in vars(args).items() if k not in ("func",)}
    record = {
        "command": args.command if args.command != "eval" else f"eval {args.eval_command}",
        "flags": {k: (str(v) if isinstance(v, Path) else v) for k, v in flags.items()},
        "seed": getattr(args, "seed", None),
        "input_sha256": {str(p): _hash_input(p) for p in inputs if p is not None},
        "outputs": [str(p) for p in outputs],
        "wall_time_s": round(time.monotonic() - started, 3),
    }
    write_text_atomic(target, json.dumps(record, indent=2, sort_keys=True, default=str) + "\n")


def cmd_gen_synth(args):
    generate_synthetic_corpus(
        args.out, args.n_ingredients, args.n_compounds, args.n_recipes, args.n_categories, args.seed
    )
    return [], [args.out]


def cmd_build_graph(args):
    stats = parse_recipe_corpus(args.recipes)
    flavor = parse_associations(args.flavor_assoc) if args.flavor_assoc else []
    drug = parse_associations(args.drug_assoc) if args.drug_assoc else []
    cats = parse_categories(args.categories) if args.categories else None
    g = build_hetero_graph(stats, flavor, drug, args.npmi_threshold, args.min_cooccur, cats)
    write_graph(g, args.out)
    log.info("graph: %d nodes, %d edges", g.n_nodes, len(g.edges))
    return [args.recipes, args.flavor_assoc, args.drug_assoc, args.categories], [args.out]


def cmd_sample(args):
    g = read_graph(args.graph)
    ds = build_dataset(g, args.m, args.n_train, args.n_val, args.seed, args.threads, graph_hash(args.graph))
    write_dataset(ds, args.out)
    return [args.graph], [args.out]


DEFAULT_CSP_WEIGHT = 0.1


def _schedule(args):
    return diffusion.make_schedule(args.T, args.beta_start, args.beta_end)


def cmd_train(args):
    ds = read_dataset(args.dataset)
    g = read_graph(args.graph)
    targets = None
    weight = args.csp_weight
    if weight is None:
        weight = DEFAULT_CSP_WEIGHT if args.fingerprints else 0.0
    if weight < 0:
        raise ValueError("--csp-weight must be >= 0")
    if weight > 0:
        if not args.fingerprints:
            raise ValueError("--csp-weight > 0 requires --fingerprints")
        targets = csp_targets(g, parse_fingerprints(args.fingerprints))
    cfg = DenoiserConfig(
        g.n_nodes, args.layers, args.dim, args.dim, args.time_dim,
        FINGERPRINT_BITS if weight > 0 else 0,
    )
    opt = OptimizerConfig(args.lr, args.beta1, args.beta2, args.adam_eps)
    tc = TrainConfig(args.epochs, args.batch_size, args.max_steps, weight)
    try:
        ckpt = train(ds, cfg, _schedule(args), opt, args.seed, tc, targets)
    except TrainingDiverged as exc:
        save_checkpoint(exc.checkpoint, args.out)
        raise ValueError(f"{exc}; last finite state saved to {args.out}") from exc
    save_checkpoint(ckpt, args.out)
    log.info("final validation mse %r", ckpt.record.final_val_mse)
    return [args.dataset, args.graph, args.fingerprints], [args.out]


def cmd_reconstruct(args):
    ckpt = load_checkpoint(args.checkpoint)
    g = read_graph(args.graph)
    if args.nodes:
        names = [n for n in args.nodes.split(",") if n]
        unknown = [n for n in names if n not in {node.name for node in g.nodes}]
        if unknown:
            raise ValueError(f"unknown node names: {unknown}")
        ids = np.array([g.node_id(n) for n in names], dtype=np.int64)
    elif args.dataset:
        ds = read_dataset(args.dataset)
        split = ds.validation if args.split == "validation" else ds.train
        if not 0 <= args.index < len(split):
            raise ValueError(f"--index out of range 0..{len(split) - 1}")
        ids = split[args.index].node_ids
    else:
        raise ValueError("give --nodes or --dataset")
    final, states = reconstruct(ckpt, ids, args.seed, trace=args.trace, steps=args.steps)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_text_atomic(out / "nodes.tsv", "".join(f"{int(i)}\t{g.nodes[int(i)].name}\n" for i in ids))
    write_text_atomic(out / "final.tsv", _matrix_tsv(final))
    write_text_atomic(out / "truth.tsv", _matrix_tsv(edge_matrix(g, ids)))
    if states is not None:
        width = max(3, len(str(len(states) - 1)))
        for k, x in enumerate(states):
            write_text_atomic(out / f"step_{k:0{width}d}.tsv", _matrix_tsv(x))
    return [args.checkpoint, args.graph, args.dataset], [out]


def cmd_eval_nmi(args):
    ckpt = load_checkpoint(args.checkpoint)
    g = read_graph(args.graph)
    cats = parse_categories(args.categories)
    report = nmi_protocol(ckpt, g, cats, args.k, args.repeats, args.seed, args.top_n, args.threads)
    text = report.to_text() + "".join(
        f"reference\t{name}\t{mean!r}\t{std!r}\n" for name, (mean, std) in REFERENCE_NMI.items()
    )
    write_text_atomic(args.out, text)
    outputs = [args.out]
    if args.json:
        write_text_atomic(str(args.out) + ".json", report.to_json())
        outputs.append(Path(str(args.out) + ".json"))
    return [args.checkpoint, args.graph, args.categories], outputs


def cmd_eval_gen(args):
    ckpts = [load_checkpoint(p) for p in args.checkpoint]
    datasets = [read_dataset(p) for p in args.dataset]
    sched = _schedule(args) if args.T is not None else None
    if len({c.record.m for c in ckpts}) != len(ckpts):
        raise ValueError("checkpoints must have distinct training sizes")
    if len({d.m for d in datasets}) != len(datasets):
        raise ValueError("datasets must have distinct subgraph sizes")
    mat = generalization_matrix(ckpts, datasets, sched)
    write_text_atomic(args.out, mat.to_tsv())
    outputs = [args.out]
    if args.json:
        write_text_atomic(str(args.out) + ".json", mat.to_json())
        outputs.append(Path(str(args.out) + ".json"))
    return [*args.checkpoint, *args.dataset], outputs


def cmd_export_emb(args):
    ckpt = load_checkpoint(args.checkpoint)
    g = read_graph(args.graph)
    if ckpt.config.n_nodes_total != g.n_nodes:
        raise ValueError("checkpoint embedding table does not match the graph")
    ids = [n.id for n in g.nodes if (n.kind.is_ingredient or not args.ingredients_only)]
    emb = ckpt.params.weights["emb"][ids]
    xy = project_2d(emb)
    lines = ["id\tname\tkind\tcategory\tx\ty\t" + "\t".join(f"e{k}" for k in range(emb.shape[1])) + "\n"]
    for row, i in enumerate(ids):
        node = g.nodes[i]
        vals = "\t".join(repr(float(v)) for v in emb[row])
        lines.append(
            f"{i}\t{node.name}\t{node.kind.value}\t{node.category or ''}\t"
            f"{float(xy[row, 0])!r}\t{float(xy[row, 1])!r}\t{vals}\n"
        )
    write_text_atomic(args.out, "".join(lines))
    return [args.checkpoint, args.graph], [args.out]


def _add_schedule_flags(p, required_default=True):
    default_T = 20 if required_default else None
    p.add_argument("--T", type=int, default=default_T, help="diffusion steps")
    p.add_argument("--beta-start", type=float, default=1e-2)
    p.add_argument("--beta-end", type=float, default=0.3)


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--threads", type=int, default=1, help="worker threads for parallel sections")
    common.add_argument("--verbose", action="store_true")

    parser = _Parser(prog="edgediffusion", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("gen-synth", parents=[common], help="write a synthetic planted-category corpus")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--n-ingredients", type=int, default=160)
    p.add_argument("--n-compounds", type=int, default=40)
    p.add_argument("--n-recipes", type=int, default=6000)
    p.add_argument("--n-categories", type=int, default=4)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_gen_synth)

    p = sub.add_parser("build-graph", parents=[common], help="build the ingredient/compound graph")
    p.add_argument("--recipes", type=Path, required=True)
    p.add_argument("--flavor-assoc", type=Path)
    p.add_argument("--drug-assoc", type=Path)
    p.add_argument("--categories", type=Path)
    p.add_argument("--npmi-threshold", type=float, default=0.0)
    p.add_argument("--min-cooccur", type=int, default=2)
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=cmd_build_graph)

    p = sub.add_parser("sample", parents=[common], help="sample a balanced subgraph dataset")
    p.add_argument("--graph", type=Path, required=True)
    p.add_argument("--m", type=int, default=25)
    p.add_argument("--n-train", type=int, default=2000)
    p.add_argument("--n-val", type=int, default=64)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("train", parents=[common], help="train the noise predictor")
    p.add_argument("--dataset", type=Path, required=True)
    p.add_argument("--graph", type=Path, required=True)
    p.add_argument("--fingerprints", type=Path)
    p.add_argument(
        "--csp-weight", type=float,
        help=f"fingerprint loss weight (default {DEFAULT_CSP_WEIGHT} with --fingerprints, else 0)",
    )
    p.add_argument("--layers", type=int, default=2)
    p.add_argument("--dim", type=int, default=32, help="node and edge feature width")
    p.add_argument("--time-dim", type=int, default=32)
    _add_schedule_flags(p)
    p.add_argument("--epochs", type=int, default=10)
    p.add_argument("--batch-size", type=int, default=16)
    p.add_argument("--max-steps", type=int)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--beta1", type=float, default=0.9)
    p.add_argument("--beta2", type=float, default=0.999)
    p.add_argument("--adam-eps", type=float, default=1e-8)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("reconstruct", parents=[common], help="DDIM reconstruction of a subgraph")
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--graph", type=Path, required=True)
    p.add_argument("--nodes", help="comma-separated node names")
    p.add_argument("--dataset", type=Path)
    p.add_argument("--split", choices=("train", "validation"), default="validation")
    p.add_argument("--index", type=int, default=0)
    p.add_argument("--steps", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--trace", action="store_true")
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=cmd_reconstruct)

    p = sub.add_parser("eval", help="evaluation protocols")
    esub = p.add_subparsers(dest="eval_command", required=True, parser_class=_Parser)
    q = esub.add_parser("nmi", parents=[common], help="k-means NMI of hub embeddings")
    q.add_argument("--checkpoint", type=Path, required=True)
    q.add_argument("--graph", type=Path, required=True)
    q.add_argument("--categories", type=Path, required=True)
    q.add_argument("--k", type=int, default=9)
    q.add_argument("--repeats", type=int, default=10)
    q.add_argument("--top-n", type=int)
    q.add_argument("--seed", type=int, default=0)
    q.add_argument("--json", action="store_true")
    q.add_argument("--out", type=Path, required=True)
    q.set_defaults(func=cmd_eval_nmi)
    q = esub.add_parser("gen", parents=[common], help="train-size x test-size validation MSE")
    q.add_argument("--checkpoint", type=Path, nargs="+", required=True)
    q.add_argument("--dataset", type=Path, nargs="+", required=True)
    _add_schedule_flags(q, required_default=False)
    q.add_argument("--json", action="store_true")
    q.add_argument("--out", type=Path, required=True)
    q.set_defaults(func=cmd_eval_gen)

    p = sub.add_parser("export-emb", parents=[common], help="export embeddings with 2-D projection")
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--graph", type=Path, required=True)
    p.add_argument("--ingredients-only", action="store_true")
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=cmd_export_emb)
    return parser


def run(argv=None) -> int:
    started = time.monotonic()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    if args.threads < 1:
        print("--threads must be >= 1", file=sys.stderr)
        return 1
    try:
        inputs, outputs = args.func(args)
        _write_manifest(args, inputs, outputs, started)
    except (FormatError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


def main():
    sys.exit(run())
