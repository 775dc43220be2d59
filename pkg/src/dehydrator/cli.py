"""Command line interface.

Exit codes: 0 success, 2 usage error, 3 data error (bad input or artifact),
4 internal error. Machine-readable results go to stdout, diagnostics to
stderr. All randomness derives from ``--seed``.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from contextlib import nullcontext
from dataclasses import asdict
from pathlib import Path

from threadpoolctl import threadpool_limits

from . import __version__
from .bench import PipelineConfig, capacity_sweep, lsr, run_pipeline
from .ect import build_ect, ect_stats
from .errors import DataError, DehydratorError, InvalidConfig
from .field_codec import (
    MappingTable,
    build_mapping,
    encode_fields,
    encoded_edges_text,
    encoded_nodes_text,
    parse_encoded_nodes,
)
from .hier_codec import analyze_sizes, hierarchical_encode, mmt_from_json, mmt_to_json
from .ingest import load_graph, write_edge_table, write_node_table
from .memorizer import CAPACITIES, ModelConfig, from_checkpoint, init_model, to_checkpoint, train
from .query import format_edges
from .serializer import parse, read_corpus, render, segment, write_corpus
from .store import ARTIFACT_FILES, Build, open_engine, save_build
from .synthgen import SynthSpec, generate

EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_INTERNAL = 4

log = logging.getLogger("dehydrator")


class UsageError(Exception):
    pass


def _emit(obj) -> None:
    sys.stdout.write(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _thread_limit(threads: int | None):
    if threads is None:
        env = os.environ.get("DEHYDRATOR_THREADS")
        if env:
            try:
                threads = int(env)
            except ValueError:
                raise UsageError(f"DEHYDRATOR_THREADS must be an integer, got {env!r}") from None
    if threads is None:
        return nullcontext()
    if threads < 1:
        raise UsageError("--threads must be >= 1")
    return threadpool_limits(limits=threads)


def _load_tables(args):
    with open(args.nodes, "rb") as nf, open(args.edges, "rb") as ef:
        return load_graph(nf, ef, fmt=args.format, allow_dangling=args.allow_dangling)


def _pipeline_config(args, capacity: str | None = None) -> PipelineConfig:
    cfg = PipelineConfig(
        capacity=capacity or args.capacity,
        epochs=args.epochs,
        batch=args.batch,
        lr=args.lr,
        seed=args.seed,
        early_stop_delta=None if args.no_early_stop else 1e-3,
        windows=args.windows,
        lr_schedule=args.lr_schedule,
        prefix_repeat=args.prefix_repeat,
        max_len=getattr(args, "max_len", None),
    )
    try:
        cfg.validate()
    except InvalidConfig as exc:
        raise UsageError(str(exc)) from None
    return cfg


# -- subcommands --------------------------------------------------------------------------

def cmd_ingest(args) -> None:
    tables = _load_tables(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "nodes.csv").write_text(write_node_table(tables.nodes), encoding="utf-8")
    (out / "edges.csv").write_text(write_edge_table(tables.edges), encoding="utf-8")
    _emit({"nodes": len(tables.nodes), "edges": len(tables.edges), "out": str(out)})


def cmd_encode(args) -> None:
    tables = _load_tables(args)
    mt = build_mapping(tables)
    nodes_en, edges_en = encode_fields(tables, mt)
    records, mmt = hierarchical_encode(edges_en)
    corpus = [render(r) for r in records]
    seg = segment(corpus)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    et_en = encoded_edges_text(edges_en).encode("utf-8")
    et_hi = write_corpus(corpus, seg.L)
    (out / ARTIFACT_FILES["mt"]).write_text(mt.to_json(), encoding="utf-8")
    (out / ARTIFACT_FILES["nt_en"]).write_text(encoded_nodes_text(nodes_en), encoding="utf-8")
    (out / ARTIFACT_FILES["mmt"]).write_text(mmt_to_json(mmt), encoding="utf-8")
    (out / ARTIFACT_FILES["et_hi"]).write_bytes(et_hi)
    (out / "et_en.csv").write_bytes(et_en)
    sa = analyze_sizes(edges_en, records, len(mt.identi_id), len(et_en), len(et_hi))
    _emit(
        {
            "n": sa.n,
            "m": sa.m,
            "d_avg": sa.d_avg,
            "L": seg.L,
            "records": len(corpus),
            "bytes_et_en": sa.bytes_et_en,
            "bytes_et_hi": sa.bytes_et_hi,
            "applicable": sa.applicable,
            "text_bytes_et": len(write_edge_table(tables.edges).encode("utf-8")),
            "text_bytes_et_en": sa.text_bytes_et_en,
            "text_bytes_et_hi": sa.text_bytes_et_hi,
        }
    )


def _read_corpus_dir(d: Path):
    try:
        return read_corpus((d / ARTIFACT_FILES["et_hi"]).read_bytes())
    except FileNotFoundError:
        raise UsageError(f"{d} has no {ARTIFACT_FILES['et_hi']}; run encode first") from None


def cmd_train(args) -> None:
    d = Path(args.dir)
    corpus, header = _read_corpus_dir(d)
    cfg = _pipeline_config(args)
    state = init_model(ModelConfig.from_capacity(cfg.capacity, header["L"], cfg.seed))
    rep = train(
        state,
        segment(corpus, header["L"]),
        max_epochs=cfg.epochs,
        batch=cfg.batch,
        lr=cfg.lr,
        early_stop_delta=cfg.early_stop_delta,
        windows=cfg.windows,
        lr_schedule=cfg.lr_schedule,
        prefix_repeat=cfg.prefix_repeat,
        callback=lambda e, loss: log.info("epoch %d loss %.4f", e + 1, loss),
    )
    (d / ARTIFACT_FILES["model"]).write_bytes(to_checkpoint(state))
    _emit(
        {
            "capacity": cfg.capacity,
            "params": state.n_params(),
            "epochs": rep.epochs,
            "losses": rep.losses,
            "seconds": rep.seconds,
            "early_stopped": rep.early_stopped,
        }
    )


def cmd_correct(args) -> None:
    d = Path(args.dir)
    corpus, header = _read_corpus_dir(d)
    try:
        state = from_checkpoint((d / ARTIFACT_FILES["model"]).read_bytes())
        mt = MappingTable.from_json((d / ARTIFACT_FILES["mt"]).read_text(encoding="utf-8"))
        nodes = parse_encoded_nodes((d / ARTIFACT_FILES["nt_en"]).read_text(encoding="utf-8"))
        mmt = mmt_from_json((d / ARTIFACT_FILES["mmt"]).read_text(encoding="utf-8"))
    except FileNotFoundError as exc:
        raise UsageError(f"missing artifact {exc.filename}; run encode and train first") from None
    max_len = args.max_len if args.max_len is not None else max(len(s) for s in corpus)
    ect = build_ect(state, corpus, max_len=max_len, margin=args.margin)
    n_edges = sum(parse(s).edge_count() for s in corpus)
    build = Build(mt, nodes, mmt, corpus, header["L"], state, ect, max_len, n_edges)
    manifest = save_build(d, build)
    _emit({"build_id": manifest["build_id"], "ect": asdict(ect_stats(ect, corpus))})


def cmd_build(args) -> None:
    tables = _load_tables(args)
    rep = run_pipeline(tables, _pipeline_config(args), out_dir=args.out)
    _emit(rep.to_dict())


def cmd_bench(args) -> None:
    tables = _load_tables(args)
    rep = run_pipeline(tables, _pipeline_config(args), out_dir=args.out)
    out = rep.to_dict()
    out["lsr"] = lsr(rep.bp_pre, rep.bp_post, rep.t_s)
    _emit(out)


def cmd_sweep(args) -> None:
    labels = [c.strip() for c in args.capacities.split(",") if c.strip()]
    if len(labels) < 2 or len(set(labels)) != len(labels) or not set(labels) <= set(CAPACITIES):
        raise UsageError(f"--capacities needs two or more distinct labels from {sorted(CAPACITIES)}")
    cfg = _pipeline_config(args, capacity=labels[0])
    tables = _load_tables(args)
    try:
        if args.out:
            with open(args.out, "w", encoding="utf-8", newline="") as fh:
                points, eta = capacity_sweep(tables, labels, cfg, fh)
        else:
            points, eta = capacity_sweep(tables, labels, cfg, sys.stdout)
    except InvalidConfig as exc:
        raise UsageError(str(exc)) from None
    print(f"eta={eta}", file=sys.stderr)


def _write_stats(path: str | None, engine) -> None:
    if path:
        Path(path).write_text(json.dumps(engine.stats.to_dict(), indent=2) + "\n", encoding="utf-8")


def cmd_query_node(args) -> None:
    engine = open_engine(args.build)
    n = engine.query_node(args.id)
    _emit({"identi_id": n.identi_id, "name": n.name, "type": n.node_type.value})


def cmd_query_incoming(args) -> None:
    engine = open_engine(args.build)
    sys.stdout.write(format_edges(engine.query_incoming(args.id), args.out_format))
    _write_stats(args.stats_out, engine)


def cmd_backtrack(args) -> None:
    engine = open_engine(args.build)
    window = tuple(args.window) if args.window else None
    if args.depth < 1:
        raise UsageError("--depth must be >= 1")
    res = engine.backtrack_bfs(args.root, args.depth, window)
    sys.stdout.write(format_edges(res.edges, args.out_format))
    _write_stats(args.stats_out, engine)


def cmd_batch(args) -> None:
    ids = list(args.id or [])
    if args.ids_file:
        ids += [line.strip() for line in Path(args.ids_file).read_text(encoding="utf-8").splitlines() if line.strip()]
    if not ids:
        raise UsageError("batch needs --id or --ids-file")
    engine = open_engine(args.build)
    for identi_id, result in zip(ids, engine.batch_incoming(ids)):
        if isinstance(result, DehydratorError):
            print(json.dumps({"id": identi_id, "error": str(result)}, separators=(",", ":")))
            continue
        edges = [
            {"src_id": e.src_id, "dst_id": e.dst_id, "timestamp": e.timestamp, "operation": e.operation.value}
            for e in result
        ]
        print(json.dumps({"id": identi_id, "edges": edges}, separators=(",", ":")))
    _write_stats(args.stats_out, engine)


def cmd_synth(args) -> None:
    if args.davg <= 0:
        raise UsageError("--davg must be positive")
    n_nodes = max(2, round(args.edges / args.davg))
    spec = SynthSpec(n_nodes=n_nodes, n_edges=args.edges, seed=args.seed, creation_edges=args.profile == "lab")
    g = generate(spec)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    ext = "csv" if args.format == "csv" else "jsonl"
    (out / f"nodes.{ext}").write_text(write_node_table(g.nodes, args.format), encoding="utf-8")
    (out / f"edges.{ext}").write_text(write_edge_table(g.edges, args.format), encoding="utf-8")
    _emit({"nodes": len(g.nodes), "edges": len(g.edges), "d_avg": len(g.edges) / len(g.nodes), "out": str(out)})


# -- parser ------------------------------------------------------------------------------

def _add_tables(p) -> None:
    p.add_argument("--nodes", required=True, help="node table (identi_id,name,type)")
    p.add_argument("--edges", "--in", dest="edges", required=True, help="edge table (src_id,dst_id,timestamp,operation)")
    p.add_argument("--format", choices=("csv", "jsonl"), default="csv")
    p.add_argument("--allow-dangling", action="store_true", help="add placeholder nodes for unknown endpoints")


def _add_training(p) -> None:
    p.add_argument("--capacity", choices=sorted(CAPACITIES), default="C2")
    p.add_argument("--epochs", type=int, default=5)
    p.add_argument("--batch", type=int, default=4096)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--no-early-stop", action="store_true")
    p.add_argument("--windows", choices=("aligned", "sliding"), default="aligned")
    p.add_argument("--lr-schedule", choices=("constant", "cosine"), default="constant")
    p.add_argument("--prefix-repeat", type=int, default=1)


def _add_query(p) -> None:
    p.add_argument("--build", required=True, help="build directory")
    p.add_argument("--out-format", choices=("jsonl", "csv"), default="jsonl")
    p.add_argument("--stats-out", help="write query statistics JSON here")


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dehydrator", description="Provenance graph storage by memorization.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--seed", type=int, default=0, help="seed for every random choice (default 0)")
    parser.add_argument("--threads", type=int, help="cap BLAS threads (env DEHYDRATOR_THREADS)")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="validate and normalize raw tables")
    _add_tables(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("encode", help="field mapping and hierarchical encoding")
    _add_tables(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_encode)

    p = sub.add_parser("train", help="train the memorizer on an encoded directory")
    p.add_argument("--dir", required=True)
    _add_training(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("correct", help="build the error correction table and the manifest")
    p.add_argument("--dir", required=True)
    p.add_argument("--max-len", type=int)
    p.add_argument("--margin", type=float, default=1e-3)
    p.set_defaults(func=cmd_correct)

    for name, func, helptext in (
        ("build", cmd_build, "run every stage and write a build directory"),
        ("bench", cmd_bench, "run every stage and report sizes, timings and LSR"),
    ):
        p = sub.add_parser(name, help=helptext)
        _add_tables(p)
        _add_training(p)
        p.add_argument("--max-len", type=int)
        p.add_argument("--out", required=name == "build")
        p.set_defaults(func=func)

    p = sub.add_parser("sweep", help="capacity sweep; CSV of capacity,bp_pre,bp_post,t_s,lsr")
    _add_tables(p)
    _add_training(p)
    p.add_argument("--capacities", default="C1,C2,C3")
    p.add_argument("--out", help="CSV path (default stdout)")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("query-node", help="look up one node")
    p.add_argument("--build", required=True)
    p.add_argument("--id", required=True)
    p.set_defaults(func=cmd_query_node)

    p = sub.add_parser("query-incoming", help="incoming edges of one node")
    _add_query(p)
    p.add_argument("--id", required=True)
    p.set_defaults(func=cmd_query_incoming)

    p = sub.add_parser("backtrack", help="reverse BFS from a node")
    _add_query(p)
    p.add_argument("--root", required=True)
    p.add_argument("--depth", type=int, default=4)
    p.add_argument("--window", type=int, nargs=2, metavar=("T_LO", "T_HI"))
    p.set_defaults(func=cmd_backtrack)

    p = sub.add_parser("batch", help="incoming edges for many nodes, one JSON line per id")
    _add_query(p)
    p.add_argument("--id", action="append")
    p.add_argument("--ids-file")
    p.set_defaults(func=cmd_batch)

    p = sub.add_parser("synth", help="write a synthetic node and edge table")
    p.add_argument("--edges", type=int, default=100_000)
    p.add_argument("--davg", type=float, default=5.0)
    p.add_argument("--profile", choices=("hub", "lab"), default="hub")
    p.add_argument("--format", choices=("csv", "jsonl"), default="csv")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    # global flags are also accepted after the subcommand
    for p in sub.choices.values():
        p.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="same as the global --seed")
        p.add_argument("--threads", type=int, default=argparse.SUPPRESS, help="same as the global --threads")
    return parser


def main(argv=None) -> int:
    parser = make_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, stream=sys.stderr)
    try:
        with _thread_limit(args.threads):
            args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except InvalidConfig as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, FileNotFoundError, IsADirectoryError, UnicodeDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except Exception as exc:  # noqa: BLE001 - last-resort mapping to the internal-error code
        log.debug("internal error", exc_info=True)
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    return 0


if __name__ == "__main__":
    sys.exit(main())
