"""End-to-end pipeline runs with per-stage timing and byte accounting.

``BP_pre`` is the size of the raw edge table as CSV text. ``BP_post`` is what a
query needs beyond the node-side tables: the merge mapping table, the model
checkpoint and the error correction table. The latency-to-storage ratio is the
number of bytes saved per second of processing.
"""

from __future__ import annotations

import csv
import io
import os
import time
from dataclasses import asdict, dataclass, field, replace
from typing import IO, Sequence

from .ect import DEFAULT_MARGIN, EctStats, build_ect, ect_stats
from .errors import InvalidConfig, ZeroDuration
from .field_codec import build_mapping, encode_fields, encoded_edges_text
from .hier_codec import hierarchical_encode
from .ingest import GraphTables, write_edge_table
from .memorizer import CAPACITIES, ModelConfig, TrainReport, init_model, train
from .serializer import render, segment, write_corpus
from .store import Build, save_build

SWEEP_COLUMNS = ("capacity", "bp_pre", "bp_post", "t_s", "lsr")


@dataclass(frozen=True)
class PipelineConfig:
    capacity: str = "C2"
    epochs: int = 5
    batch: int = 4096
    lr: float = 1e-3
    seed: int = 0
    early_stop_delta: float | None = 1e-3
    windows: str = "aligned"
    lr_schedule: str = "constant"
    prefix_repeat: int = 1
    micro_batch: int = 1024
    margin: float = DEFAULT_MARGIN
    max_len: int | None = None  # generation budget; default is the longest record

    def validate(self) -> None:
        if self.capacity not in CAPACITIES:
            raise InvalidConfig(f"unknown capacity {self.capacity!r}")
        if self.epochs < 1 or self.batch < 1 or self.micro_batch < 1 or self.prefix_repeat < 1:
            raise InvalidConfig("epochs, batch, micro_batch and prefix_repeat must be positive")
        if not self.lr > 0:
            raise InvalidConfig("lr must be positive")


@dataclass
class StageReport:
    bytes: dict[str, int]      # et_raw, et_en, et_hi, mmt, checkpoint, ect
    seconds: dict[str, float]  # fme, he, train, correct, save
    bp_pre: int
    bp_post: int
    train: TrainReport | None = None
    ect: EctStats | None = None
    build: Build | None = field(default=None, repr=False, compare=False)

    @property
    def t_s(self) -> float:
        return sum(self.seconds.values())

    def to_dict(self) -> dict:
        out = {
            "bytes": dict(self.bytes),
            "seconds": dict(self.seconds),
            "t_s": self.t_s,
            "bp_pre": self.bp_pre,
            "bp_post": self.bp_post,
        }
        if self.train is not None:
            out["train"] = {
                "epochs": self.train.epochs,
                "losses": self.train.losses,
                "seconds": self.train.seconds,
                "early_stopped": self.train.early_stopped,
            }
        if self.ect is not None:
            out["ect"] = asdict(self.ect)
        return out


def lsr(bp_pre: float, bp_post: float, t_s: float) -> float:
    if not t_s > 0:
        raise ZeroDuration()
    return (bp_pre - bp_post) / t_s


def run_pipeline(
    tables: GraphTables, cfg: PipelineConfig = PipelineConfig(), out_dir: str | os.PathLike | None = None
) -> StageReport:
    """Field mapping, hierarchical encoding, training and correction, each timed.

    With ``out_dir`` the build is also persisted and the write time is
    counted in ``t_s``. The assembled :class:`Build` is attached to the report.
    """
    cfg.validate()
    clock = time.perf_counter
    seconds = {}

    t0 = clock()
    mt = build_mapping(tables)
    nodes_en, edges_en = encode_fields(tables, mt)
    seconds["fme"] = clock() - t0

    t0 = clock()
    records, mmt = hierarchical_encode(edges_en)
    corpus = [render(r) for r in records]
    seconds["he"] = clock() - t0

    t0 = clock()
    seg = segment(corpus)
    state = init_model(ModelConfig.from_capacity(cfg.capacity, seg.L, cfg.seed))
    report = train(
        state,
        seg,
        max_epochs=cfg.epochs,
        batch=cfg.batch,
        lr=cfg.lr,
        early_stop_delta=cfg.early_stop_delta,
        micro_batch=cfg.micro_batch,
        windows=cfg.windows,
        lr_schedule=cfg.lr_schedule,
        prefix_repeat=cfg.prefix_repeat,
    )
    seconds["train"] = clock() - t0

    t0 = clock()
    max_len = cfg.max_len if cfg.max_len is not None else max(len(s) for s in corpus)
    ect = build_ect(state, corpus, max_len=max_len, margin=cfg.margin)
    seconds["correct"] = clock() - t0

    build = Build(
        mt=mt,
        nodes=nodes_en,
        mmt=mmt,
        corpus=corpus,
        L=seg.L,
        state=state,
        ect=ect,
        max_len=max_len,
        n_edges=len(edges_en),
        extra={"pipeline": asdict(cfg)},
    )
    blobs = build.artifact_bytes()
    if out_dir is not None:
        t0 = clock()
        save_build(out_dir, build)
        seconds["save"] = clock() - t0

    sizes = {
        "et_raw": len(write_edge_table(tables.edges, "csv").encode("utf-8")),
        "et_en": len(encoded_edges_text(edges_en).encode("utf-8")),
        "et_hi": len(write_corpus(corpus, seg.L)),
        "mmt": len(blobs["mmt"]),
        "checkpoint": len(blobs["model"]),
        "ect": len(blobs["ect"]),
    }
    return StageReport(
        bytes=sizes,
        seconds=seconds,
        bp_pre=sizes["et_raw"],
        bp_post=sizes["mmt"] + sizes["checkpoint"] + sizes["ect"],
        train=report,
        ect=ect_stats(ect, corpus),
        build=build,
    )


@dataclass(frozen=True)
class LsrPoint:
    capacity_label: str
    bp_pre: int
    bp_post: int
    t_s: float
    lsr: float


def capacity_sweep(
    tables: GraphTables,
    labels: Sequence[str],
    cfg: PipelineConfig = PipelineConfig(),
    out: IO[str] | None = None,
) -> tuple[list[LsrPoint], str]:
    """One pipeline run per capacity on the same input; returns the points and the best label."""
    labels = list(labels)
    if len(labels) < 2:
        raise InvalidConfig("a sweep needs at least two capacities")
    if len(set(labels)) != len(labels):
        raise InvalidConfig(f"duplicate capacity labels in {labels}")
    for label in labels:
        if label not in CAPACITIES:
            raise InvalidConfig(f"unknown capacity {label!r}")
    points = []
    for label in labels:
        rep = run_pipeline(tables, replace(cfg, capacity=label))
        points.append(LsrPoint(label, rep.bp_pre, rep.bp_post, rep.t_s, lsr(rep.bp_pre, rep.bp_post, rep.t_s)))
    eta = max(points, key=lambda p: p.lsr).capacity_label
    if out is not None:
        write_sweep_csv(points, out)
    return points, eta


def write_sweep_csv(points: Sequence[LsrPoint], out: IO[str]) -> None:
    w = csv.writer(out, lineterminator="\n")
    w.writerow(SWEEP_COLUMNS)
    for p in points:
        w.writerow((p.capacity_label, p.bp_pre, p.bp_post, repr(p.t_s), repr(p.lsr)))


def sweep_csv(points: Sequence[LsrPoint]) -> str:
    buf = io.StringIO()
    write_sweep_csv(points, buf)
    return buf.getvalue()
