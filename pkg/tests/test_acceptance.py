"""Acceptance suite: one test per criterion, each at its stated tolerance.

Run with ``pytest tests/test_acceptance.py -v``; a pass/fail line per
criterion is printed at the end of the session.
"""

from __future__ import annotations

import csv
import io
import json
import math
import random
import time
from collections import Counter, defaultdict

import numpy as np
import pytest

from dehydrator.bench import SWEEP_COLUMNS, PipelineConfig, capacity_sweep, lsr, run_pipeline
from dehydrator.ect import build_ect, corrected_generate, ect_stats, head_of
from dehydrator.errors import DigestMismatch, VersionMismatch
from dehydrator.field_codec import decode_fields, encoded_edges_text
from dehydrator.hier_codec import analyze_sizes, hierarchical_decode
from dehydrator.ingest import GraphTables, write_edge_table
from dehydrator.memorizer import CAPACITIES, ModelConfig, count_params, forward, grad_check, init_model, loss_only
from dehydrator.serializer import VOCAB_SIZE, write_corpus
from dehydrator.store import ARTIFACT_FILES, MANIFEST, load_build, save_build
from dehydrator.synthgen import SynthSpec, generate, p_series

from conftest import encode_all
from oracles import edge_key, reverse_bfs

# Reference model sizes in thousands of parameters per capacity.
REFERENCE_K = {"C1": 18, "C2": 70, "C3": 271, "C4": 600, "C5": 1070, "C6": 2380}

N_CORPORA = 20
_BUILD_SECONDS: list[float] = []


def _corpus_spec(seed: int) -> tuple[SynthSpec, str]:
    n = 150 + 75 * seed
    d = 1 + seed % 5
    return SynthSpec(n_nodes=n, n_edges=n * d, seed=seed), ("C1" if seed % 2 == 0 else "C2")


def _scan_by_dst(tables: GraphTables) -> dict[str, Counter]:
    """One full pass over the raw edge table, grouped by destination."""
    out: dict[str, Counter] = defaultdict(Counter)
    for e in tables.edges:
        out[e.dst_id][edge_key(e)] += 1
    return out


def _multiset(edges) -> Counter:
    return Counter(edge_key(e) for e in edges)


@pytest.fixture(scope="module")
def corpora():
    """The twenty criterion-1 corpora, each run through the default pipeline."""
    out = []
    t0 = time.perf_counter()
    for seed in range(N_CORPORA):
        spec, cap = _corpus_spec(seed)
        tables = generate(spec)
        rep = run_pipeline(tables, PipelineConfig(capacity=cap, seed=seed))
        out.append((seed, cap, tables, rep))
    _BUILD_SECONDS.append(time.perf_counter() - t0)
    return out


def test_criterion_1_end_to_end_losslessness(corpora):
    t0 = time.perf_counter()
    for seed, cap, tables, rep in corpora:
        assert len(tables.nodes) <= 20_000 and len(tables.edges) <= 100_000
        mt, nodes_en, edges_en, records, mmt, corpus = encode_all(tables)
        back = decode_fields(nodes_en, hierarchical_decode(records), mt)
        assert back.nodes == tables.nodes
        assert _multiset(back.edges) == _multiset(tables.edges)

        engine = rep.build.engine()
        oracle = _scan_by_dst(tables)
        ids = [n.identi_id for n in tables.nodes]
        batched = engine.batch_incoming(ids)
        for i, got in zip(ids, batched):
            assert _multiset(got) == oracle.get(i, Counter()), (seed, cap, i)
        for i in random.Random(seed).sample(ids, 10):
            assert _multiset(engine.query_incoming(i)) == oracle.get(i, Counter())
    elapsed = _BUILD_SECONDS[0] + time.perf_counter() - t0
    print(f"criterion 1: {N_CORPORA} corpora, every node exact, {elapsed:.0f}s including builds")
    assert elapsed < 30 * 60


def test_criterion_2_degree_threshold():
    flags, text_hi = [], []
    for g in p_series(100_000):
        _, _, edges_en, records, _, corpus = encode_all(g)
        flags.append(analyze_sizes(edges_en, records, len(g.nodes)).applicable)
        text_hi.append(len(write_corpus(corpus)))
    print(f"criterion 2: applicable={flags} et_hi_bytes={text_hi}")
    assert flags == [False, False, True, True, True]
    assert all(a > b for a, b in zip(text_hi, text_hi[1:]))


def test_criterion_3_stage_magnitudes():
    g = generate(SynthSpec(n_nodes=20_000, n_edges=100_000))
    assert len(g.edges) / len(g.nodes) == 5.0
    _, _, edges_en, _, _, corpus = encode_all(g)
    et = len(write_edge_table(g.edges).encode("utf-8"))
    et_en = len(encoded_edges_text(edges_en).encode("utf-8"))
    et_hi = len(write_corpus(corpus))
    print(f"criterion 3: ET {et} B, ET_en {et_en} B ({et_en / et:.3f}), ET_hi {et_hi} B ({et_hi / et_en:.3f})")
    assert et_en < 0.5 * et
    assert et_hi < 0.5 * et_en


def test_criterion_4_ect_exactness_and_size(corpora):
    for seed, cap, tables, rep in corpora:
        b = rep.build
        heads = [head_of(s) for s in b.corpus]
        assert corrected_generate(b.state, b.ect, heads, b.max_len) == b.corpus
        untrained = init_model(ModelConfig.from_capacity(cap, b.L, seed + 100))
        ect = build_ect(untrained, b.corpus, max_len=b.max_len)
        assert corrected_generate(untrained, ect, heads, b.max_len) == b.corpus

    # 200-record corpus, C2, 50 epochs
    tables = generate(SynthSpec(n_nodes=200, n_edges=600, seed=0, creation_edges=True))
    cfg = PipelineConfig(
        capacity="C2",
        epochs=50,
        batch=4,
        lr=3e-3,
        early_stop_delta=None,
        windows="sliding",
        lr_schedule="cosine",
        prefix_repeat=8,
        micro_batch=4,
    )
    rep = run_pipeline(tables, cfg)
    b = rep.build
    assert len(b.corpus) <= 200
    heads = [head_of(s) for s in b.corpus]
    assert corrected_generate(b.state, b.ect, heads, b.max_len) == b.corpus
    stats = ect_stats(b.ect, b.corpus)
    ratio = stats.bytes / rep.bytes["et_hi"]
    print(
        f"criterion 4: {len(b.corpus)} records, char error {stats.char_error_rate:.4f}, "
        f"ECT {stats.bytes} B = {ratio:.3f} of ET_hi, train {rep.seconds['train']:.0f}s"
    )
    assert stats.char_error_rate < 0.05
    assert ratio < 0.10


def test_criterion_5_model_verification():
    err = grad_check()
    assert err < 1e-4

    state = init_model(ModelConfig.from_capacity("C2", 16, seed=3))
    ids = np.random.default_rng(0).integers(0, VOCAB_SIZE, size=(8, 16))
    logits = forward(state, ids).astype(np.float64)
    z = np.exp(logits - logits.max(-1, keepdims=True))
    sums = (z / z.sum(-1, keepdims=True)).sum(-1)
    assert np.abs(sums - 1).max() <= 1e-6

    zero = init_model(ModelConfig.from_capacity("C1", 8))
    zero.params["tok_emb"][...] = 0
    zero.params["out_b"][...] = 0
    targets = np.random.default_rng(1).integers(0, VOCAB_SIZE - 2, size=(4, 8))
    loss = loss_only(zero.params, zero.config, ids[:4, :8], targets)
    assert abs(loss - math.log(21)) <= 1e-6

    counts = {k: count_params(ModelConfig.from_capacity(k, 23)) for k in CAPACITIES}
    print(f"criterion 5: grad_check {err:.2e}, loss {loss:.7f}, params {counts}")
    for k, n in counts.items():
        assert abs(n - 1000 * REFERENCE_K[k]) <= 0.1 * 1000 * REFERENCE_K[k], k


def test_criterion_6_query_oracle_equivalence():
    tables = generate(SynthSpec(n_nodes=1500, n_edges=6000, seed=11, creation_edges=True))
    rep = run_pipeline(tables, PipelineConfig(capacity="C1", epochs=5, batch=64, lr=3e-3, early_stop_delta=None))
    engine = rep.build.engine()
    rng = random.Random(6)
    stamps = sorted(e.timestamp for e in tables.edges)
    roots = rng.sample([n.identi_id for n in tables.nodes], 100)
    checked = 0
    for root in roots:
        lo, hi = sorted(rng.sample(stamps, 2))
        for depth in range(1, 5):
            for window in (None, (lo, hi)):
                res = engine.backtrack_bfs(root, depth, window)
                assert _multiset(res.edges) == reverse_bfs(tables, root, depth, window), (root, depth, window)
                checked += 1
    print(f"criterion 6: {checked} traversals equal the reverse-BFS oracle")


def test_criterion_7_lsr_and_sweep():
    assert lsr(100, 40, 30) == 2.0
    tables = generate(SynthSpec(n_nodes=400, n_edges=2000, seed=7))
    cfg = PipelineConfig(epochs=2, batch=64, early_stop_delta=None)
    runs = []
    for _ in range(2):
        buf = io.StringIO()
        points, eta = capacity_sweep(tables, ["C1", "C2", "C3"], cfg, buf)
        runs.append((points, eta, buf.getvalue()))
    points, eta, text = runs[0]
    rows = list(csv.reader(io.StringIO(text)))
    assert tuple(rows[0]) == SWEEP_COLUMNS
    assert [r[0] for r in rows[1:]] == ["C1", "C2", "C3"]
    for r in rows[1:]:
        assert int(r[1]) > 0 and int(r[2]) > 0 and float(r[3]) > 0 and math.isfinite(float(r[4]))
    best = max(points, key=lambda p: p.lsr)
    assert eta == best.capacity_label and math.isfinite(best.lsr)
    assert [p.bp_post for p in runs[0][0]] == [p.bp_post for p in runs[1][0]]
    print(f"criterion 7: eta={eta}, bp_post={[p.bp_post for p in points]}")


def test_criterion_8_persistence(tmp_path):
    tables = generate(SynthSpec(n_nodes=300, n_edges=1200, seed=8))
    build = run_pipeline(tables, PipelineConfig(capacity="C1", epochs=2, batch=64, early_stop_delta=None)).build
    blobs = build.artifact_bytes()
    save_build(tmp_path / "b", build)
    loaded = load_build(tmp_path / "b")
    assert loaded.artifact_bytes() == blobs
    for name, fname in ARTIFACT_FILES.items():
        assert (tmp_path / "b" / fname).read_bytes() == blobs[name]

    for name, fname in ARTIFACT_FILES.items():
        d = tmp_path / f"t_{name}"
        save_build(d, build)
        p = d / fname
        data = bytearray(p.read_bytes())
        data[-2] ^= 0x20
        p.write_bytes(bytes(data))
        with pytest.raises(DigestMismatch):
            load_build(d)

    d = tmp_path / "future"
    save_build(d, build)
    m = json.loads((d / MANIFEST).read_text())
    m["format_version"] += 1
    (d / MANIFEST).write_text(json.dumps(m))
    with pytest.raises(VersionMismatch):
        load_build(d)
    print("criterion 8: bit-exact round trip, tampering and version checks raise")
