from __future__ import annotations

import random
from collections import Counter

import pytest

from dehydrator.bench import run_pipeline
from dehydrator.errors import CorruptArtifact, UnknownNode
from dehydrator.ingest import EdgeRecord, GraphTables, NodeRecord, NodeType, Operation
from dehydrator.query import format_edges

from conftest import FAST
from oracles import edge_key, incoming_scan, reverse_bfs


def _multiset(edges):
    return Counter(edge_key(e) for e in edges)


@pytest.fixture(scope="module")
def firefox_engine():
    nodes = [
        NodeRecord("v1", "bash", NodeType.PROCESS),
        NodeRecord("v2", "Firefox", NodeType.PROCESS),
        NodeRecord("v3", "/etc/hosts", NodeType.FILE),
    ]
    edges = [
        EdgeRecord("v1", "v2", 4213, Operation.FORK),
        EdgeRecord("v3", "v2", 4214, Operation.READ),
    ]
    return GraphTables(nodes, edges), run_pipeline(GraphTables(nodes, edges), FAST).build.engine()


@pytest.fixture()
def engine(small_build):
    return small_build.engine()


def test_query_node_example(firefox_engine):
    _, eng = firefox_engine
    assert eng.query_node("v2") == NodeRecord("v2", "Firefox", NodeType.PROCESS)


def test_query_incoming_example(firefox_engine):
    tables, eng = firefox_engine
    assert eng.query_incoming("v2") == list(tables.edges)
    assert eng.query_incoming("v1") == []


def test_backtrack_depth_one_example(firefox_engine):
    tables, eng = firefox_engine
    res = eng.backtrack_bfs("v2", depth=1)
    assert _multiset(res.edges) == _multiset(tables.edges)
    assert res.frontiers == [{"v2"}, {"v1", "v3"}]


def test_unknown_node(engine):
    with pytest.raises(UnknownNode):
        engine.query_node("nope")
    with pytest.raises(UnknownNode):
        engine.query_incoming("nope")
    with pytest.raises(UnknownNode):
        engine.backtrack_bfs("nope")


def test_every_node_round_trips(engine, small_graph):
    for n in small_graph.nodes:
        assert engine.query_node(n.identi_id) == n


def test_incoming_matches_scan(engine, small_graph):
    for n in small_graph.nodes:
        assert _multiset(engine.query_incoming(n.identi_id)) == incoming_scan(small_graph, n.identi_id)


def test_batch_equals_sequential(engine, small_graph):
    ids = [n.identi_id for n in small_graph.nodes[:100]]
    fresh = engine.__class__(engine.mt, list(engine._nodes.values()), engine.mmt, engine.state, engine.ect, engine.max_len)
    batch = fresh.batch_incoming(ids)
    assert batch == [engine.query_incoming(i) for i in ids]
    assert fresh.batch_incoming(ids[:1]) == [engine.query_incoming(ids[0])]
    for i, got in zip(ids, batch):
        assert _multiset(got) == incoming_scan(small_graph, i)


def test_batch_reports_unknown_in_place(engine, small_graph):
    good = small_graph.nodes[0].identi_id
    out = engine.batch_incoming([good, "missing", good])
    assert isinstance(out[1], UnknownNode)
    assert out[0] == out[2] == engine.query_incoming(good)
    with pytest.raises(ValueError):
        engine.batch_incoming([])


def test_depth_must_be_positive(engine, small_graph):
    with pytest.raises(ValueError):
        engine.backtrack_bfs(small_graph.nodes[0].identi_id, depth=0)


def test_chain_of_length_d():
    d = 4
    nodes = [NodeRecord(f"n{i}", f"p{i}", NodeType.PROCESS) for i in range(d + 1)]
    edges = [EdgeRecord(f"n{i}", f"n{i + 1}", 100 + i, Operation.FORK) for i in range(d)]
    tables = GraphTables(nodes, edges)
    eng = run_pipeline(tables, FAST).build.engine()
    for depth in range(1, d + 1):
        res = eng.backtrack_bfs(f"n{d}", depth=depth)
        assert len(res.edges) == depth


def test_bfs_matches_oracle(engine, small_graph):
    rng = random.Random(5)
    ts = sorted(e.timestamp for e in small_graph.edges)
    for _ in range(25):
        root = rng.choice(small_graph.nodes).identi_id
        depth = rng.randint(1, 4)
        window = None
        if rng.random() < 0.5:
            lo, hi = sorted(rng.sample(ts, 2))
            window = (lo, hi)
        res = engine.backtrack_bfs(root, depth, window)
        assert _multiset(res.edges) == reverse_bfs(small_graph, root, depth, window)
        if window is not None:
            assert all(window[0] <= e.timestamp <= window[1] for e in res.edges)


def test_bfs_edges_start_from_previous_frontier(engine, small_graph):
    root = max(small_graph.nodes, key=lambda n: len(incoming_scan(small_graph, n.identi_id))).identi_id
    res = engine.backtrack_bfs(root, depth=3)
    reached = set().union(*res.frontiers)
    assert all(e.dst_id in reached for e in res.edges)
    assert len(set(map(frozenset, res.frontiers))) == len(res.frontiers) or not res.frontiers[-1]
    assert res.stats.generated_chars >= 0


def test_disagreeing_record_is_reported(small_build, small_graph):
    eng = small_build.engine()
    v = next(iter(eng.mmt))
    eng.mmt[v] = eng.mmt[v] + [10**6]
    ident = eng.mt.identi_id.values[v]
    with pytest.raises(CorruptArtifact):
        eng.query_incoming(ident)


def test_format_edges(firefox_engine):
    tables, _ = firefox_engine
    text = format_edges(tables.edges, "jsonl")
    assert text.count("\n") == 2 and '"Fork"' in text
    assert format_edges(tables.edges, "csv").startswith("src_id,dst_id,timestamp,operation")
