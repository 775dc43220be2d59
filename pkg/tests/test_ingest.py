from __future__ import annotations

import io

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dehydrator.errors import (
    DanglingEdges,
    DuplicateNodeId,
    MalformedRow,
    NonNumericTimestamp,
    UnknownNodeType,
    UnknownOperation,
)
from dehydrator.ingest import (
    DanglingEndpoint,
    EdgeRecord,
    GraphTables,
    NodeRecord,
    NodeType,
    Operation,
    load_graph,
    parse_edge_table,
    parse_node_table,
    validate_graph,
    write_edge_table,
    write_node_table,
)


def test_node_row_from_table_one():
    nodes = parse_node_table("identi_id,name,type\nF487A907,Imapd,File\n")
    assert nodes == [NodeRecord("F487A907", "Imapd", NodeType.FILE)]


def test_empty_stream_gives_empty_list():
    assert parse_node_table("") == []
    assert parse_edge_table(b"") == []
    assert parse_node_table("", fmt="jsonl") == []


def test_unknown_node_type():
    with pytest.raises(UnknownNodeType):
        parse_node_table("identi_id,name,type\nA,x,Pipe\n")


def test_duplicate_node_id():
    with pytest.raises(DuplicateNodeId):
        parse_node_table("identi_id,name,type\nA,x,File\nA,y,Process\n")


def test_edge_row_from_table_one():
    edges = parse_edge_table("src_id,dst_id,timestamp,operation\nA603443D,388D98ED,1522706865,Read\n")
    assert edges == [EdgeRecord("A603443D", "388D98ED", 1522706865, Operation.READ)]


def test_duplicate_edges_are_kept():
    row = "A,B,10,Write\n"
    edges = parse_edge_table("src_id,dst_id,timestamp,operation\n" + row + row)
    assert len(edges) == 2 and edges[0] == edges[1]


@pytest.mark.parametrize("ts", ["-5", "12a", "", "1.5", "0"])
def test_bad_timestamps(ts):
    with pytest.raises(NonNumericTimestamp):
        parse_edge_table(f"src_id,dst_id,timestamp,operation\nA,B,{ts},Read\n")


def test_operation_spelling_is_case_insensitive():
    edges = parse_edge_table("src_id,dst_id,timestamp,operation\nA,B,1,FORk\nA,B,2,READ\n")
    assert [e.operation for e in edges] == [Operation.FORK, Operation.READ]


def test_unknown_operation():
    with pytest.raises(UnknownOperation):
        parse_edge_table("src_id,dst_id,timestamp,operation\nA,B,1,Mmap\n")


def test_arity_mismatch_reports_line():
    with pytest.raises(MalformedRow) as info:
        parse_edge_table("src_id,dst_id,timestamp,operation\nA,B,1,Read\nA,B,1\n")
    assert info.value.line_no == 3


def test_missing_header_column():
    with pytest.raises(MalformedRow):
        parse_node_table("identi_id,name\nA,x\n")


def test_extra_columns_ignored_and_quoting():
    text = 'identi_id,name,type,pid\nA,"/tmp/a,b",File,7\n'
    assert parse_node_table(text) == [NodeRecord("A", "/tmp/a,b", NodeType.FILE)]


def test_jsonl_tables():
    nodes = parse_node_table('{"identi_id":"A","name":"n","type":"Socket","x":1}\n', fmt="jsonl")
    assert nodes == [NodeRecord("A", "n", NodeType.SOCKET)]
    edges = parse_edge_table('{"src_id":"A","dst_id":"B","timestamp":5,"operation":"Sendto"}\n', fmt="jsonl")
    assert edges == [EdgeRecord("A", "B", 5, Operation.SENDTO)]
    with pytest.raises(MalformedRow):
        parse_edge_table('{"src_id":"A"}\n', fmt="jsonl")


def test_binary_stream_input():
    nodes = parse_node_table(io.BytesIO(b"identi_id,name,type\nA,x,Process\n"))
    assert nodes[0].node_type is NodeType.PROCESS


def test_validate_consistent_tables(firefox_tables):
    assert validate_graph(firefox_tables) == []


def test_validate_reports_each_dangling_endpoint():
    nodes = [NodeRecord("A", "a", NodeType.PROCESS)]
    edges = [EdgeRecord("A", "X", 1, Operation.FORK), EdgeRecord("Y", "Z", 2, Operation.READ)]
    report = validate_graph(GraphTables(nodes, edges))
    # brute-force count of endpoints outside the node set
    expected = sum(x not in {"A"} for e in edges for x in (e.src_id, e.dst_id))
    assert len(report) == expected == 3
    assert report[0] == DanglingEndpoint(0, "X", "dst")
    assert [d.edge_index for d in report[1:]] == [1, 1]


def test_load_graph_dangling_policy():
    nodes = "identi_id,name,type\nA,a,Process\n"
    edges = "src_id,dst_id,timestamp,operation\nA,X,1,Write\n"
    with pytest.raises(DanglingEdges):
        load_graph(nodes, edges)
    g = load_graph(nodes, edges, allow_dangling=True)
    assert g.nodes[-1] == NodeRecord("X", "", NodeType.FILE)
    assert validate_graph(g) == []


_ids = st.text(alphabet="0123456789ABCDEF", min_size=1, max_size=10)
_names = st.text(alphabet=st.characters(blacklist_categories=("Cs",), blacklist_characters="\r\x00"), max_size=12)


@settings(max_examples=60, deadline=None)
@given(
    st.lists(st.tuples(_ids, _names, st.sampled_from(list(NodeType))), unique_by=lambda t: t[0], max_size=8),
    st.lists(
        st.tuples(_ids, _ids, st.integers(1, 2**40), st.sampled_from(list(Operation))), max_size=12
    ),
    st.sampled_from(["csv", "jsonl"]),
)
def test_write_then_parse_round_trip(nodes, edges, fmt):
    nodes = [NodeRecord(*n) for n in nodes]
    edges = [EdgeRecord(*e) for e in edges]
    assert parse_node_table(write_node_table(nodes, fmt), fmt) == nodes
    assert parse_edge_table(write_edge_table(edges, fmt), fmt) == edges
