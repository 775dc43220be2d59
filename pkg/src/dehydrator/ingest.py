"""Parse raw audit-log exports into node and edge tables.

Two formats are accepted for each table: CSV with a mandatory header row and
JSON Lines with one object per line. Column and key names are the lowercase
field names (``identi_id,name,type`` for nodes and
``src_id,dst_id,timestamp,operation`` for edges). Unknown extra columns are
ignored.
"""

from __future__ import annotations

import csv
import io
import json
import re
from dataclasses import dataclass, field
from enum import Enum
from typing import IO, Iterable, Iterator, Union

from .errors import (
    DanglingEdges,
    DuplicateNodeId,
    MalformedRow,
    NonNumericTimestamp,
    UnknownNodeType,
    UnknownOperation,
)

Source = Union[bytes, str, IO[bytes], IO[str]]

NODE_COLUMNS = ("identi_id", "name", "type")
EDGE_COLUMNS = ("src_id", "dst_id", "timestamp", "operation")

_TIMESTAMP_RE = re.compile(r"[0-9]+")


class NodeType(str, Enum):
    FILE = "File"
    PROCESS = "Process"
    SOCKET = "Socket"


class Operation(str, Enum):
    READ = "Read"
    WRITE = "Write"
    EXECUTE = "Execute"
    SENDTO = "Sendto"
    RECVFR = "Recvfr"
    FORK = "Fork"


# Audit exports spell operations inconsistently ("FORk", "READ"); match on case.
_NODE_TYPES = {t.value.lower(): t for t in NodeType}
_OPERATIONS = {o.value.lower(): o for o in Operation}


def node_type(value: str) -> NodeType:
    try:
        return _NODE_TYPES[value.strip().lower()]
    except KeyError:
        raise UnknownNodeType(value) from None


def operation(value: str) -> Operation:
    try:
        return _OPERATIONS[value.strip().lower()]
    except KeyError:
        raise UnknownOperation(value) from None


@dataclass(frozen=True)
class NodeRecord:
    identi_id: str
    name: str
    node_type: NodeType


@dataclass(frozen=True)
class EdgeRecord:
    src_id: str
    dst_id: str
    timestamp: int
    operation: Operation


@dataclass(frozen=True)
class GraphTables:
    """The provenance graph as a node table plus an edge multiset."""

    nodes: tuple[NodeRecord, ...] = ()
    edges: tuple[EdgeRecord, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "nodes", tuple(self.nodes))
        object.__setattr__(self, "edges", tuple(self.edges))


@dataclass(frozen=True)
class DanglingEndpoint:
    edge_index: int
    identi_id: str
    role: str = field(default="src")

    def __str__(self) -> str:
        return f"DanglingEndpoint({self.identi_id}, edge {self.edge_index} {self.role})"


# -- reading ----------------------------------------------------------------------

def _text_stream(source: Source) -> IO[str]:
    if isinstance(source, bytes):
        return io.StringIO(source.decode("utf-8"), newline="")
    if isinstance(source, str):
        return io.StringIO(source, newline="")
    sample = source.read(0)
    if isinstance(sample, bytes):
        return io.TextIOWrapper(source, encoding="utf-8", newline="")
    return source


def _csv_rows(source: Source, columns: tuple[str, ...]) -> Iterator[tuple[int, dict]]:
    reader = csv.reader(_text_stream(source))
    header = None
    for row in reader:
        if header is None:
            if not row:
                continue
            header = [h.strip().lower() for h in row]
            missing = [c for c in columns if c not in header]
            if missing:
                raise MalformedRow(reader.line_num, f"header lacks columns {missing}")
            continue
        if not row:
            continue
        if len(row) != len(header):
            raise MalformedRow(reader.line_num, f"expected {len(header)} fields, got {len(row)}")
        yield reader.line_num, dict(zip(header, row))


def _jsonl_rows(source: Source, columns: tuple[str, ...]) -> Iterator[tuple[int, dict]]:
    for line_no, line in enumerate(_text_stream(source), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise MalformedRow(line_no, f"invalid JSON: {exc.msg}") from None
        if not isinstance(obj, dict) or any(c not in obj for c in columns):
            raise MalformedRow(line_no, f"object must carry keys {list(columns)}")
        yield line_no, obj


def _rows(source: Source, fmt: str, columns: tuple[str, ...]):
    fmt = fmt.lower()
    if fmt == "csv":
        return _csv_rows(source, columns)
    if fmt in ("jsonl", "jsonlines"):
        return _jsonl_rows(source, columns)
    raise ValueError(f"unsupported format {fmt!r}")


def _string_field(row: dict, key: str, line_no: int) -> str:
    value = row[key]
    if not isinstance(value, str):
        raise MalformedRow(line_no, f"{key} must be a string")
    return value


def parse_timestamp(value, line_no: int | None = None) -> int:
    if isinstance(value, bool):
        raise NonNumericTimestamp(str(value), line_no)
    if isinstance(value, int):
        ts = value
    elif isinstance(value, str) and _TIMESTAMP_RE.fullmatch(value.strip()):
        ts = int(value.strip())
    else:
        raise NonNumericTimestamp(str(value), line_no)
    if ts <= 0:
        raise NonNumericTimestamp(str(value), line_no)
    return ts


def parse_node_table(source: Source, fmt: str = "csv") -> list[NodeRecord]:
    nodes: list[NodeRecord] = []
    seen: set[str] = set()
    for line_no, row in _rows(source, fmt, NODE_COLUMNS):
        identi_id = _string_field(row, "identi_id", line_no)
        if not identi_id:
            raise MalformedRow(line_no, "empty identi_id")
        if identi_id in seen:
            raise DuplicateNodeId(identi_id)
        seen.add(identi_id)
        name = _string_field(row, "name", line_no)
        nodes.append(NodeRecord(identi_id, name, node_type(_string_field(row, "type", line_no))))
    return nodes


def parse_edge_table(source: Source, fmt: str = "csv") -> list[EdgeRecord]:
    edges: list[EdgeRecord] = []
    for line_no, row in _rows(source, fmt, EDGE_COLUMNS):
        edges.append(
            EdgeRecord(
                _string_field(row, "src_id", line_no),
                _string_field(row, "dst_id", line_no),
                parse_timestamp(row["timestamp"], line_no),
                operation(_string_field(row, "operation", line_no)),
            )
        )
    return edges


def validate_graph(tables: GraphTables) -> list[DanglingEndpoint]:
    """List every edge endpoint that does not resolve to a node."""
    known = {n.identi_id for n in tables.nodes}
    report = []
    for i, e in enumerate(tables.edges):
        if e.src_id not in known:
            report.append(DanglingEndpoint(i, e.src_id, "src"))
        if e.dst_id not in known:
            report.append(DanglingEndpoint(i, e.dst_id, "dst"))
    return report


def add_placeholder_nodes(tables: GraphTables) -> GraphTables:
    """Append a nameless File node for every dangling endpoint id."""
    known = {n.identi_id for n in tables.nodes}
    extra = []
    for d in validate_graph(tables):
        if d.identi_id not in known:
            known.add(d.identi_id)
            extra.append(NodeRecord(d.identi_id, "", NodeType.FILE))
    return GraphTables(tables.nodes + tuple(extra), tables.edges)


def load_graph(
    nodes: Source,
    edges: Source,
    fmt: str = "csv",
    allow_dangling: bool = False,
) -> GraphTables:
    tables = GraphTables(parse_node_table(nodes, fmt), parse_edge_table(edges, fmt))
    if allow_dangling:
        return add_placeholder_nodes(tables)
    violations = validate_graph(tables)
    if violations:
        raise DanglingEdges(violations)
    return tables


# -- writing ----------------------------------------------------------------------

def node_rows(nodes: Iterable[NodeRecord]) -> Iterator[tuple]:
    for n in nodes:
        yield n.identi_id, n.name, n.node_type.value


def edge_rows(edges: Iterable[EdgeRecord]) -> Iterator[tuple]:
    for e in edges:
        yield e.src_id, e.dst_id, e.timestamp, e.operation.value


def _write(rows: Iterable[tuple], columns: tuple[str, ...], fmt: str) -> str:
    buf = io.StringIO(newline="")
    fmt = fmt.lower()
    if fmt == "csv":
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(columns)
        writer.writerows(rows)
    elif fmt in ("jsonl", "jsonlines"):
        for row in rows:
            buf.write(json.dumps(dict(zip(columns, row)), separators=(",", ":")))
            buf.write("\n")
    else:
        raise ValueError(f"unsupported format {fmt!r}")
    return buf.getvalue()


def write_node_table(nodes: Iterable[NodeRecord], fmt: str = "csv") -> str:
    return _write(node_rows(nodes), NODE_COLUMNS, fmt)


def write_edge_table(edges: Iterable[EdgeRecord], fmt: str = "csv") -> str:
    return _write(edge_rows(edges), EDGE_COLUMNS, fmt)
