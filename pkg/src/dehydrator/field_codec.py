"""Field-level redundancy removal.

Unique and repetitive string fields are replaced by dense dictionary indexes
(assigned in first-occurrence order), and timestamps by their offset from the
global minimum. The mapping table holds everything needed to invert both.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple

from .errors import EmptyEdgeTable, IndexOutOfRange, UnmappedValue
from .ingest import EdgeRecord, GraphTables, NodeRecord, NodeType, Operation

FIELDS = ("identi_id", "name", "type", "operation")


class EncodedNodeRecord(NamedTuple):
    id_idx: int
    name_idx: int
    type_idx: int


class EncodedEdgeRecord(NamedTuple):
    src_idx: int
    dst_idx: int
    t_off: int
    op_idx: int


class _Dictionary:
    """Dense bijection between values and indexes 0..k-1."""

    __slots__ = ("values", "index")

    def __init__(self, values: Iterable = ()):
        self.values: list = []
        self.index: dict = {}
        for v in values:
            self.add(v)

    def add(self, value) -> int:
        idx = self.index.get(value)
        if idx is None:
            idx = self.index[value] = len(self.values)
            self.values.append(value)
        return idx

    def __len__(self) -> int:
        return len(self.values)


@dataclass
class MappingTable:
    identi_id: _Dictionary = field(default_factory=_Dictionary)
    name: _Dictionary = field(default_factory=_Dictionary)
    type: _Dictionary = field(default_factory=_Dictionary)
    operation: _Dictionary = field(default_factory=_Dictionary)
    time_base: int = 0

    def forward(self, field_name: str, value) -> int:
        try:
            return getattr(self, field_name).index[value]
        except KeyError:
            raise UnmappedValue(field_name, value) from None

    def inverse(self, field_name: str, index: int):
        values = getattr(self, field_name).values
        if not 0 <= index < len(values):
            raise IndexOutOfRange(field_name, index)
        return values[index]

    def to_json(self) -> str:
        doc = {
            "identi_id": self.identi_id.values,
            "name": self.name.values,
            "type": [t.value for t in self.type.values],
            "operation": [o.value for o in self.operation.values],
            "time_base": self.time_base,
        }
        return json.dumps(doc, separators=(",", ":"))

    @classmethod
    def from_json(cls, text: str) -> "MappingTable":
        doc = json.loads(text)
        return cls(
            identi_id=_Dictionary(doc["identi_id"]),
            name=_Dictionary(doc["name"]),
            type=_Dictionary(NodeType(t) for t in doc["type"]),
            operation=_Dictionary(Operation(o) for o in doc["operation"]),
            time_base=int(doc["time_base"]),
        )

    def __eq__(self, other) -> bool:
        if not isinstance(other, MappingTable):
            return NotImplemented
        return self.time_base == other.time_base and all(
            getattr(self, f).values == getattr(other, f).values for f in FIELDS
        )


def build_mapping(tables: GraphTables) -> MappingTable:
    if not tables.edges:
        raise EmptyEdgeTable()
    mt = MappingTable()
    for n in tables.nodes:
        mt.identi_id.add(n.identi_id)
        mt.name.add(n.name)
        mt.type.add(n.node_type)
    # Edge endpoints share the node-id namespace; unvalidated tables may add ids here.
    for e in tables.edges:
        mt.identi_id.add(e.src_id)
        mt.identi_id.add(e.dst_id)
        mt.operation.add(e.operation)
    mt.time_base = min(e.timestamp for e in tables.edges)
    return mt


def encode_fields(
    tables: GraphTables, mt: MappingTable
) -> tuple[list[EncodedNodeRecord], list[EncodedEdgeRecord]]:
    fwd = mt.forward
    nodes = [
        EncodedNodeRecord(fwd("identi_id", n.identi_id), fwd("name", n.name), fwd("type", n.node_type))
        for n in tables.nodes
    ]
    ids = mt.identi_id.index
    ops = mt.operation.index
    base = mt.time_base
    edges = []
    for e in tables.edges:
        try:
            src, dst, op = ids[e.src_id], ids[e.dst_id], ops[e.operation]
        except KeyError:
            # slow path only to name the offending field
            src, dst, op = fwd("identi_id", e.src_id), fwd("identi_id", e.dst_id), fwd("operation", e.operation)
        if e.timestamp < base:
            raise UnmappedValue("timestamp", e.timestamp)
        edges.append(EncodedEdgeRecord(src, dst, e.timestamp - base, op))
    return nodes, edges


def decode_nodes(nodes: Iterable[EncodedNodeRecord], mt: MappingTable) -> list[NodeRecord]:
    inv = mt.inverse
    return [
        NodeRecord(inv("identi_id", n.id_idx), inv("name", n.name_idx), inv("type", n.type_idx))
        for n in nodes
    ]


def decode_edges(edges: Iterable[EncodedEdgeRecord], mt: MappingTable) -> list[EdgeRecord]:
    inv = mt.inverse
    base = mt.time_base
    out = []
    for e in edges:
        if e.t_off < 0:
            raise IndexOutOfRange("timestamp", e.t_off)
        out.append(
            EdgeRecord(inv("identi_id", e.src_idx), inv("identi_id", e.dst_idx), e.t_off + base, inv("operation", e.op_idx))
        )
    return out


def decode_fields(
    nodes: Iterable[EncodedNodeRecord], edges: Iterable[EncodedEdgeRecord], mt: MappingTable
) -> GraphTables:
    return GraphTables(decode_nodes(nodes, mt), decode_edges(edges, mt))


# -- text forms --------------------------------------------------------------------

def encoded_nodes_text(nodes: Iterable[EncodedNodeRecord]) -> str:
    return "".join(f"{n.id_idx},{n.name_idx},{n.type_idx}\n" for n in nodes)


def parse_encoded_nodes(text: str) -> list[EncodedNodeRecord]:
    out = []
    for line in text.splitlines():
        if line:
            a, b, c = line.split(",")
            out.append(EncodedNodeRecord(int(a), int(b), int(c)))
    return out


def encoded_edges_text(edges: Iterable[EncodedEdgeRecord]) -> str:
    return "".join(f"{e.src_idx},{e.dst_idx},{e.t_off},{e.op_idx}\n" for e in edges)


def parse_encoded_edges(text: str) -> list[EncodedEdgeRecord]:
    out = []
    for line in text.splitlines():
        if line:
            a, b, c, d = line.split(",")
            out.append(EncodedEdgeRecord(int(a), int(b), int(c), int(d)))
    return out
