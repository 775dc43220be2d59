"""Query engine over a dehydrated build.

A node lookup goes through the mapping table and the encoded node table. An
incoming-edge lookup prompts the model with the node's record head, repairs
the output with the error correction table, parses the record and expands it
back into edges. Backtracking is a breadth-first search over incoming edges.
"""

from __future__ import annotations

import time
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field

from .ect import ErrorCorrectionTable, corrected_generate
from .errors import CorruptArtifact, DehydratorError, GrammarError, UnknownNode
from .field_codec import EncodedEdgeRecord, EncodedNodeRecord, MappingTable, decode_edges, decode_nodes
from .hier_codec import hierarchical_decode
from .ingest import EdgeRecord, NodeRecord, write_edge_table
from .memorizer import ModelState
from .serializer import parse

DEFAULT_DEPTH = 4


@dataclass
class QueryStats:
    generated_chars: int = 0
    inference_seconds: float = 0.0
    decode_seconds: float = 0.0

    def to_dict(self) -> dict:
        return {
            "generated_chars": self.generated_chars,
            "inference_seconds": self.inference_seconds,
            "decode_seconds": self.decode_seconds,
        }


@dataclass
class BfsResult:
    edges: list[EdgeRecord]
    frontiers: list[set[str]]  # frontiers[0] == {root}; frontiers[k] is first reached at depth k
    stats: QueryStats = field(default_factory=QueryStats)


class QueryEngine:
    """Read-only view of one build: MT, NT_en, MMT, model and ECT.

    ``max_len`` is the generation budget the ECT was built with. Decoded
    records are cached per node index.
    """

    def __init__(
        self,
        mt: MappingTable,
        nodes: Sequence[EncodedNodeRecord],
        mmt: Mapping[int, Sequence[int]],
        state: ModelState,
        ect: ErrorCorrectionTable,
        max_len: int,
        build_id: str | None = None,
    ):
        self.mt = mt
        self.mmt = {int(v): list(p) for v, p in mmt.items()}
        self.state = state
        self.ect = ect
        self.ect.heads = frozenset(self.mmt)
        self.max_len = max_len
        self.build_id = build_id
        self._nodes = {n.id_idx: n for n in nodes}
        self._cache: dict[int, list[EncodedEdgeRecord]] = {}
        self.stats = QueryStats()

    # -- lookups -----------------------------------------------------------------------

    def index_of(self, identi_id: str) -> int:
        idx = self.mt.identi_id.index.get(identi_id)
        if idx is None:
            raise UnknownNode(identi_id)
        return idx

    def query_node(self, identi_id: str) -> NodeRecord:
        n = self._nodes.get(self.index_of(identi_id))
        if n is None:
            raise UnknownNode(identi_id)
        return decode_nodes([n], self.mt)[0]

    def _incoming_encoded(self, vs: Sequence[int], stats: QueryStats) -> dict[int, list[EncodedEdgeRecord]]:
        todo = sorted({v for v in vs if v in self.mmt and v not in self._cache})
        if todo:
            t0 = time.perf_counter()
            texts = corrected_generate(self.state, self.ect, todo, self.max_len)
            t1 = time.perf_counter()
            for v, text in zip(todo, texts):
                self._cache[v] = self._decode_record(v, text)
            stats.generated_chars += sum(len(t) for t in texts)
            stats.inference_seconds += t1 - t0
            stats.decode_seconds += time.perf_counter() - t1
        return {v: self._cache.get(v, []) for v in vs}

    def _decode_record(self, v: int, text: str) -> list[EncodedEdgeRecord]:
        try:
            record = parse(text)
            edges = hierarchical_decode([record])
        except (GrammarError, DehydratorError) as exc:
            raise CorruptArtifact(f"record {v} does not decode: {exc}") from exc
        if record.v != v or list(record.parents) != self.mmt[v]:
            raise CorruptArtifact(f"record {v} disagrees with the merge mapping table")
        return edges

    def query_incoming(self, identi_id: str) -> list[EdgeRecord]:
        v = self.index_of(identi_id)
        return decode_edges(self._incoming_encoded([v], self.stats)[v], self.mt)

    def batch_incoming(self, ids: Sequence[str]) -> list[list[EdgeRecord] | UnknownNode]:
        """Incoming edges for each id; unknown ids yield an :class:`UnknownNode` in place."""
        if not ids:
            raise ValueError("batch_incoming needs at least one id")
        idx: list[int | UnknownNode] = []
        for i in ids:
            try:
                idx.append(self.index_of(i))
            except UnknownNode as exc:
                idx.append(exc)
        found = self._incoming_encoded([v for v in idx if isinstance(v, int)], self.stats)
        return [v if isinstance(v, UnknownNode) else decode_edges(found[v], self.mt) for v in idx]

    # -- backtracking --------------------------------------------------------------------

    def backtrack_bfs(
        self,
        root: str,
        depth: int = DEFAULT_DEPTH,
        time_window: tuple[int, int] | None = None,
    ) -> BfsResult:
        """Reverse BFS from ``root`` up to ``depth`` hops.

        With ``time_window = (t_lo, t_hi)`` only edges whose timestamp lies in
        the closed interval are returned or followed. Each node is expanded at
        most once, so every original edge appears at most once.
        """
        if depth < 1:
            raise ValueError("depth must be >= 1")
        start = self.index_of(root)
        stats = QueryStats()
        lo_hi = None
        if time_window is not None:
            t_lo, t_hi = time_window
            base = self.mt.time_base
            lo_hi = (t_lo - base, t_hi - base)
        visited = {start}
        frontier = [start]
        frontiers = [{start}]
        out: list[EncodedEdgeRecord] = []
        for _ in range(depth):
            incoming = self._incoming_encoded(frontier, stats)
            nxt: list[int] = []
            for v in frontier:
                for e in incoming[v]:
                    if lo_hi is not None and not lo_hi[0] <= e.t_off <= lo_hi[1]:
                        continue
                    out.append(e)
                    if e.src_idx not in visited:
                        visited.add(e.src_idx)
                        nxt.append(e.src_idx)
            frontiers.append(set(nxt))
            frontier = sorted(nxt)
            if not frontier:
                break
        inv = self.mt.identi_id.values
        self.stats.generated_chars += stats.generated_chars
        self.stats.inference_seconds += stats.inference_seconds
        self.stats.decode_seconds += stats.decode_seconds
        return BfsResult(decode_edges(out, self.mt), [{inv[v] for v in f} for f in frontiers], stats)


def format_edges(edges: Sequence[EdgeRecord], fmt: str = "jsonl") -> str:
    return write_edge_table(edges, fmt)
