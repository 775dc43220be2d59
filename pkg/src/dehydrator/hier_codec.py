"""Structure-level redundancy removal.

Every destination node's incoming edges are folded into one
:class:`HierRecord`: the node, the first and last timestamp of the group, the
ordered list of distinct parents, and a nested ``operation -> timeOffset ->
nodeOffsets`` map. Runs of consecutive nodeOffsets collapse into ranges.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from .errors import CorruptRecord
from .field_codec import EncodedEdgeRecord

# (lo, hi, count): offsets lo..hi inclusive, each present ``count`` times
Range = tuple[int, int, int]
RangeList = tuple[Range, ...]

# Bytes per field in the fixed-width size model (int4).
FIELD_BYTES = 4


def to_ranges(offsets: Iterable[int]) -> RangeList:
    """Compact a multiset of offsets into maximal runs of equal multiplicity.

    >>> to_ranges([1, 2, 3, 5, 7, 8, 9])
    ((1, 3, 1), (5, 5, 1), (7, 9, 1))
    >>> to_ranges([0, 0])
    ((0, 0, 2),)
    """
    counts = Counter(offsets)
    ranges: list[list[int]] = []
    for off in sorted(counts):
        c = counts[off]
        if ranges and ranges[-1][1] == off - 1 and ranges[-1][2] == c:
            ranges[-1][1] = off
        else:
            ranges.append([off, off, c])
    return tuple((lo, hi, c) for lo, hi, c in ranges)


def expand_ranges(ranges: RangeList) -> list[int]:
    out = []
    for lo, hi, c in ranges:
        for off in range(lo, hi + 1):
            out.extend([off] * c)
    return out


def _ranges_canonical(ranges: RangeList) -> bool:
    prev = None
    for lo, hi, c in ranges:
        if lo < 0 or hi < lo or c < 1:
            return False
        if prev is not None:
            plo, phi, pc = prev
            if lo <= phi or (lo == phi + 1 and c == pc):
                return False
        prev = (lo, hi, c)
    return True


@dataclass(frozen=True)
class HierRecord:
    v: int
    start_time: int
    end_time: int
    parents: tuple[int, ...]
    merged: Mapping[int, Mapping[int, RangeList]] = field(default_factory=dict)

    def edge_count(self) -> int:
        return sum(
            (hi - lo + 1) * c
            for times in self.merged.values()
            for ranges in times.values()
            for lo, hi, c in ranges
        )


def hierarchical_encode(
    et_en: Sequence[EncodedEdgeRecord],
) -> tuple[list[HierRecord], dict[int, list[int]]]:
    """Group edges by destination. Returns the records (ascending ``v``) and the MMT."""
    if not et_en:
        raise ValueError("hierarchical_encode needs at least one edge")
    groups: dict[int, list[EncodedEdgeRecord]] = {}
    for e in et_en:
        groups.setdefault(e.dst_idx, []).append(e)

    records = []
    mmt: dict[int, list[int]] = {}
    for v in sorted(groups):
        edges = groups[v]
        slot: dict[int, int] = {}
        for e in edges:
            if e.src_idx not in slot:
                slot[e.src_idx] = len(slot)
        start = min(e.t_off for e in edges)
        end = max(e.t_off for e in edges)
        nested: dict[int, dict[int, list[int]]] = {}
        for e in edges:
            nested.setdefault(e.op_idx, {}).setdefault(e.t_off - start, []).append(slot[e.src_idx])
        merged = {
            op: {t: to_ranges(nested[op][t]) for t in sorted(nested[op])}
            for op in sorted(nested)
        }
        parents = tuple(slot)
        mmt[v] = list(parents)
        records.append(HierRecord(v, start, end, parents, merged))
    return records, mmt


def check_record(r: HierRecord) -> None:
    """Raise :class:`CorruptRecord` unless ``r`` satisfies the record invariants."""
    if r.start_time < 0 or r.end_time < r.start_time:
        raise CorruptRecord(r.v, f"time bounds {r.start_time}..{r.end_time}")
    if not r.parents:
        raise CorruptRecord(r.v, "empty parent list")
    if len(set(r.parents)) != len(r.parents):
        raise CorruptRecord(r.v, "duplicate parent")
    if not r.merged:
        raise CorruptRecord(r.v, "no edges")
    span = r.end_time - r.start_time
    seen_times = set()
    used = set()
    for op, times in r.merged.items():
        if not times:
            raise CorruptRecord(r.v, f"operation {op} has no time entries")
        for t, ranges in times.items():
            if not 0 <= t <= span:
                raise CorruptRecord(r.v, f"time offset {t} outside 0..{span}")
            if not ranges or not _ranges_canonical(ranges):
                raise CorruptRecord(r.v, f"malformed range list {ranges}")
            if ranges[-1][1] >= len(r.parents):
                raise CorruptRecord(r.v, f"node offset {ranges[-1][1]} >= {len(r.parents)} parents")
            seen_times.add(t)
            for lo, hi, _ in ranges:
                used.update(range(lo, hi + 1))
    if min(seen_times) != 0 or max(seen_times) != span:
        raise CorruptRecord(r.v, "start/end times not attained by any edge")
    if len(used) != len(r.parents):
        raise CorruptRecord(r.v, "unreferenced parent")


def hierarchical_decode(records: Iterable[HierRecord]) -> list[EncodedEdgeRecord]:
    out = []
    for r in records:
        check_record(r)
        for op, times in r.merged.items():
            for t, ranges in times.items():
                for off in expand_ranges(ranges):
                    out.append(EncodedEdgeRecord(r.parents[off], r.v, r.start_time + t, op))
    return out


def mmt_to_json(mmt: Mapping[int, Sequence[int]]) -> str:
    return json.dumps({str(v): list(p) for v, p in mmt.items()}, separators=(",", ":"))


def mmt_from_json(text: str) -> dict[int, list[int]]:
    return {int(v): [int(u) for u in p] for v, p in json.loads(text).items()}


# -- size model --------------------------------------------------------------------

@dataclass
class SizeAnalysis:
    n: int
    m: int
    d_avg: float
    bytes_et_en: int
    bytes_et_hi: int
    sum_ops: int          # sum over v of m_vo
    sum_op_times: int     # sum over v and o of m_vot
    sum_parents: int      # sum over v of p_v
    per_node: dict[int, tuple[int, int, int]]  # v -> (m_vo, sum_o m_vot, p_v)
    text_bytes_et_en: int | None = None
    text_bytes_et_hi: int | None = None

    @property
    def applicable(self) -> bool:
        return self.bytes_et_hi < self.bytes_et_en


def analyze_sizes(
    et_en: Sequence[EncodedEdgeRecord],
    records: Sequence[HierRecord],
    n_nodes: int | None = None,
    text_bytes_et_en: int | None = None,
    text_bytes_et_hi: int | None = None,
) -> SizeAnalysis:
    """Evaluate the fixed-width byte model for the flat and hierarchical tables.

    With every field stored as a 4-byte integer the flat table costs
    ``4 * 4 * m`` bytes. A record costs one field for ``v``, two for the time
    bounds, ``p_v`` for the parent list, one per distinct operation (``m_vo``),
    one per distinct (operation, timeOffset) pair (``m_vot`` summed over the
    node's operations) and one nodeOffset per edge. Summed over the node set::

        units = sum m_vo + sum sum m_vot + sum p_v + 3n + m

    The ``3n`` term ranges over every node of the graph, as in the closed form;
    pass ``n_nodes`` when the graph has isolated nodes that ``et_en`` does not
    mention. The inner sums are read as iterating over the node's distinct
    operations, which is the reading under which the per-node content term
    collapses to the closed form above.
    """
    m = len(et_en)
    if n_nodes is None:
        n_nodes = len({e.src_idx for e in et_en} | {e.dst_idx for e in et_en})
    per_node = {}
    for r in records:
        m_vo = len(r.merged)
        m_vot = sum(len(times) for times in r.merged.values())
        per_node[r.v] = (m_vo, m_vot, len(r.parents))
    sum_ops = sum(x[0] for x in per_node.values())
    sum_op_times = sum(x[1] for x in per_node.values())
    sum_parents = sum(x[2] for x in per_node.values())
    units_hi = sum_ops + sum_op_times + sum_parents + 3 * n_nodes + m
    return SizeAnalysis(
        n=n_nodes,
        m=m,
        d_avg=m / n_nodes if n_nodes else 0.0,
        bytes_et_en=FIELD_BYTES * 4 * m,
        bytes_et_hi=FIELD_BYTES * units_hi,
        sum_ops=sum_ops,
        sum_op_times=sum_op_times,
        sum_parents=sum_parents,
        per_node=per_node,
        text_bytes_et_en=text_bytes_et_en,
        text_bytes_et_hi=text_bytes_et_hi,
    )


def predict_applicability(n: int, m: int) -> bool:
    if n <= 0:
        raise ValueError("n must be positive")
    return m >= 3 * n
