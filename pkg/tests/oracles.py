"""Independent reference implementations used to check the package.

None of these import the code under test beyond plain record types; each
recomputes its answer by brute force from the raw tables.
"""

from __future__ import annotations

from collections import Counter, defaultdict, deque

import numpy as np

from dehydrator.ingest import EdgeRecord, GraphTables


def edge_key(e: EdgeRecord) -> tuple:
    return (e.src_id, e.dst_id, e.timestamp, e.operation.value)


def incoming_scan(tables: GraphTables, identi_id: str) -> Counter:
    """Multiset of edges whose destination is ``identi_id``, by full scan."""
    return Counter(edge_key(e) for e in tables.edges if e.dst_id == identi_id)


def reverse_bfs(tables: GraphTables, root: str, depth: int, window=None) -> Counter:
    """Reverse BFS over an adjacency list built from the raw edge table."""
    into = defaultdict(list)
    for e in tables.edges:
        into[e.dst_id].append(e)
    seen = {root}
    queue = deque([(root, 0)])
    out = Counter()
    while queue:
        v, d = queue.popleft()
        if d == depth:
            continue
        for e in into[v]:
            if window is not None and not window[0] <= e.timestamp <= window[1]:
                continue
            out[edge_key(e)] += 1
            if e.src_id not in seen:
                seen.add(e.src_id)
                queue.append((e.src_id, d + 1))
    return out


def hier_units(tables: GraphTables) -> tuple[int, int]:
    """(flat units, hierarchical units) of the 4-byte size model, from raw rows."""
    m = len(tables.edges)
    ops = defaultdict(set)
    op_times = defaultdict(set)
    parents = defaultdict(set)
    for e in tables.edges:
        ops[e.dst_id].add(e.operation)
        op_times[e.dst_id].add((e.operation, e.timestamp))
        parents[e.dst_id].add(e.src_id)
    n = len({x for e in tables.edges for x in (e.src_id, e.dst_id)} | {nd.identi_id for nd in tables.nodes})
    hi = sum(map(len, ops.values())) + sum(map(len, op_times.values())) + sum(map(len, parents.values())) + 3 * n + m
    return 4 * m, hi


def runs(values) -> list[tuple[int, int, int]]:
    """Maximal runs of consecutive integers with equal multiplicity, via a dense count array."""
    values = list(values)
    if not values:
        return []
    counts = np.bincount(np.asarray(values))
    out = []
    i = 0
    while i < len(counts):
        if counts[i] == 0:
            i += 1
            continue
        j = i
        while j + 1 < len(counts) and counts[j + 1] == counts[i]:
            j += 1
        out.append((i, j, int(counts[i])))
        i = j + 1
    return out


def char_diff(generated: str, canonical: str) -> list[tuple[int, str]]:
    assert len(generated) == len(canonical)
    return [(p, c) for p, (g, c) in enumerate(zip(generated, canonical)) if g != c]
