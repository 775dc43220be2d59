"""Synthetic provenance graphs with a controlled average degree.

The generator emits ``n_edges`` events over ``n_nodes`` nodes, so the average
degree is exactly ``n_edges / n_nodes``. Events come in bursts: one
destination, one operation, one timestamp, several sources. Destinations are
drawn Zipf-like over a random node ranking, which yields hub nodes. Each
destination reuses earlier sources following a Chinese-restaurant process, so
heavily written nodes accumulate repeat writers rather than a fresh parent per
event. Burst lengths follow a truncated power law capped at ``burst_size``.

With ``creation_edges`` every node except one root process also receives the
edge that created it (Fork, Write or Sendto from an existing process), so every
node heads a record. :func:`p_series` turns this on: it models lab captures in
which most nodes see only a handful of events, whereas the defaults model a
hub-dominated production capture.

Operations are consistent with the endpoint types:

============  ==========================================
destination   incoming (operation, source type)
============  ==========================================
File          (Write, Process), (Execute, Process)
Process       (Read, File), (Recvfr, Socket), (Fork, Process)
Socket        (Sendto, Process)
============  ==========================================
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InfeasibleSpec
from .ingest import EdgeRecord, GraphTables, NodeRecord, NodeType, Operation

INCOMING = {
    NodeType.FILE: ((Operation.WRITE, NodeType.PROCESS), (Operation.EXECUTE, NodeType.PROCESS)),
    NodeType.PROCESS: (
        (Operation.READ, NodeType.FILE),
        (Operation.RECVFR, NodeType.SOCKET),
        (Operation.FORK, NodeType.PROCESS),
    ),
    NodeType.SOCKET: ((Operation.SENDTO, NodeType.PROCESS),),
}

_NAMES = {
    NodeType.PROCESS: [
        "sshd", "bash", "firefox", "imapd", "cron", "python3", "nginx", "postgres", "systemd",
        "sudo", "vim", "gcc", "make", "curl", "wget", "tar", "java", "node", "dockerd", "top",
    ],
    NodeType.FILE: [
        "/etc/passwd", "/etc/hosts", "/var/log/syslog", "/tmp/x", "/usr/bin/python3",
        "/usr/lib/libc.so.6", "/home/user/.bashrc", "/var/mail/user", "/etc/ld.so.cache",
        "/proc/self/stat", "/dev/null", "/usr/bin/bash", "/etc/resolv.conf", "/var/tmp/a.out",
    ],
    NodeType.SOCKET: [
        "10.0.0.1:22", "10.0.0.7:443", "192.168.1.5:993", "8.8.8.8:53", "172.16.0.9:80",
        "10.0.3.2:5432", "127.0.0.1:631",
    ],
}


@dataclass(frozen=True)
class SynthSpec:
    n_nodes: int
    n_edges: int
    process_share: float = 0.45
    file_share: float = 0.45
    socket_share: float = 0.10
    zipf_exponent: float = 1.1
    burst_size: int = 32
    burst_exponent: float = 1.5   # P(k) ~ k**-exponent for burst length k <= burst_size
    reuse_concentration: float = 1.0  # CRP parameter; larger -> more distinct parents
    tick_probability: float = 0.125  # chance the clock advances one second between bursts
    creation_edges: bool = False  # every node but the first process gets an edge from its creator
    time_base: int = 1522706824
    seed: int = 0

    @property
    def target_d_avg(self) -> float:
        return self.n_edges / self.n_nodes


def _type_counts(spec: SynthSpec) -> dict[NodeType, int]:
    shares = np.array([spec.process_share, spec.file_share, spec.socket_share], dtype=float)
    if (shares < 0).any() or shares.sum() <= 0:
        raise InfeasibleSpec("type shares must be non-negative and not all zero")
    shares = shares / shares.sum()
    raw = shares * spec.n_nodes
    counts = np.floor(raw).astype(int)
    for i in np.argsort(-(raw - counts))[: spec.n_nodes - counts.sum()]:
        counts[i] += 1
    return dict(zip((NodeType.PROCESS, NodeType.FILE, NodeType.SOCKET), counts.tolist()))


def generate(spec: SynthSpec) -> GraphTables:
    if spec.n_nodes < 2 or spec.n_edges < 1:
        raise InfeasibleSpec("need at least two nodes and one edge")
    if spec.burst_size < 1:
        raise InfeasibleSpec("burst_size must be >= 1")
    rng = np.random.default_rng(spec.seed)
    counts = _type_counts(spec)

    types = np.array([t for t, c in counts.items() for _ in range(c)], dtype=object)
    rng.shuffle(types)
    ids: set[str] = set()
    nodes = []
    for t in types:
        while True:
            ident = f"{int(rng.integers(0, 2**63)):016X}"
            if ident not in ids:
                break
        ids.add(ident)
        pool = _NAMES[t]
        nodes.append(NodeRecord(ident, pool[int(rng.integers(len(pool)))], t))

    by_type: dict[NodeType, np.ndarray] = {
        t: np.array([i for i, n in enumerate(nodes) if n.node_type is t], dtype=np.int64) for t in NodeType
    }

    def admissible(i: int):
        t = nodes[i].node_type
        out = []
        for op, src_t in INCOMING[t]:
            pool = by_type[src_t]
            if len(pool) > 1 or (len(pool) == 1 and pool[0] != i):
                out.append((op, src_t))
        return out

    options = [admissible(i) for i in range(len(nodes))]
    dst_candidates = np.array([i for i, o in enumerate(options) if o], dtype=np.int64)
    if len(dst_candidates) == 0:
        raise InfeasibleSpec("no node type mix admits any edge")
    ranked = rng.permutation(dst_candidates)
    weights = 1.0 / np.arange(1, len(ranked) + 1) ** spec.zipf_exponent
    dst_cdf = np.cumsum(weights / weights.sum())

    lengths = np.arange(1, spec.burst_size + 1)
    burst_p = lengths.astype(float) ** -spec.burst_exponent
    burst_cdf = np.cumsum(burst_p / burst_p.sum())

    parents: dict[tuple[int, NodeType], list[int]] = {}
    edges: list[EdgeRecord] = []
    clock = spec.time_base
    theta = spec.reuse_concentration

    # Creation order: a process first, then the rest in random order. Each
    # created node gets one edge from an already existing process.
    creations: list[int] = []
    processes = by_type[NodeType.PROCESS]
    if spec.creation_edges and len(processes):
        root = int(processes[0])
        order = [root] + [int(i) for i in rng.permutation(len(nodes)) if i != root]
        creations = order[1:]
        if len(creations) > spec.n_edges:
            raise InfeasibleSpec("creation edges alone exceed n_edges")
        born = [root]
    next_creation = 0

    while len(edges) < spec.n_edges:
        if rng.random() < spec.tick_probability:
            clock += 1
        remaining = spec.n_edges - len(edges)
        left = len(creations) - next_creation
        if left and rng.random() < left / remaining * 4:
            node = creations[next_creation]
            next_creation += 1
            src = born[int(rng.integers(len(born)))]
            op = {NodeType.PROCESS: Operation.FORK, NodeType.FILE: Operation.WRITE}.get(
                nodes[node].node_type, Operation.SENDTO
            )
            parents.setdefault((node, NodeType.PROCESS), []).append(src)
            edges.append(EdgeRecord(nodes[src].identi_id, nodes[node].identi_id, clock, op))
            if nodes[node].node_type is NodeType.PROCESS:
                born.append(node)
            continue
        if left >= remaining:
            continue
        dst = int(ranked[min(np.searchsorted(dst_cdf, rng.random()), len(ranked) - 1)])
        k = int(lengths[min(np.searchsorted(burst_cdf, rng.random()), len(lengths) - 1)])
        k = min(k, remaining - left)
        op, src_t = options[dst][int(rng.integers(len(options[dst])))]
        pool = by_type[src_t]
        seen = parents.setdefault((dst, src_t), [])
        dst_id = nodes[dst].identi_id
        for _ in range(k):
            # Chinese-restaurant draw: reuse an earlier parent w.p. n/(n + theta)
            if seen and rng.random() < len(seen) / (len(seen) + theta):
                src = seen[int(rng.integers(len(seen)))]
            else:
                src = int(pool[int(rng.integers(len(pool)))])
                while src == dst:
                    src = int(pool[int(rng.integers(len(pool)))])
                seen.append(src)
            edges.append(EdgeRecord(nodes[src].identi_id, dst_id, clock, op))
    return GraphTables(nodes, edges)


def p_series(scale: int = 100_000, seed: int = 0, **overrides) -> list[GraphTables]:
    """Five corpora with ``scale`` edges each and average degree 1..5."""
    if scale < 10_000:
        raise InfeasibleSpec("p_series needs at least 10k edges per dataset")
    overrides.setdefault("creation_edges", True)
    return [
        generate(SynthSpec(n_nodes=scale // d, n_edges=scale, seed=seed + d, **overrides))
        for d in range(1, 6)
    ]
