"""Canonical text form of hierarchical records, the character vocabulary,
and segmentation of the corpus into training windows.

Grammar (one record)::

    record  := INT ',' INT ',' INT ',' '[' INT (',' INT)* ']' ',' merged EOR
    merged  := '[' op (';' op)* ']'
    op      := INT ':' '[' time (';' time)* ']'
    time    := INT ':' '[' range (',' range)* ']'
    range   := INT | INT '-' INT | INT '-' INT 'x' INT
    INT     := '0' | [1-9][0-9]*

Fields in order: node, start time, end time, parents, merged edges. A range
carries an ``x`` multiplicity suffix only when the count exceeds one; it is
then always written in ``lo-hi`` form. Operations, time offsets and ranges
appear in ascending order, so every record has exactly one rendering.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import GrammarError, UnknownSymbol
from .hier_codec import HierRecord, RangeList

VOCAB_VERSION = 1

SOR = "<"   # start of record; prefixes every record in the token stream
EOR = ">"   # terminator; last character of every canonical string
PAD = "_"
RESERVED = "."  # never emitted; keeps the id space at 21 symbols

SYMBOLS = tuple("0123456789") + (",", ":", ";", "[", "]", "-", "x", SOR, EOR, PAD, RESERVED)
TOKEN = {s: i for i, s in enumerate(SYMBOLS)}
VOCAB_SIZE = len(SYMBOLS)
SOR_ID = TOKEN[SOR]
EOR_ID = TOKEN[EOR]
PAD_ID = TOKEN[PAD]

_LOOKUP = np.full(128, -1, dtype=np.int64)
for _s, _i in TOKEN.items():
    _LOOKUP[ord(_s)] = _i
_SYMBOL_ARRAY = np.array(SYMBOLS)


# -- render / parse ------------------------------------------------------------------

def _render_range(lo: int, hi: int, c: int) -> str:
    if c > 1:
        return f"{lo}-{hi}x{c}"
    if lo == hi:
        return str(lo)
    return f"{lo}-{hi}"


def render_merged(merged) -> str:
    ops = []
    for op in sorted(merged):
        times = merged[op]
        entries = ";".join(
            f"{t}:[" + ",".join(_render_range(*r) for r in times[t]) + "]" for t in sorted(times)
        )
        ops.append(f"{op}:[{entries}]")
    return "[" + ";".join(ops) + "]"


def render(record: HierRecord) -> str:
    parents = ",".join(map(str, record.parents))
    return f"{record.v},{record.start_time},{record.end_time},[{parents}],{render_merged(record.merged)}{EOR}"


def head(v: int) -> str:
    """Query prefix of the record for node ``v``."""
    return f"{v},"


class _Parser:
    def __init__(self, s: str):
        self.s = s
        self.i = 0

    def fail(self, expected: str):
        raise GrammarError(self.i, expected)

    def peek(self) -> str:
        return self.s[self.i] if self.i < len(self.s) else ""

    def expect(self, ch: str):
        if self.peek() != ch:
            self.fail(repr(ch))
        self.i += 1

    def accept(self, ch: str) -> bool:
        if self.peek() == ch:
            self.i += 1
            return True
        return False

    def integer(self) -> int:
        start = self.i
        s = self.s
        while self.i < len(s) and "0" <= s[self.i] <= "9":
            self.i += 1
        if self.i == start:
            self.fail("digit")
        if s[start] == "0" and self.i - start > 1:
            raise GrammarError(start, "integer without leading zero")
        return int(s[start:self.i])

    def range_(self) -> tuple[int, int, int]:
        at = self.i
        lo = self.integer()
        if not self.accept("-"):
            return lo, lo, 1
        hi = self.integer()
        if self.accept("x"):
            c = self.integer()
            if c < 2 or hi < lo:
                raise GrammarError(at, "canonical range with count >= 2")
            return lo, hi, c
        if hi <= lo:
            raise GrammarError(at, "range with hi > lo")
        return lo, hi, 1

    def range_list(self) -> RangeList:
        self.expect("[")
        ranges = [self.range_()]
        while self.accept(","):
            at = self.i
            r = self.range_()
            plo, phi, pc = ranges[-1]
            if r[0] <= phi or (r[0] == phi + 1 and r[2] == pc):
                raise GrammarError(at, "ascending, maximally coalesced range")
            ranges.append(r)
        self.expect("]")
        return tuple(ranges)

    def keyed(self, item):
        """``'[' INT ':' item (';' INT ':' item)* ']'`` with strictly ascending keys."""
        self.expect("[")
        out = {}
        prev = -1
        while True:
            at = self.i
            key = self.integer()
            if key <= prev:
                raise GrammarError(at, f"key greater than {prev}")
            prev = key
            self.expect(":")
            out[key] = item()
            if not self.accept(";"):
                break
        self.expect("]")
        return out

    def record(self) -> HierRecord:
        v = self.integer()
        self.expect(",")
        start = self.integer()
        self.expect(",")
        end = self.integer()
        self.expect(",")
        self.expect("[")
        parents = [self.integer()]
        while self.accept(","):
            parents.append(self.integer())
        self.expect("]")
        self.expect(",")
        merged = self.keyed(lambda: self.keyed(self.range_list))
        self.expect(EOR)
        if self.i != len(self.s):
            self.fail("end of string")
        return HierRecord(v, start, end, tuple(parents), merged)


def parse(s: str) -> HierRecord:
    return _Parser(s).record()


# -- tokens ------------------------------------------------------------------------

def tokenize(s: str) -> np.ndarray:
    codes = np.frombuffer(s.encode("utf-8"), dtype=np.uint8)
    if len(codes) != len(s) or (codes >= 128).any():
        bad = next(ch for ch in s if ord(ch) >= 128)
        raise UnknownSymbol(bad)
    ids = _LOOKUP[codes]
    if (ids < 0).any():
        raise UnknownSymbol(s[int(np.argmax(ids < 0))])
    return ids


def detokenize(ids: Iterable[int]) -> str:
    ids = np.asarray(list(ids) if not isinstance(ids, np.ndarray) else ids, dtype=np.int64)
    if ids.size and (ids.min() < 0 or ids.max() >= VOCAB_SIZE):
        raise UnknownSymbol(str(int(ids[(ids < 0) | (ids >= VOCAB_SIZE)][0])))
    return "".join(_SYMBOL_ARRAY[ids])


# -- segmentation ---------------------------------------------------------------------

@dataclass
class SegmentedCorpus:
    """Training windows cut from ``[SOR] + record`` token streams.

    Window ``k`` of a record covers stream tokens ``k*L .. k*L+L`` (``L+1``
    tokens), so consecutive windows share one boundary token and each window
    contributes ``L`` next-token pairs. ``offsets[r]`` is ``(first window,
    window count, stream length)`` for record ``r``.
    """

    L: int
    segments: np.ndarray                     # (n_windows, L + 1) int64
    offsets: list[tuple[int, int, int]] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.segments)

    def record_stream(self, r: int) -> np.ndarray:
        first, count, length = self.offsets[r]
        parts = [self.segments[first, :]] + [self.segments[first + k, 1:] for k in range(1, count)]
        return np.concatenate(parts)[:length]

    def target_count(self) -> int:
        return int((self.segments[:, 1:] != PAD_ID).sum())


def segment(corpus: Sequence[str], L: int | None = None) -> SegmentedCorpus:
    if not corpus:
        raise ValueError("segment needs a nonempty corpus")
    if L is None:
        L = min(len(s) for s in corpus)
    windows = []
    offsets = []
    for s in corpus:
        stream = np.concatenate(([SOR_ID], tokenize(s)))
        n = len(stream)
        count = max(1, -(-(n - 1) // L))
        offsets.append((len(windows), count, n))
        for k in range(count):
            w = stream[k * L : k * L + L + 1]
            if len(w) < L + 1:
                w = np.concatenate((w, np.full(L + 1 - len(w), PAD_ID, dtype=np.int64)))
            windows.append(w)
    return SegmentedCorpus(L, np.stack(windows).astype(np.int64), offsets)


def sliding_segments(corpus: SegmentedCorpus, prefix_repeat: int = 1) -> np.ndarray:
    """Windows of ``L + 1`` tokens at every start offset of every record stream.

    These are exactly the contexts greedy decoding sees once it is ``L`` tokens
    into a record, so training on them removes the mismatch between aligned
    training windows and the sliding decode context. Short streams give one
    padded window. Deep positions fall inside up to ``L`` windows while the
    record prefix falls inside one, so the first window of every record is
    emitted ``prefix_repeat`` times.
    """
    L = corpus.L
    out = []
    for r in range(len(corpus.offsets)):
        stream = corpus.record_stream(r)
        if len(stream) < L + 1:
            stream = np.concatenate((stream, np.full(L + 1 - len(stream), PAD_ID, dtype=np.int64)))
        win = np.lib.stride_tricks.sliding_window_view(stream, L + 1)
        out.append(np.repeat(win[:1], prefix_repeat, axis=0))
        out.append(win[1:])
    return np.vstack(out).astype(np.int64)


# -- ET_hi file ------------------------------------------------------------------------

def write_corpus(corpus: Sequence[str], L: int | None = None) -> bytes:
    if L is None:
        L = min((len(s) for s in corpus), default=0)
    header = {"vocab_version": VOCAB_VERSION, "L": L, "records": len(corpus)}
    return (json.dumps(header, separators=(",", ":")) + "\n" + "".join(corpus)).encode("ascii")


def read_corpus(data: bytes) -> tuple[list[str], dict]:
    text = data.decode("ascii")
    first, _, body = text.partition("\n")
    header = json.loads(first)
    if header.get("vocab_version") != VOCAB_VERSION:
        raise GrammarError(0, f"vocab version {VOCAB_VERSION}")
    records = [r + EOR for r in body.split(EOR)[:-1]]
    if len(records) != header["records"] or "".join(records) != body:
        raise GrammarError(len(first) + 1, "record stream matching the header count")
    return records, header
