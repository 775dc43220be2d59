"""Error correction table: exact recall on top of approximate memorization.

For every record head the table lists ``(position, correct character)`` pairs
wherever greedy decoding would go wrong. The corrections are applied inside
the decoding loop, so a single wrong digit does not derail the rest of the
record: after a fix the model continues from the correct prefix, and the
stored positions are exactly those where the model's next-character choice
from a correct prefix is wrong. Records that cannot be produced within the
length budget are stored whole in ``overflow``.

A position whose top-two logit gap is below ``margin`` gets a fix even when
the model's choice is right. Near-ties can flip between two evaluations of the
same context that differ only in batch shape, and the extra entry makes the
output independent of that.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import UnknownHead
from .memorizer import ModelState, generate_batch, teacher_forced_predictions
from .serializer import EOR_ID, SOR_ID, SYMBOLS, TOKEN, detokenize, head, tokenize

log = logging.getLogger(__name__)

DEFAULT_MARGIN = 1e-3


@dataclass
class ErrorCorrectionTable:
    fixes: dict[int, list[tuple[int, str]]] = field(default_factory=dict)
    overflow: dict[int, str] = field(default_factory=dict)
    heads: frozenset[int] | None = None  # known record heads; not persisted

    def token_fixes(self, v: int) -> dict[int, int]:
        """Fixes for ``v`` keyed by token-stream position (the stream starts with SOR)."""
        return {p + 1: TOKEN[c] for p, c in self.fixes.get(v, ())}

    def to_json(self) -> str:
        doc = {
            "fixes": {str(v): [[p, c] for p, c in fx] for v, fx in self.fixes.items()},
            "overflow": {str(v): s for v, s in self.overflow.items()},
        }
        return json.dumps(doc, separators=(",", ":"))

    @classmethod
    def from_json(cls, text: str) -> "ErrorCorrectionTable":
        doc = json.loads(text)
        return cls(
            fixes={int(v): [(int(p), str(c)) for p, c in fx] for v, fx in doc["fixes"].items()},
            overflow={int(v): s for v, s in doc["overflow"].items()},
        )

    def __eq__(self, other) -> bool:
        if not isinstance(other, ErrorCorrectionTable):
            return NotImplemented
        return self.fixes == other.fixes and self.overflow == other.overflow


def head_of(record: str) -> int:
    return int(record[: record.index(",")])


def prompt_tokens(v: int) -> np.ndarray:
    return np.concatenate(([SOR_ID], tokenize(head(v))))


def corrected_generate(
    state: ModelState, ect: ErrorCorrectionTable, heads: Sequence[int], max_len: int
) -> list[str]:
    """Decode each head with its fixes applied in the loop, then apply the table."""
    todo = [v for v in heads if v not in ect.overflow]
    gens = generate_batch(
        state,
        [prompt_tokens(v) for v in todo],
        max_len + 1,
        EOR_ID,
        [ect.token_fixes(v) for v in todo],
    )
    produced = {v: detokenize(g.tokens[1:]) for v, g in zip(todo, gens)}
    return [apply_ect(ect, v, produced.get(v, "")) for v in heads]


def build_ect(
    state: ModelState,
    corpus: Sequence[str],
    max_len: int | None = None,
    margin: float = DEFAULT_MARGIN,
    verify: bool = True,
) -> ErrorCorrectionTable:
    """Compare the model's greedy choices against every record in ``corpus``.

    ``max_len`` bounds the canonical-string length a query may generate;
    longer records go to the overflow map. With ``verify`` the table is
    checked by actually decoding every head, and any record that still comes
    out wrong is moved to overflow.
    """
    ect = ErrorCorrectionTable(heads=frozenset(head_of(s) for s in corpus))
    if not corpus:
        return ect
    streams = [np.concatenate(([SOR_ID], tokenize(s))) for s in corpus]
    usable = []
    for i, s in enumerate(corpus):
        if max_len is None or len(s) <= max_len:
            usable.append(i)
        else:
            ect.overflow[head_of(s)] = s
    preds = teacher_forced_predictions(state, [streams[i] for i in usable])
    for i, (pred, marg) in zip(usable, preds):
        s = corpus[i]
        v = head_of(s)
        stream = streams[i]
        start = len(head(v)) + 1  # first generated stream position
        p = np.arange(start, len(stream))
        bad = (pred[p - 1] != stream[p]) | (marg[p - 1] < margin)
        fx = [(int(q) - 1, s[int(q) - 1]) for q in p[bad]]
        if fx:
            ect.fixes[v] = fx
    if verify:
        heads = [head_of(s) for s in corpus]
        limit = max(len(s) for s in corpus) if max_len is None else max_len
        for v, s, out in zip(heads, corpus, corrected_generate(state, ect, heads, limit)):
            if out != s:
                log.warning("record %d not reproduced by corrected decoding; storing it whole", v)
                ect.fixes.pop(v, None)
                ect.overflow[v] = s
    return ect


def apply_ect(ect: ErrorCorrectionTable, v: int, generated: str) -> str:
    if ect.heads is not None and v not in ect.heads:
        raise UnknownHead(v)
    if v in ect.overflow:
        return ect.overflow[v]
    fx = ect.fixes.get(v)
    if not fx:
        return generated
    chars = list(generated)
    for p, c in fx:
        if p < len(chars):
            chars[p] = c
        elif p == len(chars):
            chars.append(c)
        else:
            raise ValueError(f"fix at {p} is past generated length {len(chars)}")
    out = "".join(chars)
    # a substituted terminator ends the record
    end = out.find(SYMBOLS[EOR_ID])
    return out if end < 0 else out[: end + 1]


@dataclass
class EctStats:
    entries: int
    fixes: int
    overflow: int
    bytes: int
    char_error_rate: float


def ect_stats(ect: ErrorCorrectionTable, corpus: Iterable[str]) -> EctStats:
    total = sum(len(s) for s in corpus)
    n_fix = sum(len(f) for f in ect.fixes.values())
    wrong = n_fix + sum(len(s) for s in ect.overflow.values())
    # an empty table is not stored at all, so it costs nothing
    size = len(ect.to_json().encode("utf-8")) if ect.fixes or ect.overflow else 0
    return EctStats(
        entries=len(ect.fixes),
        fixes=n_fix,
        overflow=len(ect.overflow),
        bytes=size,
        char_error_rate=wrong / total if total else 0.0,
    )
