"""Exception hierarchy.

Every error raised on bad input derives from :class:`DataError`; the CLI maps
it to exit code 3. Anything else escaping a command is an internal error.
"""

from __future__ import annotations


class DehydratorError(Exception):
    """Base class for all package errors."""


class DataError(DehydratorError):
    """Input data or a persisted artifact is invalid."""


# -- ingest -----------------------------------------------------------------

class MalformedRow(DataError):
    def __init__(self, line_no: int, reason: str = "arity or type mismatch"):
        super().__init__(f"line {line_no}: {reason}")
        self.line_no = line_no


class DuplicateNodeId(DataError):
    def __init__(self, identi_id: str):
        super().__init__(f"duplicate node id {identi_id!r}")
        self.identi_id = identi_id


class UnknownNodeType(DataError):
    def __init__(self, value: str):
        super().__init__(f"unknown node type {value!r}")
        self.value = value


class UnknownOperation(DataError):
    def __init__(self, value: str):
        super().__init__(f"unknown operation {value!r}")
        self.value = value


class NonNumericTimestamp(DataError):
    def __init__(self, value: str, line_no: int | None = None):
        where = f"line {line_no}: " if line_no is not None else ""
        super().__init__(f"{where}timestamp {value!r} is not a positive integer")
        self.value = value
        self.line_no = line_no


class DanglingEdges(DataError):
    """Raised when referential integrity is required but violated."""

    def __init__(self, violations):
        self.violations = list(violations)
        head = ", ".join(str(v) for v in self.violations[:5])
        more = "" if len(self.violations) <= 5 else f" (+{len(self.violations) - 5} more)"
        super().__init__(f"dangling edge endpoints: {head}{more}")


# -- field codec --------------------------------------------------------------

class EmptyEdgeTable(DataError):
    def __init__(self):
        super().__init__("edge table is empty; time base is undefined")


class UnmappedValue(DataError):
    def __init__(self, field: str, value):
        super().__init__(f"{field} value {value!r} is missing from the mapping table")
        self.field = field
        self.value = value


class IndexOutOfRange(DataError):
    def __init__(self, field: str, index: int):
        super().__init__(f"{field} index {index} is out of range")
        self.field = field
        self.index = index


# -- hierarchical codec / serializer --------------------------------------------

class CorruptRecord(DataError):
    def __init__(self, v: int, reason: str):
        super().__init__(f"record {v}: {reason}")
        self.v = v
        self.reason = reason


class GrammarError(DataError):
    """Canonical string does not parse. ``position`` is a 0-based char index."""

    def __init__(self, position: int, expected: str):
        super().__init__(f"position {position}: expected {expected}")
        self.position = position
        self.expected = expected


class UnknownSymbol(DataError):
    def __init__(self, char: str):
        super().__init__(f"symbol {char!r} is not in the vocabulary")
        self.char = char


# -- model --------------------------------------------------------------------

class InvalidConfig(DehydratorError):
    pass


class ContextOverflow(DehydratorError):
    def __init__(self, length: int, context_len: int):
        super().__init__(f"sequence length {length} exceeds context length {context_len}")


class NonFiniteLoss(DehydratorError):
    def __init__(self, epoch: int, step: int, loss: float):
        super().__init__(f"non-finite loss {loss} at epoch {epoch}, step {step}")
        self.epoch = epoch
        self.step = step
        self.loss = loss


# -- ECT / query / store ------------------------------------------------------

class UnknownHead(DataError):
    def __init__(self, v: int):
        super().__init__(f"head {v} is not part of the corpus")
        self.v = v


class UnknownNode(DataError):
    def __init__(self, identi_id: str):
        super().__init__(f"unknown node {identi_id!r}")
        self.identi_id = identi_id


class CorruptArtifact(DataError):
    pass


class DigestMismatch(CorruptArtifact):
    def __init__(self, artifact: str, expected: str, actual: str):
        super().__init__(f"{artifact}: digest {actual[:12]} does not match manifest {expected[:12]}")
        self.artifact = artifact


class VersionMismatch(DataError):
    def __init__(self, found, supported):
        super().__init__(f"format version {found} is not supported (expected {supported})")
        self.found = found


class InfeasibleSpec(DataError):
    pass


class ZeroDuration(DataError):
    def __init__(self):
        super().__init__("latency must be positive")
