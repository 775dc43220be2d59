"""Lossless provenance graph storage: dictionary and hierarchical encoding,
a memorizing character model, and an error correction table for exact recall."""

from __future__ import annotations

__version__ = "0.1.0"

from .errors import DataError, DehydratorError
from .ingest import EdgeRecord, GraphTables, NodeRecord, NodeType, Operation, load_graph

__all__ = [
    "DataError",
    "DehydratorError",
    "EdgeRecord",
    "GraphTables",
    "NodeRecord",
    "NodeType",
    "Operation",
    "__version__",
    "load_graph",
]
