"""On-disk layout of a build and the manifest that binds its artifacts.

A build directory holds::

    manifest.json  mt.json  nt_en.csv  mmt.json  et_hi.txt  model.ckpt  ect.json

The manifest records the SHA-256 of every artifact file; loading recomputes
them and refuses a directory whose files do not match. The build id is the
digest of the sorted ``name:digest`` lines, so two builds with identical
artifacts share an id.
"""

from __future__ import annotations

import datetime as _dt
import hashlib
import json
import os
from dataclasses import dataclass, field
from pathlib import Path

from .ect import ErrorCorrectionTable
from .errors import CorruptArtifact, DigestMismatch, VersionMismatch
from .field_codec import EncodedNodeRecord, MappingTable, encoded_nodes_text, parse_encoded_nodes
from .hier_codec import mmt_from_json, mmt_to_json
from .memorizer import ModelState, from_checkpoint, to_checkpoint
from .query import QueryEngine
from .serializer import read_corpus, write_corpus

FORMAT_VERSION = 1

ARTIFACT_FILES = {
    "mt": "mt.json",
    "nt_en": "nt_en.csv",
    "mmt": "mmt.json",
    "et_hi": "et_hi.txt",
    "model": "model.ckpt",
    "ect": "ect.json",
}
MANIFEST = "manifest.json"


@dataclass
class Build:
    """Everything the query path needs, plus the record corpus it was trained on."""

    mt: MappingTable
    nodes: list[EncodedNodeRecord]
    mmt: dict[int, list[int]]
    corpus: list[str]
    L: int
    state: ModelState
    ect: ErrorCorrectionTable
    max_len: int
    n_edges: int = 0
    extra: dict = field(default_factory=dict)  # free-form metadata kept in the manifest

    def artifact_bytes(self) -> dict[str, bytes]:
        return {
            "mt": self.mt.to_json().encode("utf-8"),
            "nt_en": encoded_nodes_text(self.nodes).encode("utf-8"),
            "mmt": mmt_to_json(self.mmt).encode("utf-8"),
            "et_hi": write_corpus(self.corpus, self.L),
            "model": to_checkpoint(self.state),
            "ect": self.ect.to_json().encode("utf-8"),
        }

    def stats(self) -> dict:
        n = len(self.mt.identi_id)
        return {
            "n": n,
            "m": self.n_edges,
            "L": self.L,
            "d_avg": self.n_edges / n if n else 0.0,
            "records": len(self.corpus),
        }

    def engine(self, build_id: str | None = None) -> QueryEngine:
        return QueryEngine(self.mt, self.nodes, self.mmt, self.state, self.ect, self.max_len, build_id)


def sha256(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def build_id(digests: dict[str, str]) -> str:
    return sha256("".join(f"{k}:{digests[k]}\n" for k in sorted(digests)).encode("ascii"))


def save_build(directory: str | os.PathLike, build: Build) -> dict:
    """Write all artifacts and the manifest; returns the manifest."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    blobs = build.artifact_bytes()
    digests = {}
    for name, data in blobs.items():
        (d / ARTIFACT_FILES[name]).write_bytes(data)
        digests[name] = sha256(data)
    manifest = {
        "format_version": FORMAT_VERSION,
        "created": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
        "build_id": build_id(digests),
        "artifacts": {
            name: {"file": ARTIFACT_FILES[name], "sha256": digests[name], "bytes": len(blobs[name])}
            for name in ARTIFACT_FILES
        },
        "stats": build.stats(),
        "max_len": build.max_len,
        "extra": build.extra,
    }
    (d / MANIFEST).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return manifest


def read_manifest(directory: str | os.PathLike) -> dict:
    path = Path(directory) / MANIFEST
    try:
        manifest = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise CorruptArtifact(f"no manifest in {directory}") from None
    except json.JSONDecodeError as exc:
        raise CorruptArtifact(f"unreadable manifest: {exc}") from None
    version = manifest.get("format_version")
    if version != FORMAT_VERSION:
        raise VersionMismatch(version, FORMAT_VERSION)
    return manifest


def load_artifacts(directory: str | os.PathLike) -> tuple[dict, dict[str, bytes]]:
    """Manifest and verified raw bytes of every artifact."""
    d = Path(directory)
    manifest = read_manifest(d)
    blobs = {}
    recorded = manifest.get("artifacts", {})
    for name, fname in ARTIFACT_FILES.items():
        if name not in recorded:
            raise CorruptArtifact(f"manifest does not list {name}")
        try:
            data = (d / fname).read_bytes()
        except FileNotFoundError:
            raise CorruptArtifact(f"missing artifact {fname}") from None
        actual = sha256(data)
        if actual != recorded[name]["sha256"]:
            raise DigestMismatch(name, recorded[name]["sha256"], actual)
        blobs[name] = data
    if build_id({k: recorded[k]["sha256"] for k in ARTIFACT_FILES}) != manifest.get("build_id"):
        raise CorruptArtifact("build id does not match the artifact digests")
    return manifest, blobs


def load_build(directory: str | os.PathLike) -> Build:
    manifest, blobs = load_artifacts(directory)
    corpus, header = read_corpus(blobs["et_hi"])
    stats = manifest.get("stats", {})
    return Build(
        mt=MappingTable.from_json(blobs["mt"].decode("utf-8")),
        nodes=parse_encoded_nodes(blobs["nt_en"].decode("utf-8")),
        mmt=mmt_from_json(blobs["mmt"].decode("utf-8")),
        corpus=corpus,
        L=header["L"],
        state=from_checkpoint(blobs["model"]),
        ect=ErrorCorrectionTable.from_json(blobs["ect"].decode("utf-8")),
        max_len=int(manifest["max_len"]),
        n_edges=int(stats.get("m", 0)),
        extra=manifest.get("extra", {}),
    )


def open_engine(directory: str | os.PathLike) -> QueryEngine:
    manifest = read_manifest(directory)
    return load_build(directory).engine(manifest["build_id"])
