"""Versioned, content-hashed persistence for intent definitions.

Layout under the store root::

    <version>/intents.doc     human-readable JSON, stable ordering
    <version>/embeddings.bin  curated query embeddings, binary sidecar
    <version>/audit.doc       annotation audit for the snapshot, if any
    latest                    pointer file with the newest version number

Snapshots are written to a temp directory and renamed into place, so a
reader never sees a half-written version.
"""
from __future__ import annotations

import hashlib
import json
import os
import shutil
import struct
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from . import serialization
from .intent_mining import AnnotationAudit, apply_annotations
from .specific_intent import IntentDefinition, compile_patterns
from .text_pipeline import NormalizedQuery

_EMB_MAGIC = b"CCEB"


@dataclass(frozen=True)
class StoreSnapshot:
    version: int
    content_hash: str
    intents: tuple[IntentDefinition, ...]
    pattern_lists: Mapping[str, Sequence[str]]
    created_at: str
    parent_version: int | None


@dataclass(frozen=True)
class StoreDiff:
    added: tuple[str, ...]
    removed: tuple[str, ...]
    changed: tuple[str, ...]


def _intent_doc(intent: IntentDefinition) -> dict:
    return {
        "id": intent.id,
        "friendly_name": intent.friendly_name,
        "kind": intent.kind,
        "queries": [
            {
                "original": nq.original,
                "tokens": list(nq.tokens),
                "tokens_with_stopwords": list(nq.tokens_with_stopwords),
            }
            for nq, _ in intent.curated_queries
        ],
        "patterns": list(intent.patterns),
        "responses": list(intent.responses),
        "provenance": intent.provenance,
    }


def _intent_from_doc(doc: Mapping, embeddings: Sequence[np.ndarray]) -> IntentDefinition:
    queries = []
    for q, emb in zip(doc["queries"], embeddings):
        nq = NormalizedQuery(
            original=q["original"],
            tokens=tuple(q["tokens"]),
            tokens_with_stopwords=tuple(q["tokens_with_stopwords"]),
        )
        queries.append((nq, emb))
    return IntentDefinition(
        id=doc["id"],
        friendly_name=doc["friendly_name"],
        kind=doc["kind"],
        curated_queries=queries,
        patterns=list(doc["patterns"]),
        responses=list(doc["responses"]),
        provenance=dict(doc["provenance"]),
    )


def _embeddings_blob(intents: Sequence[IntentDefinition]) -> bytes:
    """Binary sidecar: per intent, the stacked curated query embeddings."""
    parts = [_EMB_MAGIC, struct.pack("<II", 1, len(intents))]
    for intent in intents:
        ident = intent.id.encode("utf-8")
        count = len(intent.curated_queries)
        dim = intent.curated_queries[0][1].shape[0] if count else 0
        parts.append(struct.pack("<III", len(ident), count, dim))
        parts.append(ident)
        for _, emb in intent.curated_queries:
            arr = np.ascontiguousarray(np.asarray(emb, dtype="<f8"))
            if arr.shape != (dim,):
                raise ValueError(f"intent {intent.id!r} has mixed embedding dims")
            parts.append(arr.tobytes())
    return b"".join(parts)


def _parse_embeddings_blob(blob: bytes) -> dict[str, list[np.ndarray]]:
    if blob[:4] != _EMB_MAGIC:
        raise ValueError("embedding sidecar has a bad magic header")
    _, n_intents = struct.unpack_from("<II", blob, 4)
    offset = 12
    out: dict[str, list[np.ndarray]] = {}
    for _ in range(n_intents):
        id_len, count, dim = struct.unpack_from("<III", blob, offset)
        offset += 12
        ident = blob[offset : offset + id_len].decode("utf-8")
        offset += id_len
        vecs = []
        for _ in range(count):
            nbytes = dim * 8
            vecs.append(np.frombuffer(blob[offset : offset + nbytes], dtype="<f8").copy())
            offset += nbytes
        out[ident] = vecs
    if offset != len(blob):
        raise ValueError("embedding sidecar has trailing bytes")
    return out


def compute_content_hash(
    intents: Sequence[IntentDefinition], pattern_lists: Mapping[str, Sequence[str]]
) -> str:
    ordered = sorted(intents, key=lambda i: i.id)
    payload = serialization.canonical_json(
        {
            "intents": [_intent_doc(i) for i in ordered],
            "pattern_lists": {k: list(v) for k, v in sorted(pattern_lists.items())},
        }
    ).encode("utf-8")
    blob = _embeddings_blob(ordered)
    return hashlib.sha256(payload + b"\x00" + blob).hexdigest()


class IntentStore:
    """Directory-backed store of immutable intent snapshots."""

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)

    def _latest_path(self) -> Path:
        return self.root / "latest"

    def latest_version(self) -> int | None:
        p = self._latest_path()
        if not p.exists():
            return None
        return int(p.read_text("utf-8").strip())

    def versions(self) -> list[int]:
        out = []
        for child in self.root.iterdir():
            if child.is_dir() and child.name.isdigit():
                out.append(int(child.name))
        return sorted(out)

    def save(
        self,
        intents: Sequence[IntentDefinition],
        pattern_lists: Mapping[str, Sequence[str]] | None = None,
        audit: AnnotationAudit | None = None,
        created_at: str | None = None,
    ) -> int:
        """Validate and write a new snapshot; returns its version number."""
        pattern_lists = dict(pattern_lists or {})
        ordered = sorted(intents, key=lambda i: i.id)
        ids = [i.id for i in ordered]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate intent ids in snapshot")
        for intent in ordered:
            compile_patterns(intent, pattern_lists)
            dims = {emb.shape[0] for _, emb in intent.curated_queries}
            if len(dims) > 1:
                raise ValueError(f"intent {intent.id!r} has inconsistent embedding dims")

        parent = self.latest_version()
        version = 1 if parent is None else parent + 1
        if created_at is None:
            epoch = os.environ.get("SOURCE_DATE_EPOCH")
            stamp = int(epoch) if epoch else int(time.time())
            created_at = time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime(stamp))
        content_hash = compute_content_hash(ordered, pattern_lists)
        doc = {
            "schema_version": 1,
            "snapshot_version": version,
            "parent_version": parent,
            "created_at": created_at,
            "content_hash": content_hash,
            "pattern_lists": {k: list(v) for k, v in sorted(pattern_lists.items())},
            "intents": [_intent_doc(i) for i in ordered],
        }

        tmp = Path(tempfile.mkdtemp(dir=self.root, prefix=f".{version}."))
        try:
            (tmp / "intents.doc").write_text(
                json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8"
            )
            (tmp / "embeddings.bin").write_bytes(_embeddings_blob(ordered))
            audit_doc = audit.to_json() if audit is not None else None
            (tmp / "audit.doc").write_text(
                json.dumps(audit_doc, indent=2, sort_keys=True) + "\n", encoding="utf-8"
            )
            final = self.root / str(version)
            if final.exists():
                raise ValueError(f"store version {version} already exists")
            os.rename(tmp, final)
        except BaseException:
            shutil.rmtree(tmp, ignore_errors=True)
            raise
        serialization.atomic_write_text(self._latest_path(), f"{version}\n")
        return version

    def load(self, version: int | str = "latest") -> StoreSnapshot:
        """Load and verify a snapshot; corruption raises."""
        if version == "latest":
            latest = self.latest_version()
            if latest is None:
                raise FileNotFoundError(f"{self.root}: store has no snapshots")
            version = latest
        version = int(version)
        vdir = self.root / str(version)
        if not vdir.is_dir():
            raise FileNotFoundError(f"{self.root}: no snapshot version {version}")
        doc = json.loads((vdir / "intents.doc").read_text("utf-8"))
        if doc.get("schema_version") != 1:
            raise ValueError(f"snapshot {version}: unsupported schema version")
        blob = (vdir / "embeddings.bin").read_bytes()
        try:
            by_intent = _parse_embeddings_blob(blob)
        except (ValueError, struct.error, UnicodeDecodeError) as e:
            raise ValueError(f"snapshot {version}: corrupt embedding sidecar ({e})") from None
        intents = []
        for idoc in doc["intents"]:
            embeddings = by_intent.get(idoc["id"], [])
            if len(embeddings) != len(idoc["queries"]):
                raise ValueError(
                    f"snapshot {version}: embedding count mismatch for intent {idoc['id']!r}"
                )
            intents.append(_intent_from_doc(idoc, embeddings))
        pattern_lists = {k: list(v) for k, v in doc.get("pattern_lists", {}).items()}
        recomputed = compute_content_hash(intents, pattern_lists)
        if recomputed != doc["content_hash"]:
            raise ValueError(f"snapshot {version}: content hash mismatch (corrupt snapshot)")
        return StoreSnapshot(
            version=version,
            content_hash=doc["content_hash"],
            intents=tuple(intents),
            pattern_lists=pattern_lists,
            created_at=doc["created_at"],
            parent_version=doc["parent_version"],
        )

    def load_audit(self, version: int) -> dict | None:
        vdir = self.root / str(int(version))
        return json.loads((vdir / "audit.doc").read_text("utf-8"))

    def diff(self, v1: int, v2: int) -> StoreDiff:
        a = self.load(v1)
        b = self.load(v2)

        def fingerprint(intent: IntentDefinition) -> str:
            return serialization.canonical_json(_intent_doc(intent)) + "|" + hashlib.sha256(
                _embeddings_blob([intent])
            ).hexdigest()

        docs_a = {i.id: fingerprint(i) for i in a.intents}
        docs_b = {i.id: fingerprint(i) for i in b.intents}
        added = tuple(sorted(set(docs_b) - set(docs_a)))
        removed = tuple(sorted(set(docs_a) - set(docs_b)))
        changed = tuple(
            sorted(i for i in set(docs_a) & set(docs_b) if docs_a[i] != docs_b[i])
        )
        return StoreDiff(added=added, removed=removed, changed=changed)


def commit_annotations(
    store: IntentStore,
    batch,
    decisions,
    provider=None,
    stopwords: frozenset[str] | None = None,
) -> tuple[int, list[IntentDefinition]]:
    """Apply a fully decided batch on top of the latest snapshot.

    New intents are appended to whatever the store already holds; a name
    collision with an existing intent is an error, not an overwrite.
    Returns the new version and the intents it added.
    """
    new_intents, audit = apply_annotations(
        batch, decisions, provider=provider, stopwords=stopwords
    )
    existing: list[IntentDefinition] = []
    pattern_lists: dict = {}
    if store.latest_version() is not None:
        snapshot = store.load()
        existing = list(snapshot.intents)
        pattern_lists = dict(snapshot.pattern_lists)
    version = store.save([*existing, *new_intents], pattern_lists, audit=audit)
    return version, new_intents
