"""Persistent document store keyed by id, with compare-and-swap revisions.

The default persistence is a single append-only JSON-lines journal that is
compacted in place once stale records dominate. Replaying the journal on
open rebuilds the in-memory state; every write is appended and flushed
before it is acknowledged.
"""

from __future__ import annotations

import json
import os
import threading
from typing import Iterator

from .model import (
    SourceDocument,
    TraceableTextDocument,
    document_from_dict,
    document_to_dict,
    source_from_dict,
    source_to_dict,
)


class StoreError(Exception):
    pass


class UnknownIdError(StoreError):
    pass


class DuplicateIdError(StoreError):
    pass


class RevisionConflictError(StoreError):
    """Expected revision did not match the stored one; re-read and retry."""


class DocumentStore:
    """In-memory store; subclass hooks handle persistence.

    Traceable documents are keyed by their source id and carry a revision
    number that starts at 1 and increments on every accepted write. Writes
    with ``expected_revision`` set succeed only against that exact revision
    (0 meaning "does not exist yet"); ``None`` replaces unconditionally.
    """

    def __init__(self):
        self._lock = threading.RLock()
        self._sources: dict[str, SourceDocument] = {}
        self._docs: dict[str, tuple[TraceableTextDocument, int]] = {}

    # -- sources

    def put_source(self, source: SourceDocument) -> None:
        with self._lock:
            if source.id in self._sources:
                raise DuplicateIdError(f"source {source.id!r} already stored")
            self._sources[source.id] = source
            self._persist_source(source)

    def get_source(self, source_id: str) -> SourceDocument:
        with self._lock:
            try:
                return self._sources[source_id]
            except KeyError:
                raise UnknownIdError(f"no source {source_id!r}") from None

    def has_source(self, source_id: str) -> bool:
        with self._lock:
            return source_id in self._sources

    def list_sources(self) -> list[SourceDocument]:
        with self._lock:
            return list(self._sources.values())

    # -- traceable documents

    def put_traceable(
        self,
        source_id: str,
        doc: TraceableTextDocument,
        expected_revision: int | None = None,
    ) -> int:
        with self._lock:
            if source_id not in self._sources:
                raise UnknownIdError(f"no source {source_id!r}")
            current = self._docs.get(source_id)
            current_revision = current[1] if current else 0
            if expected_revision is not None and expected_revision != current_revision:
                raise RevisionConflictError(
                    f"expected revision {expected_revision}, stored is {current_revision}"
                )
            revision = current_revision + 1
            self._docs[source_id] = (doc, revision)
            self._persist_traceable(source_id, doc, revision)
            return revision

    def get_traceable(self, source_id: str) -> tuple[TraceableTextDocument, int]:
        with self._lock:
            try:
                return self._docs[source_id]
            except KeyError:
                raise UnknownIdError(f"no traceable document for source {source_id!r}") from None

    def has_traceable(self, source_id: str) -> bool:
        with self._lock:
            return source_id in self._docs

    def list_traceable_ids(self) -> list[str]:
        with self._lock:
            return list(self._docs.keys())

    # -- persistence hooks

    def _persist_source(self, source: SourceDocument) -> None:
        pass

    def _persist_traceable(
        self, source_id: str, doc: TraceableTextDocument, revision: int
    ) -> None:
        pass


class InMemoryStore(DocumentStore):
    """No persistence; for tests and throwaway runs."""


class JsonFileStore(DocumentStore):
    """Single-file journal store: one JSON record per line, latest wins."""

    COMPACT_MIN_LINES = 64

    def __init__(self, path: str):
        super().__init__()
        self.path = path
        self._total_lines = 0
        self._fh = None
        if os.path.exists(path):
            self._replay()
        directory = os.path.dirname(os.path.abspath(path))
        os.makedirs(directory, exist_ok=True)
        self._fh = open(path, "a", encoding="utf-8")

    def _replay(self) -> None:
        with open(self.path, encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                self._total_lines += 1
                record = json.loads(line)
                if record["kind"] == "source":
                    source = source_from_dict(record["record"])
                    self._sources[source.id] = source
                elif record["kind"] == "traceable":
                    doc = document_from_dict(record["record"])
                    self._docs[record["source_id"]] = (doc, record["revision"])
                else:
                    raise StoreError(f"unknown journal record kind {record['kind']!r}")

    def _live_lines(self) -> int:
        return len(self._sources) + len(self._docs)

    def _append(self, record: dict) -> None:
        assert self._fh is not None
        self._fh.write(json.dumps(record, ensure_ascii=False) + "\n")
        self._fh.flush()
        self._total_lines += 1
        if (
            self._total_lines >= self.COMPACT_MIN_LINES
            and self._total_lines >= 2 * self._live_lines()
        ):
            self._compact()

    def _records(self) -> Iterator[dict]:
        for source in self._sources.values():
            yield {"kind": "source", "record": source_to_dict(source)}
        for source_id, (doc, revision) in self._docs.items():
            yield {
                "kind": "traceable",
                "source_id": source_id,
                "revision": revision,
                "record": document_to_dict(doc),
            }

    def _compact(self) -> None:
        tmp_path = self.path + ".compact"
        with open(tmp_path, "w", encoding="utf-8") as tmp:
            for record in self._records():
                tmp.write(json.dumps(record, ensure_ascii=False) + "\n")
        self._fh.close()
        os.replace(tmp_path, self.path)
        self._fh = open(self.path, "a", encoding="utf-8")
        self._total_lines = self._live_lines()

    def _persist_source(self, source: SourceDocument) -> None:
        self._append({"kind": "source", "record": source_to_dict(source)})

    def _persist_traceable(
        self, source_id: str, doc: TraceableTextDocument, revision: int
    ) -> None:
        self._append(
            {
                "kind": "traceable",
                "source_id": source_id,
                "revision": revision,
                "record": document_to_dict(doc),
            }
        )

    def close(self) -> None:
        with self._lock:
            if self._fh is not None:
                self._fh.close()
                self._fh = None
