"""Text-corpus knowledge base: documents made of ordered passages.

The on-disk format is line-delimited JSON, one document per line:
``{"doc_id": str, "title": str, "passages": [str, ...]}``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Iterable, Iterator

from .errors import KBError


@dataclass(frozen=True)
class Passage:
    doc_id: str
    index: int
    title: str
    text: str

    @property
    def ref(self) -> tuple[str, int]:
        return (self.doc_id, self.index)


@dataclass(frozen=True)
class Document:
    doc_id: str
    title: str
    passages: tuple[Passage, ...]


@dataclass
class KnowledgeBase:
    documents: dict[str, Document]
    metadata: dict[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self.documents:
            raise KBError("knowledge base must contain at least one document")

    def doc(self, doc_id: str) -> Document:
        try:
            return self.documents[doc_id]
        except KeyError:
            raise KBError(f"unknown doc_id: {doc_id!r}") from None

    def passage(self, doc_id: str, index: int) -> Passage:
        doc = self.doc(doc_id)
        if not 0 <= index < len(doc.passages):
            raise KBError(f"passage index {index} out of range for doc {doc_id!r}")
        return doc.passages[index]

    def iter_passages(self) -> Iterator[Passage]:
        for doc_id in sorted(self.documents):
            yield from self.documents[doc_id].passages

    @property
    def num_passages(self) -> int:
        return sum(len(d.passages) for d in self.documents.values())


def ingest_kb(source: Iterable[str], metadata: dict[str, str] | None = None) -> KnowledgeBase:
    """Build a KnowledgeBase from line-delimited document records.

    Rejects duplicate doc_ids, empty passage lists, and empty passage text,
    naming the offending record.
    """
    documents: dict[str, Document] = {}
    for lineno, line in enumerate(source, start=1):
        line = line.strip()
        if not line:
            continue
        try:
            record = json.loads(line)
        except json.JSONDecodeError as e:
            raise KBError(f"line {lineno}: invalid JSON: {e}") from None
        doc_id = record.get("doc_id")
        title = record.get("title", "")
        texts = record.get("passages")
        if not doc_id or not isinstance(doc_id, str):
            raise KBError(f"line {lineno}: missing or invalid doc_id")
        if doc_id in documents:
            raise KBError(f"duplicate doc_id: {doc_id!r} (line {lineno})")
        if not texts or not isinstance(texts, list):
            raise KBError(f"document {doc_id!r} has an empty passage list (line {lineno})")
        passages = []
        for i, text in enumerate(texts):
            if not isinstance(text, str) or not text.strip():
                raise KBError(f"document {doc_id!r} passage {i} is empty (line {lineno})")
            passages.append(Passage(doc_id=doc_id, index=i, title=title, text=text))
        documents[doc_id] = Document(doc_id=doc_id, title=title, passages=tuple(passages))
    return KnowledgeBase(documents=documents, metadata=dict(metadata or {}))


def load_kb(path: str | Path) -> KnowledgeBase:
    with open(path, encoding="utf-8") as f:
        return ingest_kb(f, metadata={"source": str(path)})


def dump_kb(kb: KnowledgeBase, out: IO[str]) -> None:
    """Write a KnowledgeBase back out in the ingestion format, sorted by doc_id."""
    for doc_id in sorted(kb.documents):
        doc = kb.documents[doc_id]
        rec = {
            "doc_id": doc.doc_id,
            "title": doc.title,
            "passages": [p.text for p in doc.passages],
        }
        out.write(json.dumps(rec, ensure_ascii=False) + "\n")
