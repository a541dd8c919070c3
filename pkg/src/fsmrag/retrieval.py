"""Retrieval tools over a knowledge base.

Three operations mirror how a person works a search engine: find candidate
documents by their best snippet, page through more documents, then pull the
top passages from a chosen document. All three are pure with respect to the
KB and deterministic: ties break by higher score, then lexicographically
smaller doc_id, then smaller passage index.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import ContractError
from .kb import KnowledgeBase, Passage
from .scoring import LexicalScorer, Scorer

DEFAULT_MAX_DOCS = 10
DEFAULT_TOP_PSG = 3


@dataclass
class DocSession:
    """Paged result of a document search.

    ``ranked`` holds one representative snippet per distinct document, best
    first, at most ``max_docs`` entries. ``cursor`` counts snippets already
    handed out (the top-1 returned by search_doc is included).
    """

    query: str
    ranked: list[Passage] = field(default_factory=list)
    cursor: int = 0


def next_doc(session: DocSession) -> Passage | None:
    """Next unseen snippet from the session; None once exhausted."""
    if session.cursor >= len(session.ranked):
        return None
    snippet = session.ranked[session.cursor]
    session.cursor += 1
    return snippet


class Retriever:
    """Binds a scorer to a KB and applies the ranking/dedup policy."""

    def __init__(
        self,
        kb: KnowledgeBase,
        scorer: Scorer | None = None,
        max_docs: int = DEFAULT_MAX_DOCS,
        top_psg: int = DEFAULT_TOP_PSG,
    ) -> None:
        if max_docs < 1:
            raise ContractError("max_docs must be >= 1")
        if top_psg < 1:
            raise ContractError("top_psg must be >= 1")
        self.kb = kb
        self.scorer = scorer if scorer is not None else LexicalScorer(kb)
        self.max_docs = max_docs
        self.top_psg = top_psg

    def search_doc(self, query: str, max_docs: int | None = None) -> tuple[DocSession, Passage]:
        """Score all passages, keep each document's best as its snippet,
        rank snippets, and return the session plus the top-1 snippet."""
        limit = self.max_docs if max_docs is None else max_docs
        if limit < 1:
            raise ContractError("max_docs must be >= 1")
        scores = self.scorer.score_all(query)
        best: dict[str, tuple[float, Passage]] = {}
        for p, s in zip(self.scorer.passages, scores):
            cur = best.get(p.doc_id)
            if cur is None or s > cur[0] or (s == cur[0] and p.index < cur[1].index):
                best[p.doc_id] = (float(s), p)
        ranked = sorted(best.values(), key=lambda e: (-e[0], e[1].doc_id, e[1].index))
        session = DocSession(query=query, ranked=[p for _, p in ranked[:limit]], cursor=1)
        return session, session.ranked[0]

    def search_psg(self, query: str, doc_id: str, k: int | None = None) -> list[Passage]:
        """Top-k passages of one document, best first."""
        limit = self.top_psg if k is None else k
        if limit < 1:
            raise ContractError("k must be >= 1")
        doc = self.kb.doc(doc_id)
        scored = [(self.scorer.score_pair(query, p), p) for p in doc.passages]
        scored.sort(key=lambda e: (-e[0], e[1].index))
        return [p for _, p in scored[:limit]]
