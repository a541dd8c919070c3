"""Lexical relevance scoring over a knowledge base.

The reference scorer is normalized-token overlap:
``score = |query_tokens ∩ passage_tokens| / |query_tokens|`` on case-folded,
punctuation-stripped token sets (0 when the query has no tokens). Dense
retrievers can be plugged in behind the same interface.

Per-query scoring of every corpus passage is the one compute-bound loop in
the system, so the count kernel has a compiled implementation selected at
import; set FSMRAG_PURE_PYTHON=1 to force the numpy fallback.
"""

from __future__ import annotations

import os
import re
from typing import Protocol, Sequence

import numpy as np

from .kb import KnowledgeBase, Passage

if os.environ.get("FSMRAG_PURE_PYTHON"):
    from . import _scorekernel as _kernel
else:
    try:
        from . import _scorekernel_c as _kernel  # type: ignore[no-redef]
    except ImportError:
        from . import _scorekernel as _kernel  # type: ignore[no-redef]

_TOKEN_RE = re.compile(r"[a-z0-9]+")


def kernel_backend() -> str:
    """Name of the active count kernel: 'cython' or 'python'."""
    return _kernel.BACKEND


def tokenize(text: str) -> list[str]:
    """Case-folded alphanumeric tokens; everything else is a separator."""
    return _TOKEN_RE.findall(text.lower())


def token_set(text: str) -> frozenset[str]:
    return frozenset(tokenize(text))


def score(query: str, passage: Passage) -> float:
    """Reference overlap score for a single (query, passage) pair."""
    q = token_set(query)
    if not q:
        return 0.0
    return len(q & token_set(passage.text)) / len(q)


class Scorer(Protocol):
    """Relevance scorer bound to a knowledge base."""

    passages: Sequence[Passage]

    def score_all(self, query: str) -> np.ndarray: ...

    def score_pair(self, query: str, passage: Passage) -> float: ...


class LexicalScorer:
    """Token-overlap scorer with a pre-interned corpus index.

    ``passages`` is every passage of the KB in (doc_id, index) order;
    ``score_all`` returns one float per entry, equal to ``score()`` on the
    same pair.
    """

    def __init__(self, kb: KnowledgeBase) -> None:
        self.passages: list[Passage] = list(kb.iter_passages())
        vocab: dict[str, int] = {}
        flat: list[int] = []
        offsets = [0]
        for p in self.passages:
            ids = sorted(vocab.setdefault(t, len(vocab)) for t in token_set(p.text))
            flat.extend(ids)
            offsets.append(len(flat))
        self._vocab = vocab
        self._flat = np.asarray(flat, dtype=np.int32)
        self._offsets = np.asarray(offsets, dtype=np.int64)

    def score_all(self, query: str) -> np.ndarray:
        qtokens = token_set(query)
        if not qtokens:
            return np.zeros(len(self.passages), dtype=np.float64)
        qids = np.asarray(
            sorted(self._vocab[t] for t in qtokens if t in self._vocab), dtype=np.int32
        )
        counts = _kernel.overlap_counts(self._flat, self._offsets, qids, len(self._vocab))
        return counts.astype(np.float64) / len(qtokens)

    def score_pair(self, query: str, passage: Passage) -> float:
        return score(query, passage)
