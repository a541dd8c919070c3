"""Shared fixtures: toy corpora, synthetic gold-annotated question sets, and
an oracle backend that emits the gold output for whatever prompt it is shown."""

from __future__ import annotations

import json
import random
import re

import pytest

from fsmrag.backends import SequenceBackend
from fsmrag.config import AgentConfig
from fsmrag.feedback import GoldAnnotation
from fsmrag.kb import KnowledgeBase, ingest_kb
from fsmrag.prompts import render_snippet


def kb_from_records(records: list[dict]) -> KnowledgeBase:
    return ingest_kb([json.dumps(r) for r in records])


@pytest.fixture
def arthur_kb() -> KnowledgeBase:
    return kb_from_records(
        [
            {
                "doc_id": "arthur-mag",
                "title": "Arthur's Magazine",
                "passages": [
                    "Arthur's Magazine was an American literary periodical.",
                    "Arthur's Magazine started circulation in 1844.",
                ],
            },
            {
                "doc_id": "first-women",
                "title": "First for Women",
                "passages": ["First for Women is a magazine started in 1989."],
            },
        ]
    )


@pytest.fixture
def band_kb() -> KnowledgeBase:
    """Two band documents plus a decoy, for agent-loop tests."""
    return kb_from_records(
        [
            {
                "doc_id": "band-a",
                "title": "Skagit Collective",
                "passages": [
                    "The Skagit Collective has since reunited with its original drummer.",
                    "The Skagit Collective was an American grunge group from Seattle active from 1985 to 1993.",
                    "Its producer later recorded several other grunge groups.",
                ],
            },
            {
                "doc_id": "band-b",
                "title": "Ostrava Echo",
                "passages": [
                    "Ostrava Echo is an alternative rock group from Bulgaria.",
                    "In 2006 Ostrava Echo supported a headline act at Sunny Beach, Bulgaria.",
                ],
            },
            {
                "doc_id": "decoy",
                "title": "Limestone Quarrying",
                "passages": ["Limestone quarrying expanded rapidly during the nineteenth century."],
            },
        ]
    )


def band_gold() -> GoldAnnotation:
    return GoldAnnotation(
        question_id="bands-1",
        question="Were the groups Skagit Collective and Ostrava Echo from the U.S.?",
        answer="no",
        sub_queries=(
            ("Which country is the Skagit Collective from?", "the United States"),
            ("Which country is Ostrava Echo from?", "Bulgaria"),
        ),
        evidence=(("band-a", 1), ("band-b", 0)),
    )


def band_backend() -> SequenceBackend:
    """Scripted outputs matching the band fixture, two answerable rounds."""
    return SequenceBackend(
        {
            "decompose": [
                "[Next] Which country is the Skagit Collective from?",
                "[Next] Which country is Ostrava Echo from?",
                "[Finish]",
            ],
            "judge": ["[Relevant]", "[Relevant]"],
            "answer": [
                "[Answerable] Answer: the United States; Relevant Passage ID: [1]",
                "[Answerable] Answer: Bulgaria; Relevant Passage ID: [1]",
            ],
            "complete": ["no"],
        }
    )


@pytest.fixture
def agent_config() -> AgentConfig:
    return AgentConfig(style="hotpotqa", subquery_cap=2, max_docs=10, top_psg=3)


# --- synthetic gold-annotated corpora --------------------------------------


def make_synthetic(
    seed: int,
    n_questions: int,
    hops_choices: tuple[int, ...] = (1, 2),
    docs_range: tuple[int, int] = (3, 8),
) -> tuple[KnowledgeBase, list[GoldAnnotation]]:
    """Build a corpus with planted evidence and aligned gold annotations.

    Each sub-query shares distinctive tokens with exactly one evidence
    passage, so the lexical retriever ranks its document within the session
    and the passage within the document's top passages.
    """
    rng = random.Random(seed)
    records: list[dict] = []
    golds: list[GoldAnnotation] = []
    for qi in range(n_questions):
        hops = rng.choice(hops_choices)
        n_docs = rng.randint(*docs_range)
        sub_queries = []
        evidence = []
        for j in range(hops):
            key_a, key_b = f"key{qi}x{j}a", f"key{qi}x{j}b"
            answer = f"entity{qi}v{j}"
            n_passages = rng.randint(1, 4)
            ev_index = rng.randrange(n_passages)
            passages = []
            for pi in range(n_passages):
                if pi == ev_index:
                    passages.append(
                        f"The record states that {key_a} {key_b} resolves to {answer}."
                    )
                else:
                    passages.append(
                        f"Background note {qi} {j} {pi} about side topic filler{qi}f{j}p{pi}."
                    )
            doc_id = f"q{qi}-gold{j}"
            records.append(
                {"doc_id": doc_id, "title": f"Gold topic {qi} {j}", "passages": passages}
            )
            sub_queries.append((f"What does {key_a} {key_b} resolve to?", answer))
            evidence.append((doc_id, ev_index))
        for di in range(n_docs - hops):
            records.append(
                {
                    "doc_id": f"q{qi}-decoy{di}",
                    "title": f"Decoy {qi} {di}",
                    "passages": [
                        f"Unrelated decoy text {qi} {di} {pi} noise{qi}n{di}p{pi}."
                        for pi in range(rng.randint(1, 3))
                    ],
                }
            )
        final_answer = f"joint outcome {qi}"
        golds.append(
            GoldAnnotation(
                question_id=f"synth-{qi}",
                question=f"Synthetic question {qi} combining " +
                         " and ".join(q for q, _ in sub_queries),
                answer=final_answer,
                sub_queries=tuple(sub_queries),
                evidence=tuple(evidence),
            )
        )
    return kb_from_records(records), golds


class RecordingBackend:
    """Wraps a backend and keeps every (module, prompt, output) exchange."""

    def __init__(self, inner):
        self.inner = inner
        self.entries: list[dict] = []

    def complete(self, module: str, prompt: str) -> str:
        output = self.inner.complete(module, prompt)
        self.entries.append(
            {"module": module, "match": "exact", "input": prompt, "output": output}
        )
        return output


def scripted_fixture_lines(kb: KnowledgeBase, golds, config: AgentConfig) -> list[str]:
    """Run every question against its gold oracle and dump the exchanges as
    an exact-match scripted fixture."""
    from fsmrag.fsm import run

    lines = []
    for gold in golds:
        recorder = RecordingBackend(OracleBackend(gold, kb))
        run(gold.question, kb, recorder, config, question_id=gold.question_id)
        lines.extend(json.dumps(e, ensure_ascii=False) for e in recorder.entries)
    return lines


_HISTORY_LINE = re.compile(r"^\d+\. Q: ", re.MULTILINE)
_SUBQ_LINE = re.compile(r"^Next Sub-Query: (.*)$", re.MULTILINE)
_SNIPPET_BLOCK = re.compile(r"Document Snippet: (.*)\n\nOutput:", re.DOTALL)
_PASSAGE_BLOCK = re.compile(r"Passages: (.*)\n\nOutput:", re.DOTALL)


class OracleBackend:
    """Answers every module prompt with the gold output, derived purely from
    the prompt text and the gold annotation (independent of the agent)."""

    def __init__(self, gold: GoldAnnotation, kb: KnowledgeBase):
        self.gold = gold
        self.doc_of_snippet: dict[str, str] = {}
        self.ref_of_snippet: dict[str, tuple[str, int]] = {}
        for p in kb.iter_passages():
            rendered = render_snippet(p)
            self.doc_of_snippet[rendered] = p.doc_id
            self.ref_of_snippet[rendered] = p.ref
        self.hop_of_subquery = {q: j for j, (q, _) in enumerate(gold.sub_queries)}

    def _hop(self, prompt: str) -> int:
        m = _SUBQ_LINE.search(prompt)
        assert m, "prompt carries no sub-query line"
        return self.hop_of_subquery[m.group(1).strip()]

    def complete(self, module: str, prompt: str) -> str:
        if module == "decompose":
            solved = len(_HISTORY_LINE.findall(prompt))
            if solved < len(self.gold.sub_queries):
                return f"[Next] {self.gold.sub_queries[solved][0]}"
            return "[Finish]"
        if module == "judge":
            j = self._hop(prompt)
            m = _SNIPPET_BLOCK.search(prompt)
            assert m, "prompt carries no snippet"
            doc = self.doc_of_snippet[m.group(1).strip()]
            return "[Relevant]" if doc == self.gold.evidence[j][0] else "[Irrelevant]"
        if module == "answer":
            j = self._hop(prompt)
            m = _PASSAGE_BLOCK.search(prompt)
            assert m, "prompt carries no passages"
            lines = m.group(1).strip().split("\n")
            for line in lines:
                lm = re.match(r"\[(\d+)\] (.*)", line)
                if lm and self.ref_of_snippet.get(lm.group(2).strip()) == self.gold.evidence[j]:
                    answer = self.gold.sub_queries[j][1]
                    return f"[Answerable] Answer: {answer}; Relevant Passage ID: [{lm.group(1)}]"
            return "[Unanswerable]"
        if module == "complete":
            return self.gold.answer
        raise AssertionError(f"oracle asked for unknown module {module!r}")
