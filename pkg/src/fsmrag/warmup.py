"""Warm-up training-data construction from gold-annotated questions.

Every builder renders inputs through the same prompt builder the agent
uses, so training states match inference states byte for byte. Retrieval
tools supply the negative/positive knowledge variants for the judge and
answer modules.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from typing import IO, Iterable, Sequence

from .errors import ContractError
from .fsm import BranchToken
from .feedback import GoldAnnotation
from .kb import KnowledgeBase, Passage
from .prompts import PromptState, PromptTemplateSet, build_prompt
from .retrieval import Retriever

COMPLETE_CLASS = "*"


@dataclass(frozen=True)
class AnnotatedQuestion:
    """Gold annotation whose sub-query chain and evidence list are aligned."""

    gold: GoldAnnotation

    def __post_init__(self) -> None:
        j = len(self.gold.sub_queries)
        if j < 1:
            raise ContractError(f"{self.gold.question_id}: needs at least one sub-query")
        if len(self.gold.evidence) != j:
            raise ContractError(
                f"{self.gold.question_id}: {j} sub-queries but "
                f"{len(self.gold.evidence)} evidence passages"
            )

    @property
    def hops(self) -> int:
        return len(self.gold.sub_queries)


@dataclass
class TrainingExample:
    module: str
    input_render: str
    target: str
    reward: int = 1
    weight: float = 1.0
    question_id: str | None = None

    def to_dict(self) -> dict:
        d = {
            "module": self.module,
            "input": self.input_render,
            "target": self.target,
            "reward": self.reward,
            "weight": self.weight,
        }
        if self.question_id is not None:
            d["question_id"] = self.question_id
        return d


def example_class(example: TrainingExample) -> str:
    """Branch-token class of an example; free-text targets map to '*'."""
    for token in BranchToken:
        if token is not BranchToken.NONE and example.target.startswith(token.value):
            return token.value
    return COMPLETE_CLASS


@dataclass
class BuildReport:
    built: dict[str, int] = field(default_factory=dict)
    skipped: list[dict] = field(default_factory=list)

    def count(self, module: str, cls: str) -> None:
        key = f"{module}/{cls}"
        self.built[key] = self.built.get(key, 0) + 1

    def skip(self, question_id: str, module: str, scenario: str, reason: str) -> None:
        self.skipped.append(
            {"question_id": question_id, "module": module, "scenario": scenario, "reason": reason}
        )

    def to_dict(self) -> dict:
        return {"built": dict(sorted(self.built.items())), "skipped": self.skipped}


def _state(gold: GoldAnnotation, j: int, **kw) -> PromptState:
    return PromptState(question=gold.question, history=list(gold.sub_queries[:j]), **kw)


def build_decompose_examples(
    aq: AnnotatedQuestion, templates: PromptTemplateSet, weight: float = 1.0
) -> list[TrainingExample]:
    """One [Next] example per sub-query on its history prefix, plus one
    [Finish] example on the full history: hops + 1 examples total."""
    gold = aq.gold
    out = []
    for j, (sub_q, _) in enumerate(gold.sub_queries):
        prompt = build_prompt("decompose", _state(gold, j), templates)
        out.append(
            TrainingExample(
                "decompose", prompt, f"{BranchToken.NEXT.value} {sub_q}",
                weight=weight, question_id=gold.question_id,
            )
        )
    prompt = build_prompt("decompose", _state(gold, aq.hops), templates)
    out.append(
        TrainingExample(
            "decompose", prompt, BranchToken.FINISH.value,
            weight=weight, question_id=gold.question_id,
        )
    )
    return out


def _negative_passages(
    retriever: Retriever, sub_q: str, gold_passage: Passage, gold_refs: set[tuple[str, int]]
) -> list[Passage]:
    """Top passages of the gold document for the sub-query, with every gold
    evidence passage excluded (not just this hop's), so the built targets
    never contradict the step-feedback rules."""
    top = retriever.search_psg(sub_q, gold_passage.doc_id)
    return [p for p in top if p.ref not in gold_refs]


def build_judge_examples(
    aq: AnnotatedQuestion,
    kb: KnowledgeBase,
    retriever: Retriever,
    templates: PromptTemplateSet,
    weight: float = 1.0,
    report: BuildReport | None = None,
) -> list[TrainingExample]:
    """Three snippet scenarios per sub-query: the gold passage (relevant), a
    retrieved snippet from another document (irrelevant), and same-document
    non-gold passages (relevant). Unfillable scenarios are skipped silently
    and counted in the report."""
    gold = aq.gold
    report = report if report is not None else BuildReport()
    out = []

    def add(j: int, snippet: Passage, label: BranchToken) -> None:
        prompt = build_prompt(
            "judge", _state(gold, j, sub_query=gold.sub_queries[j][0], snippet=snippet), templates
        )
        out.append(
            TrainingExample("judge", prompt, label.value, weight=weight,
                            question_id=gold.question_id)
        )

    gold_docs = gold.evidence_docs
    gold_refs = set(gold.evidence)
    for j in range(aq.hops):
        sub_q = gold.sub_queries[j][0]
        gold_passage = kb.passage(*gold.evidence[j])
        add(j, gold_passage, BranchToken.RELEVANT)
        session, _ = retriever.search_doc(sub_q)
        # the irrelevant decoy must avoid every gold document of the
        # question, or the label would contradict the same-document rule
        decoy = next((p for p in session.ranked if p.doc_id not in gold_docs), None)
        if decoy is not None:
            add(j, decoy, BranchToken.IRRELEVANT)
        else:
            report.skip(gold.question_id, "judge", "other-document", "no distinct document retrieved")
        negatives = _negative_passages(retriever, sub_q, gold_passage, gold_refs)
        if negatives:
            for p in negatives:
                add(j, p, BranchToken.RELEVANT)
        else:
            report.skip(gold.question_id, "judge", "same-document", "gold document has no other top passages")
    return out


def build_answer_examples(
    aq: AnnotatedQuestion,
    kb: KnowledgeBase,
    retriever: Retriever,
    templates: PromptTemplateSet,
    rng: random.Random,
    weight: float = 1.0,
    report: BuildReport | None = None,
) -> list[TrainingExample]:
    """Two candidate-set scenarios per sub-query: without the gold passage
    the target is [Unanswerable]; with it swapped in at a random slot the
    target cites its shuffled 1-based position."""
    gold = aq.gold
    report = report if report is not None else BuildReport()
    gold_refs = set(gold.evidence)
    out = []
    for j in range(aq.hops):
        sub_q, sub_a = gold.sub_queries[j]
        gold_passage = kb.passage(*gold.evidence[j])
        negatives = _negative_passages(retriever, sub_q, gold_passage, gold_refs)
        if negatives:
            candidates = list(negatives)
            rng.shuffle(candidates)
            prompt = build_prompt(
                "answer", _state(gold, j, sub_query=sub_q, passages=candidates), templates
            )
            out.append(
                TrainingExample("answer", prompt, BranchToken.UNANSWERABLE.value,
                                weight=weight, question_id=gold.question_id)
            )
        else:
            report.skip(gold.question_id, "answer", "without-gold", "no non-gold passages available")
        if negatives:
            candidates = list(negatives)
            candidates[rng.randrange(len(candidates))] = gold_passage
        else:
            candidates = [gold_passage]
        rng.shuffle(candidates)
        k = next(i for i, p in enumerate(candidates, start=1) if p.ref == gold_passage.ref)
        prompt = build_prompt(
            "answer", _state(gold, j, sub_query=sub_q, passages=candidates), templates
        )
        target = f"{BranchToken.ANSWERABLE.value} Answer: {sub_a}; Relevant Passage ID: [{k}]"
        out.append(
            TrainingExample("answer", prompt, target, weight=weight,
                            question_id=gold.question_id)
        )
    return out


def build_complete_example(
    aq: AnnotatedQuestion,
    kb: KnowledgeBase,
    templates: PromptTemplateSet,
    weight: float = 1.0,
) -> TrainingExample:
    gold = aq.gold
    evidence = [kb.passage(doc_id, idx) for doc_id, idx in gold.evidence]
    prompt = build_prompt(
        "complete",
        PromptState(question=gold.question, evidence=evidence),
        templates,
    )
    return TrainingExample("complete", prompt, gold.answer, weight=weight,
                           question_id=gold.question_id)


def build_all(
    questions: Iterable[AnnotatedQuestion],
    kb: KnowledgeBase,
    retriever: Retriever,
    templates: PromptTemplateSet,
    seed: int = 0,
    weights: dict[str, float] | None = None,
) -> tuple[list[TrainingExample], BuildReport]:
    weights = weights or {}
    rng = random.Random(seed)
    report = BuildReport()
    examples: list[TrainingExample] = []
    for aq in questions:
        examples.extend(
            build_decompose_examples(aq, templates, weights.get("decompose", 1.0))
        )
        examples.extend(
            build_judge_examples(aq, kb, retriever, templates,
                                 weights.get("judge", 1.0), report)
        )
        examples.extend(
            build_answer_examples(aq, kb, retriever, templates, rng,
                                  weights.get("answer", 1.0), report)
        )
        examples.append(
            build_complete_example(aq, kb, templates, weights.get("complete", 1.0))
        )
    for e in examples:
        report.count(e.module, example_class(e))
    return examples, report


def sample_balanced(
    examples: Sequence[TrainingExample],
    quota: dict[str, dict[str, int]],
    seed: int = 0,
) -> tuple[list[TrainingExample], dict]:
    """Uniform per-cell sampling without replacement, capped at availability.

    Cells are (module, branch-token class); cells not named in the quota
    pass through in full. Returns the sampled dataset (original order
    preserved) and a per-cell availability report with shortfalls.
    """
    cells: dict[tuple[str, str], list[int]] = {}
    for i, e in enumerate(examples):
        cells.setdefault((e.module, example_class(e)), []).append(i)
    rng = random.Random(seed)
    chosen: set[int] = set()
    report: dict[str, dict] = {}
    for (module, cls), indices in sorted(cells.items()):
        want = quota.get(module, {}).get(cls)
        if want is None:
            chosen.update(indices)
            continue
        if want < 0:
            raise ContractError(f"quota for {module}/{cls} is negative")
        take = min(want, len(indices))
        chosen.update(rng.sample(indices, take))
        report[f"{module}/{cls}"] = {
            "requested": want,
            "available": len(indices),
            "sampled": take,
            "shortfall": max(0, want - len(indices)),
        }
    sampled = [e for i, e in enumerate(examples) if i in chosen]
    return sampled, report


def write_examples(examples: Iterable[TrainingExample], out: IO[str]) -> None:
    for e in examples:
        out.write(json.dumps(e.to_dict(), ensure_ascii=False) + "\n")
