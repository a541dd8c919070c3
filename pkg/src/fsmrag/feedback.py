"""Step-level feedback: automatic (silver) rules and conversion to training triples.

Feedback on a step is one of right / wrong / a refinement text. Conversion
to a (target, reward) pair is three-case: right keeps the output with reward
1, wrong keeps it with reward 0, a refinement substitutes its text with
reward 1.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterable, Iterator

from .errors import ContractError
from .fsm import BranchToken, StepRecord, Trajectory
from .kb import KnowledgeBase
from .retrieval import Retriever

RIGHT = "right"
WRONG = "wrong"
REFINE = "refine"


@dataclass(frozen=True)
class Feedback:
    kind: str  # right | wrong | refine
    text: str | None = None

    def __post_init__(self) -> None:
        if self.kind not in (RIGHT, WRONG, REFINE):
            raise ContractError(f"unknown feedback kind: {self.kind!r}")
        if self.kind == REFINE and not (self.text and self.text.strip()):
            raise ContractError("refinement feedback requires non-empty text")

    @classmethod
    def right(cls) -> "Feedback":
        return cls(RIGHT)

    @classmethod
    def wrong(cls) -> "Feedback":
        return cls(WRONG)

    @classmethod
    def refine(cls, text: str) -> "Feedback":
        return cls(REFINE, text)


def convert(raw_output: str, fb: Feedback) -> tuple[str, int]:
    """Feedback-refined target and reward for one module output."""
    if fb.kind == RIGHT:
        return raw_output, 1
    if fb.kind == WRONG:
        return raw_output, 0
    return fb.text or "", 1


@dataclass(frozen=True)
class GoldAnnotation:
    """Reference annotation for one question: final answer, sub-query chain,
    and the evidence passage references, aligned index-for-index."""

    question_id: str
    question: str
    answer: str
    sub_queries: tuple[tuple[str, str], ...]
    evidence: tuple[tuple[str, int], ...]

    @property
    def evidence_docs(self) -> frozenset[str]:
        return frozenset(doc_id for doc_id, _ in self.evidence)

    def to_dict(self) -> dict:
        return {
            "question_id": self.question_id,
            "question": self.question,
            "answer": self.answer,
            "sub_queries": [{"q": q, "a": a} for q, a in self.sub_queries],
            "evidence": [{"doc_id": d, "index": i} for d, i in self.evidence],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GoldAnnotation":
        return cls(
            question_id=d["question_id"],
            question=d.get("question", ""),
            answer=d["answer"],
            sub_queries=tuple((s["q"], s["a"]) for s in d.get("sub_queries", [])),
            evidence=tuple((r["doc_id"], r["index"]) for r in d.get("evidence", [])),
        )


def read_gold(source: Iterable[str]) -> Iterator[GoldAnnotation]:
    for line in source:
        line = line.strip()
        if line:
            yield GoldAnnotation.from_dict(json.loads(line))


def load_gold(path) -> dict[str, GoldAnnotation]:
    with open(path, encoding="utf-8") as f:
        return {g.question_id: g for g in read_gold(f)}


@dataclass
class LabeledStep:
    """A (state, refined target, reward) training triple for one module."""

    module: str
    input_render: str
    target: str
    reward: int
    trajectory_id: str | None = None
    step_index: int | None = None

    def to_dict(self) -> dict:
        d = {
            "module": self.module,
            "input": self.input_render,
            "target": self.target,
            "reward": self.reward,
        }
        if self.trajectory_id is not None:
            d["trajectory_id"] = self.trajectory_id
        if self.step_index is not None:
            d["step_index"] = self.step_index
        return d


def _flip_judge(raw: str) -> str:
    text = raw.strip()
    if text.startswith(BranchToken.RELEVANT.value):
        return BranchToken.IRRELEVANT.value
    if text.startswith(BranchToken.IRRELEVANT.value):
        return BranchToken.RELEVANT.value
    raise ContractError(f"cannot flip non-judge output {raw[:40]!r}")


def silver_process_feedback(
    step: StepRecord,
    gold: GoldAnnotation,
    kb: KnowledgeBase,
    retriever: Retriever,
    max_docs: int | None = None,
) -> Feedback:
    """Automatic per-step feedback derived from the gold annotation.

    decompose/[Next]: right iff a fresh document search for the emitted
    sub-query reaches any gold-evidence document. decompose/[Finish]: right
    iff all gold evidence was already collected. judge: the gold label
    itself (same-document test), emitted as right when it matches. answer:
    the citation must be gold evidence ([Answerable]) or the candidates must
    contain none ([Unanswerable]). complete: the gold answer as refinement
    when the evidence is complete, wrong otherwise.
    """
    if not step.is_llm:
        raise ContractError(f"no silver feedback rule for tool step {step.module!r}")
    gold_refs = set(gold.evidence)
    gold_docs = gold.evidence_docs
    snap = step.snapshot
    if step.module == "decompose":
        if step.output.token is BranchToken.NEXT:
            session, _ = retriever.search_doc(step.output.sub_query or "", max_docs)
            found = {p.doc_id for p in session.ranked}
            return Feedback.right() if found & gold_docs else Feedback.wrong()
        if step.output.token is BranchToken.FINISH:
            return Feedback.right() if gold_refs <= set(snap.evidence) else Feedback.wrong()
        raise ContractError(f"unexpected decompose token {step.output.token!r}")
    if step.module == "judge":
        if snap.snippet is None:
            raise ContractError("judge step without a snippet in its snapshot")
        label = (
            BranchToken.RELEVANT.value
            if snap.snippet[0] in gold_docs
            else BranchToken.IRRELEVANT.value
        )
        emitted = step.output.token.value
        return Feedback.right() if label == emitted else Feedback.refine(label)
    if step.module == "answer":
        if step.output.token is BranchToken.ANSWERABLE:
            if snap.passages is None or step.output.evidence_index is None:
                raise ContractError("answerable step without presented passages")
            cited = snap.passages[step.output.evidence_index - 1]
            return Feedback.right() if cited in gold_refs else Feedback.wrong()
        if step.output.token is BranchToken.UNANSWERABLE:
            presented = set(snap.passages or [])
            return Feedback.right() if not (presented & gold_refs) else Feedback.wrong()
        raise ContractError(f"unexpected answer token {step.output.token!r}")
    if step.module == "complete":
        if gold_refs <= set(snap.evidence):
            if step.output.raw.strip() == gold.answer:
                return Feedback.right()
            return Feedback.refine(gold.answer)
        return Feedback.wrong()
    raise ContractError(f"no silver feedback rule for module {step.module!r}")


def silver_outcome_feedback(trajectory: Trajectory, gold: GoldAnnotation) -> list[LabeledStep]:
    """Back-propagate the end-of-run outcome to every LLM step.

    The outcome counts as successful iff all gold evidence was collected.
    On failure, judge steps keep reward 1 with the opposite label; the other
    modules keep their outputs with reward 0 (complete included).
    """
    if trajectory.status != "ok":
        raise ContractError("outcome feedback requires a completed trajectory")
    success = set(gold.evidence) <= set(trajectory.evidence)
    labeled: list[LabeledStep] = []
    for idx, step in trajectory.llm_steps():
        if success:
            target, reward = (gold.answer, 1) if step.module == "complete" else (step.output.raw, 1)
        elif step.module == "judge":
            target, reward = _flip_judge(step.output.raw), 1
        else:
            target, reward = step.output.raw, 0
        labeled.append(
            LabeledStep(
                module=step.module,
                input_render=step.input_render,
                target=target,
                reward=reward,
                trajectory_id=trajectory.question_id,
                step_index=idx,
            )
        )
    return labeled


def label_with_process_feedback(
    trajectory: Trajectory,
    gold: GoldAnnotation,
    kb: KnowledgeBase,
    retriever: Retriever,
) -> list[LabeledStep]:
    """Silver process feedback + conversion for every LLM step of an ok run.

    The document-search budget for the decompose check mirrors the one the
    agent ran with.
    """
    if trajectory.status != "ok":
        raise ContractError("process feedback labeling requires a completed trajectory")
    max_docs = int(trajectory.config.get("max_docs", retriever.max_docs))
    labeled = []
    for idx, step in trajectory.llm_steps():
        fb = silver_process_feedback(step, gold, kb, retriever, max_docs=max_docs)
        target, reward = convert(step.output.raw, fb)
        labeled.append(
            LabeledStep(
                module=step.module,
                input_render=step.input_render,
                target=target,
                reward=reward,
                trajectory_id=trajectory.question_id,
                step_index=idx,
            )
        )
    return labeled
