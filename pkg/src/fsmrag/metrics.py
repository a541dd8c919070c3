"""Answer and process metrics.

Answer strings are normalized the standard open-domain-QA way (casefold,
strip punctuation and English articles, collapse whitespace) before exact
match, token F1, and yes/no accuracy. Evidence recall and the module/
feedback accuracies work on identities, not text.
"""

from __future__ import annotations

import re
import string
from collections import Counter
from dataclasses import dataclass, field
from typing import Sequence

from .errors import ContractError
from .feedback import Feedback, convert

_ARTICLES_RE = re.compile(r"\b(a|an|the)\b")
_PUNCT_TABLE = str.maketrans("", "", string.punctuation)


def normalize_answer(text: str) -> str:
    text = text.lower()
    text = text.translate(_PUNCT_TABLE)
    text = _ARTICLES_RE.sub(" ", text)
    return " ".join(text.split())


def em(pred: str, gold: str) -> int:
    return int(normalize_answer(pred) == normalize_answer(gold))


def f1(pred: str, gold: str) -> float:
    pred_tokens = normalize_answer(pred).split()
    gold_tokens = normalize_answer(gold).split()
    if not pred_tokens or not gold_tokens:
        return float(pred_tokens == gold_tokens)
    common = Counter(pred_tokens) & Counter(gold_tokens)
    overlap = sum(common.values())
    if overlap == 0:
        return 0.0
    precision = overlap / len(pred_tokens)
    recall_ = overlap / len(gold_tokens)
    return 2 * precision * recall_ / (precision + recall_)


def acc_yesno(pred: str, gold: str) -> int:
    p = normalize_answer(pred)
    if p not in ("yes", "no"):
        return 0
    return int(p == normalize_answer(gold))


def recall(
    collected: Sequence[tuple[str, int]], gold_evidence: Sequence[tuple[str, int]]
) -> float:
    """Fraction of gold evidence references present among the collected ones."""
    gold_set = set(gold_evidence)
    if not gold_set:
        raise ContractError("recall undefined for empty gold evidence")
    return len(gold_set & set(collected)) / len(gold_set)


def module_accuracy(
    steps: Sequence[tuple[str, str, Feedback]]
) -> dict[str, float]:
    """Per-module output accuracy from gold feedback.

    Each item is (module, raw_output, feedback). A step scores 1 when the
    feedback is right, or is a refinement equal to the output; 0 when wrong
    or a differing refinement.
    """
    sums: dict[str, list[int]] = {}
    for module, raw, fb in steps:
        if fb.kind == "right":
            score = 1
        elif fb.kind == "wrong":
            score = 0
        else:
            score = int((fb.text or "") == raw)
        sums.setdefault(module, []).append(score)
    return {m: sum(v) / len(v) for m, v in sums.items()}


def feedback_accuracy(
    raw_outputs: Sequence[str],
    silver: Sequence[Feedback],
    gold: Sequence[Feedback],
) -> float:
    """Agreement rate between silver and gold feedback, judged after
    conversion: two feedbacks agree when they refine the same output to the
    same (target, reward) pair."""
    if not (len(raw_outputs) == len(silver) == len(gold)):
        raise ContractError("feedback_accuracy requires step-aligned lists")
    if not raw_outputs:
        raise ContractError("feedback_accuracy over zero steps")
    agree = sum(
        int(convert(y, s) == convert(y, g))
        for y, s, g in zip(raw_outputs, silver, gold)
    )
    return agree / len(raw_outputs)


@dataclass
class QuestionResult:
    question_id: str
    scores: dict[str, float] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"question_id": self.question_id, **self.scores}


@dataclass
class EvalReport:
    per_question: list[QuestionResult] = field(default_factory=list)
    aggregates: dict[str, float] = field(default_factory=dict)
    extras: dict[str, float] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "aggregates": self.aggregates,
            "extras": self.extras,
            "per_question": [q.to_dict() for q in self.per_question],
        }

    def table(self) -> str:
        """Aligned plain-text summary of the aggregate metrics."""
        rows = list(self.aggregates.items()) + list(self.extras.items())
        if not rows:
            return "(no metrics)"
        width = max(len(k) for k, _ in rows)
        lines = [f"{'metric'.ljust(width)}  value", f"{'-' * width}  -----"]
        for k, v in rows:
            lines.append(f"{k.ljust(width)}  {v:.4f}")
        return "\n".join(lines)


def evaluate(
    results: Sequence[dict],
    gold_by_id: dict,
    metric_names: Sequence[str] = ("em", "f1", "recall"),
) -> EvalReport:
    """Score trajectory dicts against gold annotations.

    ``results`` are serialized trajectories; failed ones score 0 on answer
    metrics and recall. Aggregates are plain means over scored questions.
    """
    report = EvalReport()
    totals: dict[str, list[float]] = {m: [] for m in metric_names}
    steps_seen: list[float] = []
    tokens_seen: list[float] = []
    for t in results:
        qid = t["question_id"]
        gold = gold_by_id.get(qid)
        if gold is None:
            continue
        ok = t.get("status") == "ok"
        pred = t.get("final_answer", "") if ok else ""
        qr = QuestionResult(question_id=qid)
        for m in metric_names:
            if m == "em":
                qr.scores["em"] = float(em(pred, gold.answer)) if ok else 0.0
            elif m == "f1":
                qr.scores["f1"] = f1(pred, gold.answer) if ok else 0.0
            elif m == "acc":
                qr.scores["acc"] = float(acc_yesno(pred, gold.answer)) if ok else 0.0
            elif m == "recall":
                collected = [(r["doc_id"], r["index"]) for r in t.get("evidence", [])]
                qr.scores["recall"] = recall(collected, gold.evidence)
            else:
                raise ContractError(f"unknown metric {m!r}")
            totals[m].append(qr.scores[m])
        report.per_question.append(qr)
        stats = t.get("stats", {})
        if "steps" in stats:
            steps_seen.append(stats["steps"])
        if "tokens" in stats:
            tokens_seen.append(stats["tokens"])
    for m, vals in totals.items():
        report.aggregates[m] = sum(vals) / len(vals) if vals else 0.0
    if steps_seen:
        report.extras["avg_steps"] = sum(steps_seen) / len(steps_seen)
    if tokens_seen:
        report.extras["avg_tokens"] = sum(tokens_seen) / len(tokens_seen)
    report.extras["questions"] = float(len(report.per_question))
    return report
