"""Exploration/exploitation driver: run questions, label steps, export.

One iteration explores up to T questions, collects per-step feedback
(automatic from gold annotations, or queued for human annotation), and
writes the labeled set to ``adapt-iter{i}.jsonl``. An exploitation hook
(external trainer) runs on each export; if it returns a replacement
backend, later iterations use it.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence

from .backends import LLMBackend
from .config import AgentConfig
from .errors import BackendError, ContractError, StoreError
from .feedback import (
    GoldAnnotation,
    LabeledStep,
    label_with_process_feedback,
    silver_outcome_feedback,
)
from .fsm import Trajectory, run
from .kb import KnowledgeBase
from .prompts import PromptTemplateSet
from .retrieval import Retriever
from .store import TrajectoryStore

logger = logging.getLogger(__name__)

SILVER_PROCESS = "silver_process"
SILVER_OUTCOME = "silver_outcome"
HUMAN = "human"

ExploitHook = Callable[[Path, int], LLMBackend | None]


@dataclass
class AdaptationConfig:
    explore_steps: int  # T: questions explored per iteration
    iterations: int = 1
    feedback_mode: str = SILVER_PROCESS
    export_dir: str | Path = "."
    same_questions_across_iterations: bool = False

    def __post_init__(self) -> None:
        if self.explore_steps < 1:
            raise ContractError("explore_steps must be >= 1")
        if self.iterations < 1:
            raise ContractError("iterations must be >= 1")
        if self.feedback_mode not in (SILVER_PROCESS, SILVER_OUTCOME, HUMAN):
            raise ContractError(f"unknown feedback mode {self.feedback_mode!r}")


@dataclass
class Question:
    question_id: str
    question: str


def read_questions(source: Iterable[str]) -> list[Question]:
    out = []
    for line in source:
        line = line.strip()
        if line:
            d = json.loads(line)
            out.append(Question(d["question_id"], d["question"]))
    return out


def explore(
    questions: Sequence[Question],
    kb: KnowledgeBase,
    backend: LLMBackend,
    agent_config: AgentConfig,
    limit: int,
    retriever: Retriever | None = None,
    templates: PromptTemplateSet | None = None,
) -> list[Trajectory]:
    """Run the agent on up to ``limit`` questions; failures become
    failed-status trajectories rather than aborting the batch."""
    if retriever is None:
        retriever = Retriever(kb, max_docs=agent_config.max_docs, top_psg=agent_config.top_psg)
    if templates is None:
        templates = PromptTemplateSet.load(agent_config.style, agent_config.prompt_mode)
    trajectories = []
    for q in questions[:limit]:
        try:
            _, traj = run(
                q.question, kb, backend, agent_config,
                retriever=retriever, templates=templates, question_id=q.question_id,
            )
        except BackendError as e:
            logger.warning("backend error on %s: %s", q.question_id, e)
            traj = Trajectory(
                question_id=q.question_id, question=q.question, steps=[],
                final_answer="", evidence=[], status="failed",
                config=agent_config.to_dict(), error={"reason": f"backend error: {e}"},
            )
        trajectories.append(traj)
    if limit > len(questions):
        logger.info("question pool smaller than T: %d < %d", len(questions), limit)
    return trajectories


@dataclass
class CollectReport:
    labeled: list[LabeledStep] = field(default_factory=list)
    skipped: list[dict] = field(default_factory=list)
    pending: list[str] = field(default_factory=list)


def collect(
    trajectories: Sequence[Trajectory],
    mode: str,
    gold_by_id: dict[str, GoldAnnotation] | None = None,
    kb: KnowledgeBase | None = None,
    retriever: Retriever | None = None,
    store: TrajectoryStore | None = None,
    iteration: int | None = None,
) -> CollectReport:
    """Label every LLM step of the ok trajectories.

    Silver modes need gold annotations (missing ones skip the trajectory);
    human mode enqueues pending work in the store and returns labels only
    for trajectories already fully annotated and finalized.
    """
    report = CollectReport()
    if mode in (SILVER_PROCESS, SILVER_OUTCOME):
        if gold_by_id is None:
            raise ContractError("silver feedback modes require gold annotations")
        for t in trajectories:
            if t.status != "ok":
                report.skipped.append({"trajectory": t.question_id, "reason": "run failed"})
                continue
            gold = gold_by_id.get(t.question_id)
            if gold is None:
                report.skipped.append({"trajectory": t.question_id, "reason": "no gold annotation"})
                continue
            if mode == SILVER_PROCESS:
                if kb is None or retriever is None:
                    raise ContractError("process feedback requires the kb and retriever")
                report.labeled.extend(label_with_process_feedback(t, gold, kb, retriever))
            else:
                report.labeled.extend(silver_outcome_feedback(t, gold))
        return report
    if mode == HUMAN:
        if store is None:
            raise ContractError("human feedback mode requires a store")
        for t in trajectories:
            if t.status != "ok":
                report.skipped.append({"trajectory": t.question_id, "reason": "run failed"})
                continue
            tid = t.question_id if iteration is None else f"iter{iteration}-{t.question_id}"
            try:
                store.add_trajectory(t.to_dict(), trajectory_id=tid, iteration=iteration)
            except StoreError:
                pass  # already enqueued earlier; keep existing annotations
            state = store.annotation_state(tid)
            if state["status"] == "finalized":
                report.labeled.extend(store.labeled_steps(tid))
            elif state["status"] == "skipped":
                report.skipped.append({"trajectory": tid, "reason": "skipped by annotator"})
            else:
                report.pending.append(tid)
        return report
    raise ContractError(f"unknown feedback mode {mode!r}")


def export_labeled(labeled: Sequence[LabeledStep], path: Path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for ls in labeled:
            f.write(json.dumps(ls.to_dict(), ensure_ascii=False) + "\n")


def run_iterations(
    adapt_config: AdaptationConfig,
    questions: Sequence[Question],
    kb: KnowledgeBase,
    backend: LLMBackend,
    agent_config: AgentConfig,
    gold_by_id: dict[str, GoldAnnotation] | None = None,
    store: TrajectoryStore | None = None,
    exploit_hook: ExploitHook | None = None,
) -> dict:
    """Drive I iterations of explore / collect / export / exploit."""
    export_dir = Path(adapt_config.export_dir)
    export_dir.mkdir(parents=True, exist_ok=True)
    retriever = Retriever(kb, max_docs=agent_config.max_docs, top_psg=agent_config.top_psg)
    templates = PromptTemplateSet.load(agent_config.style, agent_config.prompt_mode)
    report: dict = {"iterations": []}
    t = adapt_config.explore_steps
    for i in range(1, adapt_config.iterations + 1):
        if adapt_config.same_questions_across_iterations:
            batch = list(questions[:t])
        else:
            batch = list(questions[(i - 1) * t : i * t])
        trajectories = explore(
            batch, kb, backend, agent_config, t, retriever=retriever, templates=templates
        )
        collected = collect(
            trajectories,
            adapt_config.feedback_mode,
            gold_by_id=gold_by_id,
            kb=kb,
            retriever=retriever,
            store=store,
            iteration=i,
        )
        export_path = export_dir / f"adapt-iter{i}.jsonl"
        export_labeled(collected.labeled, export_path)
        entry = {
            "iteration": i,
            "explored": len(trajectories),
            "ok": sum(1 for x in trajectories if x.status == "ok"),
            "labeled": len(collected.labeled),
            "skipped": collected.skipped,
            "pending": collected.pending,
            "export": str(export_path),
        }
        report["iterations"].append(entry)
        if exploit_hook is not None:
            new_backend = exploit_hook(export_path, i)
            if new_backend is not None:
                backend = new_backend
    return report
