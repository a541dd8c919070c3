"""The agent's reasoning state machine.

States execute either a tool (document/passage retrieval, paging) or an LLM
module (decompose, judge, answer, complete). LLM outputs start with a branch
token that, together with the current state, selects the successor state.
The loop terminates structurally: every return to the decompose state grows
the solved-sub-query history, and the history is capped.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from enum import Enum
from typing import IO, Callable, Iterable, Iterator

from .backends import LLMBackend
from .config import AgentConfig
from .errors import BackendError, ParseError, ProtocolError
from .kb import KnowledgeBase, Passage
from .prompts import (
    PromptState,
    PromptTemplateSet,
    build_prompt,
    render_passages,
    render_snippet,
)
from .retrieval import Retriever, next_doc

NO_ANSWER = "No Answer"

_ANSWER_RE = re.compile(r"\s*Answer:\s*(.+?);\s*Relevant Passage ID:\s*\[(\d+)\]", re.DOTALL)


class StateId(str, Enum):
    DECOMPOSE = "decompose"
    DOC_RETRIEVAL = "doc_retrieval"
    RELEVANCE_JUDGMENT = "relevance_judgment"
    NEXT_DOC = "next_doc"
    PASSAGE_RETRIEVAL = "passage_retrieval"
    ANSWER_EXTRACTION = "answer_extraction"
    TASK_COMPLETION = "task_completion"
    FINAL = "final"


class BranchToken(str, Enum):
    NEXT = "[Next]"
    FINISH = "[Finish]"
    RELEVANT = "[Relevant]"
    IRRELEVANT = "[Irrelevant]"
    ANSWERABLE = "[Answerable]"
    UNANSWERABLE = "[Unanswerable]"
    NONE = ""


MODULE_FOR_STATE = {
    StateId.DECOMPOSE: "decompose",
    StateId.DOC_RETRIEVAL: "search_doc",
    StateId.RELEVANCE_JUDGMENT: "judge",
    StateId.NEXT_DOC: "next_doc",
    StateId.PASSAGE_RETRIEVAL: "search_psg",
    StateId.ANSWER_EXTRACTION: "answer",
    StateId.TASK_COMPLETION: "complete",
}

LLM_STATES = frozenset(
    {
        StateId.DECOMPOSE,
        StateId.RELEVANCE_JUDGMENT,
        StateId.ANSWER_EXTRACTION,
        StateId.TASK_COMPLETION,
    }
)

# conditions for the paging state, which branches on the tool result
COND_SNIPPET = "snippet"
COND_EXHAUSTED = "exhausted"

_WIRING: dict[tuple[StateId, object], StateId] = {
    (StateId.DECOMPOSE, BranchToken.NEXT): StateId.DOC_RETRIEVAL,
    (StateId.DECOMPOSE, BranchToken.FINISH): StateId.TASK_COMPLETION,
    (StateId.DOC_RETRIEVAL, BranchToken.NONE): StateId.RELEVANCE_JUDGMENT,
    (StateId.RELEVANCE_JUDGMENT, BranchToken.IRRELEVANT): StateId.NEXT_DOC,
    (StateId.RELEVANCE_JUDGMENT, BranchToken.RELEVANT): StateId.PASSAGE_RETRIEVAL,
    (StateId.NEXT_DOC, COND_SNIPPET): StateId.RELEVANCE_JUDGMENT,
    (StateId.NEXT_DOC, COND_EXHAUSTED): StateId.DECOMPOSE,
    (StateId.PASSAGE_RETRIEVAL, BranchToken.NONE): StateId.ANSWER_EXTRACTION,
    (StateId.ANSWER_EXTRACTION, BranchToken.UNANSWERABLE): StateId.NEXT_DOC,
    (StateId.ANSWER_EXTRACTION, BranchToken.ANSWERABLE): StateId.DECOMPOSE,
    (StateId.TASK_COMPLETION, BranchToken.NONE): StateId.FINAL,
}


@dataclass
class ModuleOutput:
    """Parsed module result: branch token plus the module-specific payload."""

    raw: str
    token: BranchToken
    sub_query: str | None = None
    answer: str | None = None
    evidence_index: int | None = None  # 1-based into the presented passages
    final_answer: str | None = None
    passage: Passage | None = None  # tool snippet (search_doc / next_doc)
    passages: list[Passage] | None = None  # tool passage list (search_psg)


def parse_output(
    module: str, raw: str, presented_passages: list[Passage] | None = None
) -> ModuleOutput:
    """Parse one LLM module output.

    Branch tokens are matched case-sensitively at the start of the trimmed
    string; the payload grammar depends on the module.
    """
    text = raw.strip()
    if not text:
        raise ParseError(f"{module}: empty output")
    if module == "complete":
        return ModuleOutput(raw=raw, token=BranchToken.NONE, final_answer=text)
    if module == "decompose":
        if text.startswith(BranchToken.NEXT.value):
            sub_query = text[len(BranchToken.NEXT.value):].strip()
            if not sub_query:
                raise ParseError("decompose: [Next] with empty sub-query")
            return ModuleOutput(raw=raw, token=BranchToken.NEXT, sub_query=sub_query)
        if text.startswith(BranchToken.FINISH.value):
            return ModuleOutput(raw=raw, token=BranchToken.FINISH)
        raise ParseError(f"decompose: no branch token in {text[:60]!r}")
    if module == "judge":
        for token in (BranchToken.RELEVANT, BranchToken.IRRELEVANT):
            if text.startswith(token.value):
                return ModuleOutput(raw=raw, token=token)
        raise ParseError(f"judge: no branch token in {text[:60]!r}")
    if module == "answer":
        if text.startswith(BranchToken.UNANSWERABLE.value):
            return ModuleOutput(raw=raw, token=BranchToken.UNANSWERABLE)
        if text.startswith(BranchToken.ANSWERABLE.value):
            rest = text[len(BranchToken.ANSWERABLE.value):]
            m = _ANSWER_RE.match(rest)
            if not m:
                raise ParseError(f"answer: malformed payload in {text[:80]!r}")
            answer = m.group(1).strip()
            k = int(m.group(2))
            if not answer:
                raise ParseError("answer: empty answer text")
            if presented_passages is None or not 1 <= k <= len(presented_passages):
                raise ParseError(
                    f"answer: passage id [{k}] outside the presented list "
                    f"of {0 if presented_passages is None else len(presented_passages)}"
                )
            return ModuleOutput(
                raw=raw, token=BranchToken.ANSWERABLE, answer=answer, evidence_index=k
            )
        raise ParseError(f"answer: no branch token in {text[:60]!r}")
    raise ParseError(f"unknown LLM module: {module!r}")


@dataclass
class AgentContext:
    """Live variables of one agent run; owned by a single run."""

    question: str
    subquery_cap: int
    history: list[tuple[str, str]] = field(default_factory=list)
    evidence: list[Passage] = field(default_factory=list)
    sub_query: str | None = None
    seen_snippets: list[Passage] = field(default_factory=list)
    snippet: Passage | None = None
    passages: list[Passage] | None = None
    session: object = None
    llm_calls: int = 0
    tool_calls: int = 0

    def prompt_state(self) -> PromptState:
        return PromptState(
            question=self.question,
            history=list(self.history),
            sub_query=self.sub_query,
            snippet=self.snippet,
            passages=self.passages,
            evidence=self.evidence,
        )

    def _reset_round(self) -> None:
        self.sub_query = None
        self.seen_snippets = []
        self.snippet = None
        self.passages = None
        self.session = None


def condition_of(state: StateId, output: ModuleOutput):
    if state is StateId.NEXT_DOC:
        # exhaustion renders as an empty raw output, so deserialized steps
        # classify correctly even without resolved passage objects
        exhausted = output.passage is None and not output.raw
        return COND_EXHAUSTED if exhausted else COND_SNIPPET
    return output.token


def successor(state: StateId, condition, history_len: int, subquery_cap: int) -> StateId:
    """Pure transition lookup, including the cap that forces task completion
    whenever the decompose state would be entered with a full history."""
    if state is StateId.FINAL:
        raise ProtocolError("no transitions leave the final state")
    nxt = _WIRING.get((state, condition))
    if nxt is None:
        name = condition if isinstance(condition, str) else condition.value or "<none>"
        raise ProtocolError(f"state {state.value!r} has no transition on {name!r}")
    if nxt is StateId.DECOMPOSE and history_len >= subquery_cap:
        return StateId.TASK_COMPLETION
    return nxt


def transition(state: StateId, output: ModuleOutput, ctx: AgentContext) -> StateId:
    """Apply the transition function, with its context side effects.

    Exhausting the document pages records (sub_query, "No Answer") and keeps
    the first-seen snippet as fallback evidence; an answerable extraction
    records the answer and the cited passage.
    """
    cond = condition_of(state, output)
    if state is StateId.DECOMPOSE and output.token is BranchToken.NEXT:
        ctx.sub_query = output.sub_query
    if state is StateId.NEXT_DOC and cond == COND_EXHAUSTED:
        ctx.history.append((ctx.sub_query or "", NO_ANSWER))
        ctx.evidence.append(ctx.seen_snippets[0])
        nxt = successor(state, cond, len(ctx.history), ctx.subquery_cap)
        ctx._reset_round()
        return nxt
    if state is StateId.ANSWER_EXTRACTION and output.token is BranchToken.ANSWERABLE:
        if ctx.passages is None or output.evidence_index is None:
            raise ProtocolError("answerable output without presented passages")
        cited = ctx.passages[output.evidence_index - 1]
        ctx.history.append((ctx.sub_query or "", output.answer or ""))
        ctx.evidence.append(cited)
        nxt = successor(state, cond, len(ctx.history), ctx.subquery_cap)
        ctx._reset_round()
        return nxt
    return successor(state, cond, len(ctx.history), ctx.subquery_cap)


@dataclass
class StepSnapshot:
    """Context variables as they stood when the step's module ran."""

    history: list[tuple[str, str]] = field(default_factory=list)
    evidence: list[tuple[str, int]] = field(default_factory=list)
    sub_query: str | None = None
    snippet: tuple[str, int] | None = None
    passages: list[tuple[str, int]] | None = None

    def to_dict(self) -> dict:
        return {
            "history": [[q, a] for q, a in self.history],
            "evidence": [{"doc_id": d, "index": i} for d, i in self.evidence],
            "sub_query": self.sub_query,
            "snippet": None
            if self.snippet is None
            else {"doc_id": self.snippet[0], "index": self.snippet[1]},
            "passages": None
            if self.passages is None
            else [{"doc_id": d, "index": i} for d, i in self.passages],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "StepSnapshot":
        return cls(
            history=[(q, a) for q, a in d.get("history", [])],
            evidence=[(r["doc_id"], r["index"]) for r in d.get("evidence", [])],
            sub_query=d.get("sub_query"),
            snippet=None
            if d.get("snippet") is None
            else (d["snippet"]["doc_id"], d["snippet"]["index"]),
            passages=None
            if d.get("passages") is None
            else [(r["doc_id"], r["index"]) for r in d["passages"]],
        )


def snapshot_of(ctx: AgentContext) -> StepSnapshot:
    return StepSnapshot(
        history=list(ctx.history),
        evidence=[p.ref for p in ctx.evidence],
        sub_query=ctx.sub_query,
        snippet=None if ctx.snippet is None else ctx.snippet.ref,
        passages=None if ctx.passages is None else [p.ref for p in ctx.passages],
    )


@dataclass
class StepRecord:
    state: StateId
    module: str
    input_render: str
    output: ModuleOutput
    is_llm: bool
    snapshot: StepSnapshot

    def to_dict(self) -> dict:
        payload: dict = {}
        o = self.output
        if o.sub_query is not None:
            payload["sub_query"] = o.sub_query
        if o.answer is not None:
            payload["answer"] = o.answer
        if o.evidence_index is not None:
            payload["evidence_index"] = o.evidence_index
        if o.final_answer is not None:
            payload["final_answer"] = o.final_answer
        if o.passage is not None:
            payload["passage"] = {"doc_id": o.passage.doc_id, "index": o.passage.index}
        if o.passages is not None:
            payload["passages"] = [
                {"doc_id": p.doc_id, "index": p.index} for p in o.passages
            ]
        if self.module == "next_doc" and o.passage is None:
            payload["exhausted"] = True
        return {
            "state": self.state.value,
            "module": self.module,
            "input_render": self.input_render,
            "raw_output": o.raw,
            "token": o.token.value,
            "is_llm": self.is_llm,
            "payload": payload,
            "snapshot": self.snapshot.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict, kb: KnowledgeBase | None = None) -> "StepRecord":
        payload = d.get("payload", {})

        def resolve(ref: dict) -> Passage | None:
            if kb is None:
                return None
            return kb.passage(ref["doc_id"], ref["index"])

        passage = resolve(payload["passage"]) if "passage" in payload else None
        passages = (
            [p for p in (resolve(r) for r in payload["passages"]) if p is not None]
            if "passages" in payload
            else None
        )
        output = ModuleOutput(
            raw=d["raw_output"],
            token=BranchToken(d.get("token", "")),
            sub_query=payload.get("sub_query"),
            answer=payload.get("answer"),
            evidence_index=payload.get("evidence_index"),
            final_answer=payload.get("final_answer"),
            passage=passage,
            passages=passages,
        )
        return cls(
            state=StateId(d["state"]),
            module=d["module"],
            input_render=d["input_render"],
            output=output,
            is_llm=bool(d.get("is_llm", d["module"] in ("decompose", "judge", "answer", "complete"))),
            snapshot=StepSnapshot.from_dict(d.get("snapshot", {})),
        )


def whitespace_tokens(text: str) -> int:
    return len(text.split())


@dataclass
class Trajectory:
    question_id: str
    question: str
    steps: list[StepRecord]
    final_answer: str
    evidence: list[tuple[str, int]]
    status: str  # "ok" | "failed"
    config: dict
    error: dict | None = None
    iteration: int | None = None

    def llm_steps(self) -> list[tuple[int, StepRecord]]:
        return [(i, s) for i, s in enumerate(self.steps) if s.is_llm]

    def to_dict(self, tokenizer: Callable[[str], int] = whitespace_tokens) -> dict:
        d = {
            "question_id": self.question_id,
            "question": self.question,
            "steps": [s.to_dict() for s in self.steps],
            "final_answer": self.final_answer,
            "evidence": [{"doc_id": doc, "index": i} for doc, i in self.evidence],
            "stats": trajectory_stats(self, tokenizer),
            "status": self.status,
            "config": self.config,
        }
        if self.error is not None:
            d["error"] = self.error
        if self.iteration is not None:
            d["iteration"] = self.iteration
        return d

    @classmethod
    def from_dict(cls, d: dict, kb: KnowledgeBase | None = None) -> "Trajectory":
        return cls(
            question_id=d["question_id"],
            question=d.get("question", ""),
            steps=[StepRecord.from_dict(s, kb) for s in d["steps"]],
            final_answer=d.get("final_answer", ""),
            evidence=[(r["doc_id"], r["index"]) for r in d.get("evidence", [])],
            status=d.get("status", "ok"),
            config=d.get("config", {}),
            error=d.get("error"),
            iteration=d.get("iteration"),
        )


def trajectory_stats(
    t: Trajectory, tokenizer: Callable[[str], int] = whitespace_tokens
) -> dict:
    """Step and token tallies; tokens cover LLM inputs and outputs only."""
    llm = [s for s in t.steps if s.is_llm]
    tokens = sum(tokenizer(s.input_render) + tokenizer(s.output.raw) for s in llm)
    return {"steps": len(t.steps), "llm_steps": len(llm), "tokens": tokens}


def step_bound(config: AgentConfig) -> int:
    return 2 + config.subquery_cap * (2 + 4 * config.max_docs)


def run(
    question: str,
    kb: KnowledgeBase,
    backend: LLMBackend,
    config: AgentConfig,
    retriever: Retriever | None = None,
    templates: PromptTemplateSet | None = None,
    question_id: str = "q0",
) -> tuple[str, Trajectory]:
    """Run the reasoning loop on one question until the final state.

    Parse failures get one retry of the same call; a second failure returns
    a trajectory marked failed at that step. Backend transport errors are
    raised with the step index attached.
    """
    if retriever is None:
        retriever = Retriever(kb, max_docs=config.max_docs, top_psg=config.top_psg)
    if templates is None:
        templates = PromptTemplateSet.load(config.style, config.prompt_mode)
    ctx = AgentContext(question=question, subquery_cap=config.subquery_cap)
    state = StateId.DECOMPOSE
    steps: list[StepRecord] = []
    limit = step_bound(config)

    def make_trajectory(status: str, final: str, error: dict | None = None) -> Trajectory:
        return Trajectory(
            question_id=question_id,
            question=question,
            steps=steps,
            final_answer=final,
            evidence=[p.ref for p in ctx.evidence],
            status=status,
            config=config.to_dict(),
            error=error,
        )

    while state is not StateId.FINAL:
        if len(steps) >= limit:
            raise ProtocolError(f"step bound {limit} exceeded; state machine did not converge")
        module = MODULE_FOR_STATE[state]
        snap = snapshot_of(ctx)
        if state in LLM_STATES:
            prompt = build_prompt(module, ctx.prompt_state(), templates)
            presented = ctx.passages if state is StateId.ANSWER_EXTRACTION else None
            output = None
            last_error: ParseError | None = None
            last_raw = ""
            for _ in range(config.parse_retries + 1):
                try:
                    raw = backend.complete(module, prompt)
                except BackendError as e:
                    raise BackendError(f"{e} (step {len(steps)}, module {module})") from e
                ctx.llm_calls += 1
                last_raw = raw
                try:
                    output = parse_output(module, raw, presented)
                    break
                except ParseError as e:
                    last_error = e
            if output is None:
                steps.append(
                    StepRecord(state, module, prompt,
                               ModuleOutput(raw=last_raw, token=BranchToken.NONE),
                               True, snap)
                )
                return "", make_trajectory(
                    "failed", "",
                    {"step_index": len(steps) - 1, "reason": f"parse error: {last_error}"},
                )
            steps.append(StepRecord(state, module, prompt, output, True, snap))
        else:
            ctx.tool_calls += 1
            if state is StateId.DOC_RETRIEVAL:
                session, snip = retriever.search_doc(ctx.sub_query or "", config.max_docs)
                ctx.session = session
                ctx.seen_snippets = [snip]
                ctx.snippet = snip
                output = ModuleOutput(raw=render_snippet(snip), token=BranchToken.NONE, passage=snip)
                render = ctx.sub_query or ""
            elif state is StateId.NEXT_DOC:
                snip = next_doc(ctx.session)  # type: ignore[arg-type]
                if snip is not None:
                    ctx.seen_snippets.append(snip)
                    ctx.snippet = snip
                output = ModuleOutput(
                    raw=render_snippet(snip) if snip is not None else "",
                    token=BranchToken.NONE,
                    passage=snip,
                )
                render = ""
            elif state is StateId.PASSAGE_RETRIEVAL:
                assert ctx.snippet is not None
                plist = retriever.search_psg(ctx.sub_query or "", ctx.snippet.doc_id, config.top_psg)
                ctx.passages = plist
                output = ModuleOutput(raw=render_passages(plist), token=BranchToken.NONE, passages=plist)
                render = f"{ctx.sub_query or ''} [doc_id: {ctx.snippet.doc_id}]"
            else:  # pragma: no cover - unreachable
                raise ProtocolError(f"unhandled tool state {state}")
            steps.append(StepRecord(state, module, render, output, False, snap))
        state = transition(state, output, ctx)

    final = steps[-1].output.final_answer or ""
    return final, make_trajectory("ok", final)


def validate_trajectory(t: Trajectory) -> list[str]:
    """Check well-formedness against the transition function; [] when valid."""
    problems: list[str] = []
    if not t.steps:
        return ["trajectory has no steps"]
    cap = int(t.config.get("subquery_cap", 1))
    max_docs = int(t.config.get("max_docs", 10))
    bound = 2 + cap * (2 + 4 * max_docs)
    if len(t.steps) > bound:
        problems.append(f"{len(t.steps)} steps exceed bound {bound}")
    if t.steps[0].state is not StateId.DECOMPOSE:
        problems.append(f"first step in state {t.steps[0].state.value!r}, not decompose")
    failed_at = t.error.get("step_index") if (t.error and t.status == "failed") else None
    h_len = 0
    for i, step in enumerate(t.steps):
        if MODULE_FOR_STATE.get(step.state) != step.module:
            problems.append(f"step {i}: module {step.module!r} does not belong to state {step.state.value!r}")
        if step.is_llm != (step.state in LLM_STATES):
            problems.append(f"step {i}: is_llm flag inconsistent with state")
        if len(step.snapshot.history) != h_len:
            problems.append(f"step {i}: snapshot history length {len(step.snapshot.history)} != {h_len}")
        if h_len > cap:
            problems.append(f"step {i}: history exceeds cap {cap}")
        if i == failed_at:
            break
        cond = condition_of(step.state, step.output)
        if step.state is StateId.NEXT_DOC and cond == COND_EXHAUSTED:
            h_len += 1
        elif step.state is StateId.ANSWER_EXTRACTION and step.output.token is BranchToken.ANSWERABLE:
            h_len += 1
        try:
            expected = successor(step.state, cond, h_len, cap)
        except ProtocolError as e:
            problems.append(f"step {i}: {e}")
            break
        if i + 1 < len(t.steps):
            actual = t.steps[i + 1].state
            if actual is not expected:
                problems.append(
                    f"step {i + 1}: state {actual.value!r} inconsistent with transition "
                    f"(expected {expected.value!r})"
                )
                break
        else:
            if t.status == "ok" and expected is not StateId.FINAL:
                problems.append("trajectory ends before reaching the final state")
    if t.status == "ok":
        completes = [i for i, s in enumerate(t.steps) if s.module == "complete"]
        if len(completes) != 1:
            problems.append(f"expected exactly one complete step, found {len(completes)}")
        else:
            llm_indices = [i for i, s in enumerate(t.steps) if s.is_llm]
            if completes[0] != llm_indices[-1]:
                problems.append("complete step is not the last LLM step")
            if t.final_answer != (t.steps[completes[0]].output.final_answer or ""):
                problems.append("final_answer differs from the complete step output")
    elif t.status == "failed":
        if t.error is None:
            problems.append("failed trajectory without error info")
    else:
        problems.append(f"unknown status {t.status!r}")
    return problems


def write_trajectories(trajectories: Iterable[Trajectory], out: IO[str]) -> None:
    for t in trajectories:
        out.write(json.dumps(t.to_dict(), ensure_ascii=False) + "\n")


def read_trajectories(source: Iterable[str], kb: KnowledgeBase | None = None) -> Iterator[Trajectory]:
    for line in source:
        line = line.strip()
        if line:
            yield Trajectory.from_dict(json.loads(line), kb)
