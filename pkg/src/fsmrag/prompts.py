"""Prompt construction for the four LLM modules.

Templates are plain text files shipped as package data, one per
(style, module); the few-shot example block is delimited in the text and
stripped for zero-shot mode, so the two modes differ only by that block.
Slots: {Q} main question, {H} solved sub-query history, {q} current
sub-query, {d} document snippet, {P} candidate passages, {E} evidence
passages.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Sequence

from .errors import ContractError
from .kb import Passage

LLM_MODULES = ("decompose", "judge", "answer", "complete")

FEW_SHOT = "few_shot"
ZERO_SHOT = "zero_shot"

_EXAMPLES_START = "HERE ARE SEVERAL EXAMPLES:"
_EXAMPLES_END = "====Examples End===="
_SLOT_RE = re.compile(r"\{([QHqdPE])\}")

# which slots each module's template consumes, and which are allowed empty
_REQUIRED_SLOTS = {
    "decompose": ("Q", "H"),
    "judge": ("Q", "H", "q", "d"),
    "answer": ("Q", "H", "q", "P"),
    "complete": ("Q", "E"),
}


def render_history(history: Sequence[tuple[str, str]]) -> str:
    """Numbered '1. Q: <q> A: <a>' lines; empty history renders empty."""
    return "\n".join(f"{i}. Q: {q} A: {a}" for i, (q, a) in enumerate(history, start=1))


def history_slot(history: Sequence[tuple[str, str]]) -> str:
    if not history:
        return ""
    return "\n\nSolved Sub-Queries:\n" + render_history(history)


def render_snippet(p: Passage) -> str:
    return f"(title: {p.title}) {p.text}"


def render_passages(passages: Sequence[Passage]) -> str:
    """'[k] (title: <title>) <text>' lines, k 1-based."""
    return "\n".join(f"[{i}] {render_snippet(p)}" for i, p in enumerate(passages, start=1))


def strip_examples(template: str) -> str:
    """Drop the delimited in-context example block, leaving one blank line."""
    if _EXAMPLES_START not in template:
        return template
    head, _, rest = template.partition(_EXAMPLES_START)
    _, _, tail = rest.partition(_EXAMPLES_END)
    return head.rstrip("\n") + "\n\n" + tail.lstrip("\n")


@dataclass
class PromptState:
    """The context variables a module prompt can draw on."""

    question: str
    history: Sequence[tuple[str, str]] = ()
    sub_query: str | None = None
    snippet: Passage | None = None
    passages: Sequence[Passage] | None = None
    evidence: Sequence[Passage] | None = None


@dataclass
class PromptTemplateSet:
    """Per-module templates for one dataset style and prompt mode."""

    style: str
    mode: str
    templates: dict[str, str] = field(default_factory=dict)

    @classmethod
    def load(cls, style: str = "hotpotqa", mode: str = ZERO_SHOT,
             template_dir: str | Path | None = None) -> "PromptTemplateSet":
        if mode not in (FEW_SHOT, ZERO_SHOT):
            raise ContractError(f"unknown prompt mode: {mode!r}")
        templates = {}
        for module in LLM_MODULES:
            if template_dir is not None:
                text = Path(template_dir, style, f"{module}.txt").read_text(encoding="utf-8")
            else:
                res = resources.files("fsmrag").joinpath("templates", style, f"{module}.txt")
                try:
                    text = res.read_text(encoding="utf-8")
                except FileNotFoundError:
                    raise ContractError(f"no templates for style {style!r}") from None
            if mode == ZERO_SHOT:
                text = strip_examples(text)
            templates[module] = text.rstrip("\n")
        return cls(style=style, mode=mode, templates=templates)


def build_prompt(module: str, state: PromptState, templates: PromptTemplateSet) -> str:
    """Fill the module's template from the prompt state.

    Raises ContractError naming the module and slot when a required
    variable is missing from the state.
    """
    if module not in LLM_MODULES:
        raise ContractError(f"no prompt template for module {module!r}")
    values: dict[str, str] = {"Q": state.question, "H": history_slot(state.history)}
    for slot in _REQUIRED_SLOTS[module]:
        if slot == "q":
            if not state.sub_query:
                raise ContractError(f"{module}: missing slot q (current sub-query)")
            values["q"] = state.sub_query
        elif slot == "d":
            if state.snippet is None:
                raise ContractError(f"{module}: missing slot d (document snippet)")
            values["d"] = render_snippet(state.snippet)
        elif slot == "P":
            if state.passages is None:
                raise ContractError(f"{module}: missing slot P (candidate passages)")
            values["P"] = render_passages(state.passages)
        elif slot == "E":
            if state.evidence is None:
                raise ContractError(f"{module}: missing slot E (evidence passages)")
            values["E"] = render_passages(state.evidence)
    template = templates.templates[module]
    return _SLOT_RE.sub(lambda m: values.get(m.group(1), m.group(0)), template)
