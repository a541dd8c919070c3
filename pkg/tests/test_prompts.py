import pytest

from fsmrag.errors import ContractError
from fsmrag.kb import Passage
from fsmrag.prompts import (
    FEW_SHOT,
    ZERO_SHOT,
    PromptState,
    PromptTemplateSet,
    build_prompt,
    history_slot,
    render_history,
    render_passages,
    render_snippet,
    strip_examples,
)


def passage(text, doc="d", idx=0, title="Title"):
    return Passage(doc_id=doc, index=idx, title=title, text=text)


@pytest.fixture(scope="module")
def zs():
    return PromptTemplateSet.load("hotpotqa", ZERO_SHOT)


@pytest.fixture(scope="module")
def fs():
    return PromptTemplateSet.load("hotpotqa", FEW_SHOT)


def test_render_history_numbered_lines():
    h = [("When was Arthur's Magazine started?", "1844-1846")]
    assert render_history(h) == "1. Q: When was Arthur's Magazine started? A: 1844-1846"


def test_render_history_empty():
    assert render_history([]) == ""
    assert history_slot([]) == ""


def test_render_passages_enumerates():
    ps = [passage(f"text {i}", idx=i) for i in range(3)]
    lines = render_passages(ps).split("\n")
    assert len(lines) == 3
    assert lines[0] == "[1] (title: Title) text 0"
    assert lines[2].startswith("[3] ")


def test_decompose_prompt_contents(zs):
    state = PromptState(
        question="Which came first?",
        history=[("When was A started?", "1844")],
    )
    prompt = build_prompt("decompose", state, zs)
    assert "Main Question: Which came first?" in prompt
    assert "Solved Sub-Queries:\n1. Q: When was A started? A: 1844" in prompt
    assert prompt.endswith("Output:")


def test_decompose_prompt_empty_history_omits_slot(zs):
    prompt = build_prompt("decompose", PromptState(question="Q?"), zs)
    assert "Solved Sub-Queries" not in prompt
    assert "Main Question: Q?\n\nOutput:" in prompt


def test_complete_prompt_lists_evidence(zs):
    state = PromptState(
        question="Q?",
        evidence=[passage("first evidence"), passage("second evidence", idx=1)],
    )
    prompt = build_prompt("complete", state, zs)
    assert "Passages: [1] (title: Title) first evidence\n[2] (title: Title) second evidence" in prompt


def test_judge_without_snippet_is_contract_error(zs):
    with pytest.raises(ContractError, match="judge.*d"):
        build_prompt("judge", PromptState(question="Q?", sub_query="q?"), zs)


def test_answer_without_passages_is_contract_error(zs):
    with pytest.raises(ContractError, match="answer.*P"):
        build_prompt("answer", PromptState(question="Q?", sub_query="q?"), zs)


def test_prompt_is_pure(zs):
    state = PromptState(question="Q?", sub_query="q?", snippet=passage("snippet text"))
    assert build_prompt("judge", state, zs) == build_prompt("judge", state, zs)


def test_modes_differ_only_by_example_block(zs, fs):
    for module in ("decompose", "judge", "answer", "complete"):
        assert strip_examples(fs.templates[module]) == zs.templates[module]
        assert "====Examples End====" in fs.templates[module]
        assert "====Examples End====" not in zs.templates[module]


def test_few_shot_contains_in_context_examples(fs):
    prompt = build_prompt("decompose", PromptState(question="Q?"), fs)
    assert "[Next] When was First for Women magazine started?" in prompt


def test_all_styles_load():
    for style in ("hotpotqa", "pubmedqa", "qasper"):
        for mode in (ZERO_SHOT, FEW_SHOT):
            ts = PromptTemplateSet.load(style, mode)
            assert set(ts.templates) == {"decompose", "judge", "answer", "complete"}


def test_unknown_style_errors():
    with pytest.raises(ContractError, match="nostyle"):
        PromptTemplateSet.load("nostyle")


def test_snippet_render_shape():
    assert render_snippet(passage("body", title="Doc T")) == "(title: Doc T) body"
