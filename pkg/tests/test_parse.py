import pytest

from fsmrag.errors import ParseError
from fsmrag.fsm import BranchToken, parse_output
from fsmrag.kb import Passage


def passages(n):
    return [Passage(doc_id="d", index=i, title="t", text=f"p{i}") for i in range(n)]


def test_decompose_next_with_subquery():
    out = parse_output("decompose", "[Next] When was First for Women magazine started?")
    assert out.token is BranchToken.NEXT
    assert out.sub_query == "When was First for Women magazine started?"


def test_decompose_finish():
    assert parse_output("decompose", "[Finish]").token is BranchToken.FINISH


def test_decompose_next_empty_subquery_fails():
    with pytest.raises(ParseError):
        parse_output("decompose", "[Next]   ")


def test_decompose_token_case_sensitive():
    with pytest.raises(ParseError):
        parse_output("decompose", "[next] lowercase token")


def test_judge_tokens():
    assert parse_output("judge", "[Relevant]").token is BranchToken.RELEVANT
    assert parse_output("judge", " [Irrelevant] ").token is BranchToken.IRRELEVANT


def test_judge_without_token_fails():
    with pytest.raises(ParseError):
        parse_output("judge", "maybe relevant")


def test_answer_answerable_payload():
    out = parse_output(
        "answer",
        "[Answerable] Answer: 1844-1846; Relevant Passage ID: [2]",
        passages(3),
    )
    assert out.token is BranchToken.ANSWERABLE
    assert out.answer == "1844-1846"
    assert out.evidence_index == 2


def test_answer_unanswerable():
    assert parse_output("answer", "[Unanswerable]", passages(3)).token is BranchToken.UNANSWERABLE


def test_answer_index_out_of_range():
    with pytest.raises(ParseError, match=r"\[7\]"):
        parse_output("answer", "[Answerable] Answer: x; Relevant Passage ID: [7]", passages(3))


def test_answer_malformed_payload():
    with pytest.raises(ParseError):
        parse_output("answer", "[Answerable] the answer is 42", passages(3))


def test_answer_empty_answer_text():
    with pytest.raises(ParseError):
        parse_output("answer", "[Answerable] Answer: ; Relevant Passage ID: [1]", passages(1))


def test_complete_takes_whole_string():
    out = parse_output("complete", "  Arthur's Magazine  ")
    assert out.token is BranchToken.NONE
    assert out.final_answer == "Arthur's Magazine"
    assert out.raw == "  Arthur's Magazine  "


def test_empty_output_fails():
    with pytest.raises(ParseError):
        parse_output("decompose", "   ")


def test_wrong_module_token_fails():
    with pytest.raises(ParseError):
        parse_output("decompose", "[Relevant]")
    with pytest.raises(ParseError):
        parse_output("judge", "[Next] something")
