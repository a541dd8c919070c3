"""Warm-up builders: counts, scenario targets, seeded determinism, sampling."""

import random

import pytest

from fsmrag.feedback import GoldAnnotation
from fsmrag.kb import KnowledgeBase
from fsmrag.prompts import ZERO_SHOT, PromptTemplateSet
from fsmrag.retrieval import Retriever
from fsmrag.warmup import (
    AnnotatedQuestion,
    BuildReport,
    build_all,
    build_answer_examples,
    build_complete_example,
    build_decompose_examples,
    build_judge_examples,
    example_class,
    sample_balanced,
)

from conftest import make_synthetic

from fsmrag.errors import ContractError


@pytest.fixture(scope="module")
def templates():
    return PromptTemplateSet.load("hotpotqa", ZERO_SHOT)


@pytest.fixture(scope="module")
def synth():
    kb, golds = make_synthetic(seed=11, n_questions=10, hops_choices=(1, 2, 3))
    return kb, [AnnotatedQuestion(g) for g in golds], Retriever(kb)


def test_alignment_invariant_enforced():
    bad = GoldAnnotation(
        question_id="x", question="q", answer="a",
        sub_queries=(("q1", "a1"),), evidence=(("d", 0), ("d", 1)),
    )
    with pytest.raises(ContractError):
        AnnotatedQuestion(bad)


def test_decompose_count_is_hops_plus_one(synth, templates):
    _, questions, _ = synth
    for aq in questions:
        examples = build_decompose_examples(aq, templates)
        assert len(examples) == aq.hops + 1
        next_targets = [e for e in examples if e.target.startswith("[Next]")]
        finish_targets = [e for e in examples if e.target == "[Finish]"]
        assert len(next_targets) == aq.hops
        assert len(finish_targets) == 1


def test_decompose_histories_are_growing_prefixes(synth, templates):
    _, questions, _ = synth
    aq = next(q for q in questions if q.hops == 3)
    examples = build_decompose_examples(aq, templates)
    # the j-th example's target carries the j-th sub-query, in order
    for j, (sub_q, _) in enumerate(aq.gold.sub_queries):
        assert examples[j].target == f"[Next] {sub_q}"
    lengths = [e.input_render.count(". Q: ") for e in examples]
    assert lengths == [0, 1, 2, 3]


def test_judge_targets_agree_with_same_document_rule(synth, templates):
    kb, questions, retriever = synth
    report = BuildReport()
    for aq in questions:
        gold_docs = aq.gold.evidence_docs
        for e in build_judge_examples(aq, kb, retriever, templates, report=report):
            # recover the snippet's document from the prompt rendering
            assert "Document Snippet: (title: " in e.input_render
            title = e.input_render.split("Document Snippet: (title: ")[1].split(")")[0]
            doc_id = next(d for d, doc in kb.documents.items() if doc.title == title)
            expected = "[Relevant]" if doc_id in gold_docs else "[Irrelevant]"
            assert e.target == expected


def test_judge_single_passage_doc_skips_same_document_scenario(templates):
    kb, golds = make_synthetic(seed=3, n_questions=30, hops_choices=(1,))
    retriever = Retriever(kb)
    singles = [
        AnnotatedQuestion(g)
        for g in golds
        if len(kb.doc(g.evidence[0][0]).passages) == 1
    ]
    assert singles, "fixture needs at least one single-passage gold doc"
    report = BuildReport()
    build_judge_examples(singles[0], kb, retriever, templates, report=report)
    assert any(s["scenario"] == "same-document" for s in report.skipped)


def test_answer_cited_index_resolves_to_gold(synth, templates):
    kb, questions, retriever = synth
    rng = random.Random(17)
    for aq in questions:
        for e in build_answer_examples(aq, kb, retriever, templates, rng):
            if not e.target.startswith("[Answerable]"):
                continue
            k = int(e.target.rsplit("[", 1)[1].rstrip("]"))
            block = e.input_render.split("Passages: ")[1].split("\n\nOutput:")[0]
            lines = block.split("\n")
            cited_line = lines[k - 1]
            assert cited_line.startswith(f"[{k}] ")
            assert "resolves to" in cited_line  # the planted gold passage text


def test_answer_unanswerable_excludes_gold(synth, templates):
    kb, questions, retriever = synth
    rng = random.Random(17)
    for aq in questions:
        gold_texts = {kb.passage(*ref).text for ref in aq.gold.evidence}
        for e in build_answer_examples(aq, kb, retriever, templates, rng):
            if e.target == "[Unanswerable]":
                for text in gold_texts:
                    assert text not in e.input_render


def test_answer_seeded_determinism(synth, templates):
    kb, questions, retriever = synth
    runs = []
    for _ in range(2):
        rng = random.Random(17)
        out = []
        for aq in questions:
            out.extend(build_answer_examples(aq, kb, retriever, templates, rng))
        runs.append([e.to_dict() for e in out])
    assert runs[0] == runs[1]


def test_complete_example_copies_gold_answer(synth, templates):
    kb, questions, _ = synth
    aq = questions[0]
    e = build_complete_example(aq, kb, templates)
    assert e.target == aq.gold.answer
    assert "[1] " in e.input_render  # evidence rendered in gold order


def test_build_all_report_covers_cells(synth, templates):
    kb, questions, retriever = synth
    examples, report = build_all(questions, kb, retriever, templates, seed=5)
    assert sum(report.built.values()) == len(examples)
    assert any(k.startswith("decompose/") for k in report.built)
    assert any(k.startswith("complete/") for k in report.built)


def test_sample_balanced_exact_quota(synth, templates):
    kb, questions, retriever = synth
    examples, _ = build_all(questions, kb, retriever, templates, seed=5)
    available = sum(1 for e in examples if (e.module, example_class(e)) == ("decompose", "[Next]"))
    want = available - 1
    sampled, report = sample_balanced(examples, {"decompose": {"[Next]": want}}, seed=9)
    got = sum(1 for e in sampled if (e.module, example_class(e)) == ("decompose", "[Next]"))
    assert got == want
    assert report["decompose/[Next]"]["shortfall"] == 0


def test_sample_balanced_caps_at_availability(synth, templates):
    kb, questions, retriever = synth
    examples, _ = build_all(questions, kb, retriever, templates, seed=5)
    sampled, report = sample_balanced(examples, {"complete": {"*": 10_000}}, seed=9)
    cell = report["complete/*"]
    assert cell["sampled"] == cell["available"] < 10_000
    assert cell["shortfall"] == 10_000 - cell["available"]


def test_sample_balanced_seed_determinism(synth, templates):
    kb, questions, retriever = synth
    examples, _ = build_all(questions, kb, retriever, templates, seed=5)
    quota = {"judge": {"[Relevant]": 5, "[Irrelevant]": 5}}
    a, _ = sample_balanced(examples, quota, seed=4)
    b, _ = sample_balanced(examples, quota, seed=4)
    c, _ = sample_balanced(examples, quota, seed=5)
    assert [e.to_dict() for e in a] == [e.to_dict() for e in b]
    assert [e.to_dict() for e in a] != [e.to_dict() for e in c]
