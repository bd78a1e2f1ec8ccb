from pathlib import Path

import pytest

from fsmqa.errors import EmptySteps, MissingSlot, UnknownRoleSetting
from fsmqa.prompts import (
    ROLE_SLOTS,
    PromptKit,
    PromptRole,
    paragraphs_block,
    splice_question,
)
from fsmqa.transcript import SubQuestionStep

GOLDEN = Path(__file__).parent / "fixtures" / "golden"


@pytest.fixture(scope="module")
def kit():
    return PromptKit()


def canonical_steps(with_evidence=True):
    ev1 = ("The Mask of Fu Manchu", "released in", "1932") if with_evidence else None
    ev2 = ("Blind Shaft", "released in", "2003") if with_evidence else None
    return [
        SubQuestionStep(1, "What year was The Mask Of Fu Manchu released?",
                        "The Mask of Fu Manchu", "1932", ev1),
        SubQuestionStep(2, "What year was Blind Shaft released?", "Blind Shaft", "2003", ev2),
    ]


def test_paragraph_block_zero_based(canonical_record):
    block = paragraphs_block(canonical_record.paragraphs[:1])
    lines = block.splitlines()
    assert lines[0] == "Title: The Mask of Fu Manchu"
    assert lines[1].startswith("0: ")
    assert lines[2].startswith("1: ")


def test_golden_files_byte_stable(kit, canonical_record):
    """Renders for the canonical record match the checked-in goldens exactly."""
    block = paragraphs_block(canonical_record.paragraphs)
    question = canonical_record.question
    subq = "What year was The Mask Of Fu Manchu released?"
    cases = {
        "decomposer_round1": kit.render(PromptRole.DECOMPOSER, 1, {"question": question}),
        "searcher_s1_round1": kit.render(PromptRole.SEARCHER, 1,
                                         {"subquestion": subq, "paragraphs": block}),
        "searcher_s2_round1": kit.render(PromptRole.SEARCHER, 2,
                                         {"subquestion": subq, "paragraphs": block}),
        "revisor": kit.render(PromptRole.REVISOR, 1,
                              {"illegal_text": 'The answer is { ""subanswers": " 1932,}'}),
        "terminator_round1": kit.render(PromptRole.TERMINATOR, 1,
                                        {"question": question, "subquestion": subq}),
        "terminator_identical": kit.render(PromptRole.TERMINATOR_IDENTICAL, 1,
                                           {"question": question, "subquestion": subq}),
        "direct_s1": kit.render(PromptRole.DIRECT, 1, {"question": question, "paragraphs": block}),
        "direct_s2": kit.render(PromptRole.DIRECT, 2, {"question": question, "paragraphs": block}),
        "cot_s1": kit.render(PromptRole.COT, 1, {"question": question, "paragraphs": block}),
        "cot_s2": kit.render(PromptRole.COT, 2, {"question": question, "paragraphs": block}),
        "spcot_no_demos": kit.render(PromptRole.SPCOT, 2,
                                     {"demonstrations": "", "question": question,
                                      "paragraphs": block}),
        "react_start": kit.render(PromptRole.REACT, 2,
                                  {"question": question, "paragraphs": block, "scratchpad": ""}),
        "summarizer_s1_with_evidence": kit.render_summarizer(
            canonical_steps(True), question, "The Mask Of Fu Manchu"),
        "summarizer_s1_no_evidence": kit.render_summarizer(
            canonical_steps(False), question, "The Mask Of Fu Manchu"),
    }
    for name, rendered in cases.items():
        expected = (GOLDEN / f"{name}.txt").read_text(encoding="utf-8")
        assert rendered.text + "\n" == expected, f"golden drift: {name}"


def test_render_is_deterministic(kit, canonical_record):
    ctx = {"question": canonical_record.question}
    a = kit.render(PromptRole.DECOMPOSER, 1, ctx)
    b = kit.render(PromptRole.DECOMPOSER, 1, ctx)
    assert a.text == b.text
    assert a.token_estimate == len(a.text.split())


def test_decomposer_matches_method_io_box(kit):
    rendered = kit.render(
        PromptRole.DECOMPOSER, 1,
        {"question": "Which film came first, Blind Shaft or The Mask Of Fu Manchu?"},
    )
    assert '{"simple":false,"subquestion":xxx}' in rendered.text
    assert 'Question: "Which film came first, Blind Shaft or The Mask Of Fu Manchu?"' in rendered.text
    assert "Do not reply any other words and provide answers in JSON format!" in rendered.text


def test_revisor_matches_method_io_box(kit):
    rendered = kit.render(
        PromptRole.REVISOR, 1, {"illegal_text": 'The answer is { ""subanswers": " 1932,}'}
    )
    assert "rewrite the illegal json text" in rendered.text
    assert 'Text: The answer is { ""subanswers": " 1932,}' in rendered.text


def test_direct_s2_ends_with_full_chain_requirement(kit, canonical_record):
    rendered = kit.render(
        PromptRole.DIRECT, 2,
        {"question": canonical_record.question,
         "paragraphs": paragraphs_block(canonical_record.paragraphs)},
    )
    assert '"supporting-facts": [[title, sentence id], ...]' in rendered.text
    assert "sentence index (start from 0)" in rendered.text


def test_missing_slot_raises(kit):
    with pytest.raises(MissingSlot):
        kit.render(PromptRole.DECOMPOSER, 1, {})
    with pytest.raises(MissingSlot):
        kit.render(PromptRole.SEARCHER, 1, {"subquestion": "q"})


def test_unknown_role_setting(kit):
    with pytest.raises(UnknownRoleSetting):
        kit.render(PromptRole.DECOMPOSER, 3, {"question": "q"})


def test_slot_audit_round_trip(kit):
    """Slots parsed from each template body equal the documented set."""
    for stem, documented in ROLE_SLOTS.items():
        assert kit.slots_in(stem) == documented, stem


def test_summarizer_single_step(kit):
    steps = canonical_steps()[:1]
    rendered = kit.render_summarizer(steps, "Original?", "1932")
    assert rendered.text.count("Sub-question") == 1
    assert "Evidence: (The Mask of Fu Manchu, released in, 1932)" in rendered.text


def test_summarizer_empty_steps(kit):
    with pytest.raises(EmptySteps):
        kit.render_summarizer([], "Original?", "x")


def test_summarizer_evidence_line_omitted_without_triples(kit):
    rendered = kit.render_summarizer(canonical_steps(False), "Original?", "x")
    assert "Evidence:" not in rendered.text


def test_template_dir_override(tmp_path, canonical_record):
    custom = tmp_path / "templates"
    custom.mkdir()
    (custom / "decomposer.txt").write_text("Split this: {{question}}", encoding="utf-8")
    kit = PromptKit(custom)
    rendered = kit.render(PromptRole.DECOMPOSER, 1, {"question": "Q?"})
    assert rendered.text == "Split this: Q?"
    with pytest.raises(UnknownRoleSetting):
        kit.render(PromptRole.SEARCHER, 1, {"subquestion": "q", "paragraphs": "p"})


def test_splice_question():
    spliced = splice_question("Original?", [("first sub", "42")])
    assert spliced == 'Original? — where "first sub" has answer "42"'
    assert splice_question("Original?", []) == "Original?"
    two = splice_question("O?", [("a", "1"), ("b", "2")])
    assert two.endswith('"b" has answer "2"') and '"a" has answer "1"' in two
