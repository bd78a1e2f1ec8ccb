"""The four-way failure taxonomy: canonical cases plus a 30-case totality
sweep over hand-built predictions."""

import pytest

from fsmqa.metrics import ErrorCategory, Prediction, classify_error
from fsmqa.transcript import RunTranscript, SubQuestionStep


def make_prediction(record, **kwargs):
    defaults = dict(
        record_id=record.id, answer=record.gold_answer, strategy="sg-fsm1",
        format_ok_strict=True, format_ok_tolerant=True,
    )
    defaults.update(kwargs)
    return Prediction(**defaults)


def make_transcript(record, hops):
    t = RunTranscript(record_id=record.id, strategy="sg-fsm1", setting=1)
    for i, (title, answer) in enumerate(hops, start=1):
        t.steps.append(SubQuestionStep(i, f"hop {i}?", title, answer))
    return t


@pytest.fixture(scope="module")
def record(hotpot_records):
    return hotpot_records[0]  # gold titles: The Mask of Fu Manchu, Blind Shaft


@pytest.fixture(scope="module")
def musique_record(musique_records):
    return musique_records[0]  # gold decomposition: Valdora / 1984


def test_canonical_hallucination(record):
    """Correct answer, wrong paragraph title."""
    prediction = make_prediction(
        record, supporting_facts=[("Gallery Picture 1", 0)]
    )
    assert classify_error(prediction, None, record) is ErrorCategory.HALLUCINATION_RESPONSE


def test_canonical_format_mismatch(record):
    prediction = make_prediction(
        record, answer="", format_ok_strict=False, format_ok_tolerant=False
    )
    assert classify_error(prediction, None, record) is ErrorCategory.FORMAT_MISMATCH


def test_canonical_error_propagation(record):
    """Wrong answer; the first hop searched a non-gold paragraph."""
    prediction = make_prediction(record, answer="Blind Shaft")
    transcript = make_transcript(record, [("Gallery Picture 2", "1951"), ("Blind Shaft", "2003")])
    assert classify_error(prediction, transcript, record) is ErrorCategory.ERROR_PROPAGATION


def test_canonical_lost_in_middle(record):
    """Wrong final answer, every hop consistent with the gold path."""
    prediction = make_prediction(record, answer="Blind Shaft")
    transcript = make_transcript(
        record, [("The Mask of Fu Manchu", "1932"), ("Blind Shaft", "2003")]
    )
    assert classify_error(prediction, transcript, record) is ErrorCategory.LOST_IN_MIDDLE


def test_q7_is_format_mismatch(record):
    prediction = make_prediction(
        record, answer="", format_ok_strict=False, format_ok_tolerant=False,
        terminal_state="q7_early_withdrawal",
    )
    assert classify_error(prediction, None, record) is ErrorCategory.FORMAT_MISMATCH


def test_correct_with_good_supporting_facts(record):
    prediction = make_prediction(
        record, supporting_facts=[("The Mask of Fu Manchu", 0), ("Blind Shaft", 0)]
    )
    assert classify_error(prediction, None, record) is ErrorCategory.CORRECT


def test_correct_setting1_no_facts_needed(musique_record):
    # Musique has no sentence-level gold, so a bare correct answer is correct.
    prediction = make_prediction(musique_record, answer="1984", supporting_facts=None)
    assert classify_error(prediction, None, musique_record) is ErrorCategory.CORRECT


def test_missing_facts_where_required_is_hallucination(record):
    prediction = make_prediction(record, supporting_facts=None)
    assert classify_error(prediction, None, record) is ErrorCategory.HALLUCINATION_RESPONSE


def test_gold_decomposition_conflict_is_propagation(musique_record):
    prediction = make_prediction(musique_record, answer="1999")
    transcript = make_transcript(
        musique_record, [("Anna Reyes", "Porto"), ("Valdora Museum", "1999")]
    )
    assert classify_error(prediction, transcript, musique_record) is ErrorCategory.ERROR_PROPAGATION


def test_no_trace_is_unclassified(record):
    prediction = make_prediction(record, answer="something else", supporting_facts=None)
    assert classify_error(prediction, None, record) is ErrorCategory.UNCLASSIFIED


def test_baseline_predicted_facts_serve_as_trace(record):
    prediction = make_prediction(
        record, answer="wrong", supporting_facts=[("Gallery Picture 3", 0)], strategy="direct"
    )
    assert classify_error(prediction, None, record) is ErrorCategory.ERROR_PROPAGATION


def _thirty_cases(record, musique_record):
    """30 hand-built predictions covering all four failure classes."""
    cases = []
    gold_sup = [("The Mask of Fu Manchu", 0), ("Blind Shaft", 0)]
    good_hops = [("The Mask of Fu Manchu", "1932"), ("Blind Shaft", "2003")]
    bad_first_hop = [("Gallery Picture 1", "1950"), ("Blind Shaft", "2003")]
    for i in range(6):  # format mismatches: Q7s and unparseable finals
        cases.append((
            make_prediction(record, answer="", format_ok_strict=False,
                            format_ok_tolerant=False,
                            terminal_state="q7_early_withdrawal" if i % 2 else None),
            None, record, ErrorCategory.FORMAT_MISMATCH,
        ))
    for i in range(6):  # hallucinations: right answer, bad or missing evidence
        facts = None if i % 2 else [("Gallery Picture 2", i)]
        cases.append((
            make_prediction(record, supporting_facts=facts),
            None, record, ErrorCategory.HALLUCINATION_RESPONSE,
        ))
    for i in range(6):  # propagation: first hop off the gold paragraphs
        cases.append((
            make_prediction(record, answer=f"wrong {i}"),
            make_transcript(record, bad_first_hop), record,
            ErrorCategory.ERROR_PROPAGATION,
        ))
    for i in range(6):  # lost in the middle: hops fine, synthesis wrong
        cases.append((
            make_prediction(record, answer=f"wrong {i}"),
            make_transcript(record, good_hops), record,
            ErrorCategory.LOST_IN_MIDDLE,
        ))
    for i in range(3):  # correct
        cases.append((
            make_prediction(record, supporting_facts=gold_sup),
            make_transcript(record, good_hops), record, ErrorCategory.CORRECT,
        ))
    for i in range(3):  # wrong answer, nothing to trace
        cases.append((
            make_prediction(musique_record, answer="unknowable"),
            None, musique_record, ErrorCategory.UNCLASSIFIED,
        ))
    return cases


def test_thirty_case_totality(record, musique_record):
    """Every prediction receives exactly one category; intended classes hold."""
    cases = _thirty_cases(record, musique_record)
    assert len(cases) == 30
    for prediction, transcript, rec, expected in cases:
        got = classify_error(prediction, transcript, rec)
        assert isinstance(got, ErrorCategory)
        assert got is expected
