import pytest

from fsmqa.errors import UndefinedTransition
from fsmqa.fsm import (
    ACCEPT_STATES,
    INITIAL_STATE,
    TRANSITION_TABLE,
    FsmBudgets,
    FsmEvent,
    FsmState,
    transition,
)

S, E = FsmState, FsmEvent

EXPECTED_TABLE = {
    (S.Q0_DECOMPOSE, E.PARSE_OK): S.Q1_REVISE_DECOMPOSE,
    (S.Q0_DECOMPOSE, E.BUDGET_EXCEEDED): S.Q7_EARLY_WITHDRAWAL,
    (S.Q0_DECOMPOSE, E.PARSE_FAIL): S.Q0_DECOMPOSE,
    (S.Q1_REVISE_DECOMPOSE, E.PARSE_OK): S.Q2_SEARCH,
    (S.Q1_REVISE_DECOMPOSE, E.PARSE_FAIL): S.Q0_DECOMPOSE,
    (S.Q2_SEARCH, E.SEARCH_RETURNED): S.Q3_REVISE_SEARCH,
    (S.Q3_REVISE_SEARCH, E.PARSE_OK): S.Q4_TERMINATE,
    (S.Q3_REVISE_SEARCH, E.PARSE_FAIL): S.Q2_SEARCH,
    (S.Q4_TERMINATE, E.CONTINUE_DECOMPOSITION): S.Q0_DECOMPOSE,
    (S.Q4_TERMINATE, E.STOP_DECOMPOSITION): S.Q5_ANSWER_FOUND,
    (S.Q5_ANSWER_FOUND, E.SUMMARY_RETURNED): S.Q6_SUMMARIZED,
}


def test_eight_states_seven_events():
    assert len(FsmState) == 8
    assert len(FsmEvent) == 7
    assert INITIAL_STATE is S.Q0_DECOMPOSE
    assert ACCEPT_STATES == {S.Q5_ANSWER_FOUND, S.Q6_SUMMARIZED, S.Q7_EARLY_WITHDRAWAL}


def test_transition_table_exhaustive():
    """Every (state, event) pair: defined successors exactly as listed,
    UndefinedTransition elsewhere."""
    checked = 0
    for state in FsmState:
        for event in FsmEvent:
            checked += 1
            expected = EXPECTED_TABLE.get((state, event))
            if expected is not None:
                assert transition(state, event) is expected
            else:
                with pytest.raises(UndefinedTransition):
                    transition(state, event)
    assert checked == 56
    assert TRANSITION_TABLE == EXPECTED_TABLE


@pytest.mark.parametrize(
    "state,event,successor",
    [
        (S.Q0_DECOMPOSE, E.PARSE_OK, S.Q1_REVISE_DECOMPOSE),
        (S.Q4_TERMINATE, E.STOP_DECOMPOSITION, S.Q5_ANSWER_FOUND),
        (S.Q3_REVISE_SEARCH, E.PARSE_FAIL, S.Q2_SEARCH),
    ],
)
def test_transition_examples(state, event, successor):
    assert transition(state, event) is successor


def test_accept_states_have_no_generic_outgoing_edges():
    for event in FsmEvent:
        with pytest.raises(UndefinedTransition):
            transition(S.Q6_SUMMARIZED, event)
        with pytest.raises(UndefinedTransition):
            transition(S.Q7_EARLY_WITHDRAWAL, event)
    # The single designated edge out of q5 is the summarization one.
    assert transition(S.Q5_ANSWER_FOUND, E.SUMMARY_RETURNED) is S.Q6_SUMMARIZED
    for event in FsmEvent:
        if event is not E.SUMMARY_RETURNED:
            with pytest.raises(UndefinedTransition):
                transition(S.Q5_ANSWER_FOUND, event)


def test_transition_is_pure():
    before = dict(TRANSITION_TABLE)
    transition(S.Q0_DECOMPOSE, E.PARSE_OK)
    with pytest.raises(UndefinedTransition):
        transition(S.Q2_SEARCH, E.PARSE_OK)
    assert TRANSITION_TABLE == before


def test_budget_defaults_and_validation():
    budgets = FsmBudgets()
    assert budgets.max_iterations == 6
    assert budgets.max_revisions_per_output == 2
    FsmBudgets(1, 0)  # boundary values are legal
    with pytest.raises(ValueError):
        FsmBudgets(0, 2)
    with pytest.raises(ValueError):
        FsmBudgets(6, -1)
