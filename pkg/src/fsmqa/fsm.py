"""The state machine proper: states, events, budgets, transition function.

Eight states, of which three accept. The transition function is pure and
total over its table; any other (state, event) pair raises
UndefinedTransition, which always signals an engine bug rather than bad
model output (bad output is an event, not an error).
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

from .errors import UndefinedTransition


class FsmState(str, Enum):
    Q0_DECOMPOSE = "q0_decompose"
    Q1_REVISE_DECOMPOSE = "q1_revise_decompose"
    Q2_SEARCH = "q2_search"
    Q3_REVISE_SEARCH = "q3_revise_search"
    Q4_TERMINATE = "q4_terminate"
    Q5_ANSWER_FOUND = "q5_answer_found"
    Q6_SUMMARIZED = "q6_summarized"
    Q7_EARLY_WITHDRAWAL = "q7_early_withdrawal"


class FsmEvent(str, Enum):
    PARSE_OK = "parse_ok"
    PARSE_FAIL = "parse_fail"
    BUDGET_EXCEEDED = "budget_exceeded"
    CONTINUE_DECOMPOSITION = "continue_decomposition"
    STOP_DECOMPOSITION = "stop_decomposition"
    SEARCH_RETURNED = "search_returned"
    SUMMARY_RETURNED = "summary_returned"


INITIAL_STATE = FsmState.Q0_DECOMPOSE
ACCEPT_STATES = frozenset(
    {FsmState.Q5_ANSWER_FOUND, FsmState.Q6_SUMMARIZED, FsmState.Q7_EARLY_WITHDRAWAL}
)

TRANSITION_TABLE: dict[tuple[FsmState, FsmEvent], FsmState] = {
    (FsmState.Q0_DECOMPOSE, FsmEvent.PARSE_OK): FsmState.Q1_REVISE_DECOMPOSE,
    (FsmState.Q0_DECOMPOSE, FsmEvent.BUDGET_EXCEEDED): FsmState.Q7_EARLY_WITHDRAWAL,
    (FsmState.Q0_DECOMPOSE, FsmEvent.PARSE_FAIL): FsmState.Q0_DECOMPOSE,
    (FsmState.Q1_REVISE_DECOMPOSE, FsmEvent.PARSE_OK): FsmState.Q2_SEARCH,
    (FsmState.Q1_REVISE_DECOMPOSE, FsmEvent.PARSE_FAIL): FsmState.Q0_DECOMPOSE,
    (FsmState.Q2_SEARCH, FsmEvent.SEARCH_RETURNED): FsmState.Q3_REVISE_SEARCH,
    (FsmState.Q3_REVISE_SEARCH, FsmEvent.PARSE_OK): FsmState.Q4_TERMINATE,
    (FsmState.Q3_REVISE_SEARCH, FsmEvent.PARSE_FAIL): FsmState.Q2_SEARCH,
    (FsmState.Q4_TERMINATE, FsmEvent.CONTINUE_DECOMPOSITION): FsmState.Q0_DECOMPOSE,
    (FsmState.Q4_TERMINATE, FsmEvent.STOP_DECOMPOSITION): FsmState.Q5_ANSWER_FOUND,
    (FsmState.Q5_ANSWER_FOUND, FsmEvent.SUMMARY_RETURNED): FsmState.Q6_SUMMARIZED,
}


def transition(state: FsmState, event: FsmEvent) -> FsmState:
    """Successor state for (state, event), per the table. Pure."""
    try:
        return TRANSITION_TABLE[(state, event)]
    except KeyError:
        raise UndefinedTransition(f"no transition from {state.value} on {event.value}") from None


@dataclass(frozen=True)
class FsmBudgets:
    """Loop bounds: fresh decomposition rounds, and revisor calls per output."""

    max_iterations: int = 6
    max_revisions_per_output: int = 2

    def __post_init__(self) -> None:
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if self.max_revisions_per_output < 0:
            raise ValueError("max_revisions_per_output must be >= 0")
