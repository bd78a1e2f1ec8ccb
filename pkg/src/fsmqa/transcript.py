"""Run transcripts: the ordered log every strategy produces.

One JSON document per run; a batch appends them as lines to the run
directory's transcripts.jsonl. Transcripts embed the record snapshot and the
run configuration so a completed run replays offline with no other inputs.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any

from .fsm import ACCEPT_STATES, FsmEvent, FsmState, transition
from .errors import UndefinedTransition

TRANSCRIPT_SCHEMA_VERSION = 1

BLANK_ANSWER = ""


@dataclass(frozen=True)
class StepRecord:
    """One state visit. ``exchanges`` holds every (prompt, response) pair the
    visit issued, the primary exchange first and revisor calls after it."""

    state: FsmState | None
    role: str | None
    prompt: str
    raw_response: str
    parse_outcome: FsmEvent | None
    revision_count: int = 0
    wall_time: float = 0.0
    exchanges: tuple[tuple[str, str], ...] = ()

    def to_dict(self) -> dict[str, Any]:
        return {
            "state": self.state.value if self.state else None,
            "role": self.role,
            "prompt": self.prompt,
            "raw_response": self.raw_response,
            "parse_outcome": self.parse_outcome.value if self.parse_outcome else None,
            "revision_count": self.revision_count,
            "wall_time": self.wall_time,
            "exchanges": [list(x) for x in self.exchanges],
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "StepRecord":
        return cls(
            state=FsmState(data["state"]) if data.get("state") else None,
            role=data.get("role"),
            prompt=data.get("prompt", ""),
            raw_response=data.get("raw_response", ""),
            parse_outcome=FsmEvent(data["parse_outcome"]) if data.get("parse_outcome") else None,
            revision_count=data.get("revision_count", 0),
            wall_time=data.get("wall_time", 0.0),
            exchanges=tuple((x[0], x[1]) for x in data.get("exchanges", [])),
        )


@dataclass(frozen=True)
class SubQuestionStep:
    index: int
    subquestion: str
    paragraph_title: str
    subanswer: str
    evidence: tuple[str, str, str] | None = None
    raw_exchanges: tuple[tuple[str, str], ...] = ()

    def to_dict(self) -> dict[str, Any]:
        return {
            "index": self.index,
            "subquestion": self.subquestion,
            "paragraph_title": self.paragraph_title,
            "subanswer": self.subanswer,
            "evidence": list(self.evidence) if self.evidence else None,
            "raw_exchanges": [list(x) for x in self.raw_exchanges],
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "SubQuestionStep":
        ev = data.get("evidence")
        return cls(
            index=data["index"],
            subquestion=data["subquestion"],
            paragraph_title=data["paragraph_title"],
            subanswer=data["subanswer"],
            evidence=(ev[0], ev[1], ev[2]) if ev else None,
            raw_exchanges=tuple((x[0], x[1]) for x in data.get("raw_exchanges", [])),
        )


@dataclass
class RunTranscript:
    record_id: str
    strategy: str
    setting: int
    entries: list[StepRecord] = field(default_factory=list)
    steps: list[SubQuestionStep] = field(default_factory=list)
    terminal_state: FsmState | None = None
    final_answer: str | None = None
    stage1_answer: str | None = None
    summary: dict[str, Any] | None = None
    prediction: dict[str, Any] | None = None
    flags: dict[str, Any] = field(default_factory=dict)
    config: dict[str, Any] = field(default_factory=dict)
    record_snapshot: dict[str, Any] | None = None

    def to_dict(self) -> dict[str, Any]:
        return {
            "schema_version": TRANSCRIPT_SCHEMA_VERSION,
            "record_id": self.record_id,
            "strategy": self.strategy,
            "setting": self.setting,
            "entries": [e.to_dict() for e in self.entries],
            "steps": [s.to_dict() for s in self.steps],
            "terminal_state": self.terminal_state.value if self.terminal_state else None,
            "final_answer": self.final_answer,
            "stage1_answer": self.stage1_answer,
            "summary": self.summary,
            "prediction": self.prediction,
            "flags": self.flags,
            "config": self.config,
            "record_snapshot": self.record_snapshot,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "RunTranscript":
        return cls(
            record_id=data["record_id"],
            strategy=data["strategy"],
            setting=data.get("setting", 1),
            entries=[StepRecord.from_dict(e) for e in data.get("entries", [])],
            steps=[SubQuestionStep.from_dict(s) for s in data.get("steps", [])],
            terminal_state=(
                FsmState(data["terminal_state"]) if data.get("terminal_state") else None
            ),
            final_answer=data.get("final_answer"),
            stage1_answer=data.get("stage1_answer"),
            summary=data.get("summary"),
            prediction=data.get("prediction"),
            flags=data.get("flags", {}),
            config=data.get("config", {}),
            record_snapshot=data.get("record_snapshot"),
        )

    def to_line(self) -> str:
        return json.dumps(self.to_dict(), ensure_ascii=False, sort_keys=True)

    @classmethod
    def from_line(cls, line: str) -> "RunTranscript":
        return cls.from_dict(json.loads(line))

    def comparable_dict(self) -> dict[str, Any]:
        """Serialized form with timing fields scrubbed, for equality checks."""
        data = self.to_dict()
        for entry in data["entries"]:
            entry["wall_time"] = 0.0
        return data

    def all_exchanges(self) -> list[tuple[str, str]]:
        out: list[tuple[str, str]] = []
        for entry in self.entries:
            out.extend(entry.exchanges)
        return out


def verify_path(transcript: RunTranscript) -> None:
    """Replay the transition function over the entries.

    Raises UndefinedTransition when the visited sequence is not a valid walk.
    Two engine-level terminal escapes are allowed beyond the pure table: a
    final budget-exhaustion event entering early withdrawal from a non-q0
    state, and a final failed-summary event that leaves the run at q5.
    """
    if not transcript.entries or transcript.entries[0].state is None:
        return  # single-shot strategy transcripts carry no state walk
    current = FsmState.Q0_DECOMPOSE
    last = len(transcript.entries) - 1
    for i, entry in enumerate(transcript.entries):
        if entry.state != current:
            raise UndefinedTransition(
                f"entry {i}: expected state {current.value}, recorded {entry.state}"
            )
        if entry.parse_outcome is None:
            raise UndefinedTransition(f"entry {i}: missing event")
        terminal_escape = (
            i == last
            and entry.parse_outcome is FsmEvent.BUDGET_EXCEEDED
            and transcript.terminal_state is FsmState.Q7_EARLY_WITHDRAWAL
        )
        failed_summary = (
            i == last
            and entry.parse_outcome is FsmEvent.PARSE_FAIL
            and current is FsmState.Q5_ANSWER_FOUND
            and transcript.terminal_state is FsmState.Q5_ANSWER_FOUND
        )
        if terminal_escape:
            current = FsmState.Q7_EARLY_WITHDRAWAL
            continue
        if failed_summary:
            continue
        current = transition(current, entry.parse_outcome)
    if transcript.terminal_state is not None:
        if current != transcript.terminal_state:
            raise UndefinedTransition(
                f"walk ends at {current.value}, transcript says {transcript.terminal_state.value}"
            )
        if transcript.terminal_state not in ACCEPT_STATES:
            raise UndefinedTransition(f"terminal state {current.value} is not an accept state")
