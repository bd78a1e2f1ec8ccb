"""Execution engine for the two-stage guided loop.

Stage 1 iterates decompose -> search -> judge until the judge stops or a
budget runs out; stage 2 lays out the collected hops and asks the model to
check and revise the answer. Every state visit is recorded as one transcript
entry whose event drives the transition function; revisor calls made while
repairing an output are archived on the visit that owns them.

Validation states q1/q3 are always visited; the revisor model call is issued
only when validation actually failed. Budget exhaustion of any kind enters
early withdrawal with the answer left blank.
"""

from __future__ import annotations

import logging
import time
from typing import Any, Callable

from .datasets import QuestionRecord
from .errors import GatewayError
from .fsm import FsmBudgets, FsmEvent, FsmState
from .gateway import Backend, CompletionRequest, CompletionResponse
from .parsing import ParseResult, SchemaKind, parse_with_repair
from .prompts import PromptKit, PromptRole, paragraphs_block, splice_question
from .transcript import BLANK_ANSWER, RunTranscript, StepRecord, SubQuestionStep

logger = logging.getLogger(__name__)

TERMINATOR_VARIANTS = ("continue", "identical")


class FsmEngine:
    def __init__(
        self,
        backend: Backend,
        prompts: PromptKit | None = None,
        *,
        setting: int = 1,
        budgets: FsmBudgets | None = None,
        terminator_variant: str = "continue",
        model_id: str = "default",
        temperature: float = 0.0,
        max_tokens: int = 512,
        request_timeout: float = 60.0,
        deadline: float | None = None,
        clock: Callable[[], float] = time.perf_counter,
    ):
        if setting not in (1, 2):
            raise ValueError("setting must be 1 or 2")
        if terminator_variant not in TERMINATOR_VARIANTS:
            raise ValueError(f"terminator_variant must be one of {TERMINATOR_VARIANTS}")
        self.backend = backend
        self.prompts = prompts or PromptKit()
        self.setting = setting
        self.budgets = budgets or FsmBudgets()
        self.terminator_variant = terminator_variant
        self.model_id = model_id
        self.temperature = temperature
        self.max_tokens = max_tokens
        self.request_timeout = request_timeout
        self.deadline = deadline
        self._clock = clock

    # -- plumbing ---------------------------------------------------------

    def _config_dict(self) -> dict[str, Any]:
        return {
            "setting": self.setting,
            "max_iterations": self.budgets.max_iterations,
            "max_revisions_per_output": self.budgets.max_revisions_per_output,
            "terminator_variant": self.terminator_variant,
            "model_id": self.model_id,
            "temperature": self.temperature,
            "max_tokens": self.max_tokens,
        }

    def _complete(self, prompt: str) -> CompletionResponse:
        if self.deadline is not None and time.monotonic() > self.deadline:
            raise GatewayError("record deadline exceeded")
        request = CompletionRequest(
            prompt=prompt,
            model_id=self.model_id,
            temperature=self.temperature,
            max_tokens=self.max_tokens,
            timeout=self.request_timeout,
        )
        return self.backend.complete(request)

    def _revise(self, illegal_text: str) -> tuple[str, str]:
        prompt = self.prompts.render(
            PromptRole.REVISOR, self.setting, {"illegal_text": illegal_text}
        ).text
        return prompt, self._complete(prompt).text

    def _parse(self, kind: SchemaKind, raw: str) -> ParseResult:
        return parse_with_repair(
            kind, raw, revisor=self._revise,
            max_revisions=self.budgets.max_revisions_per_output,
        )

    @property
    def _searcher_kind(self) -> SchemaKind:
        return SchemaKind.SEARCHER_OUT_S1 if self.setting == 1 else SchemaKind.SEARCHER_OUT_S2

    # -- stage 1 ----------------------------------------------------------

    def run_fsm1(self, record: QuestionRecord) -> RunTranscript:
        if not record.paragraphs:
            raise ValueError("record has no candidate paragraphs")
        transcript = RunTranscript(
            record_id=record.id,
            strategy="sg-fsm1",
            setting=self.setting,
            config=self._config_dict(),
            record_snapshot=record.to_dict(),
        )
        entries = transcript.entries
        steps = transcript.steps
        block = paragraphs_block(record.paragraphs)
        answered: list[tuple[str, str]] = []
        rounds = 0

        def visit(
            state: FsmState,
            role: str | None,
            prompt: str,
            raw: str,
            event: FsmEvent,
            revisions: int = 0,
            exchanges: tuple[tuple[str, str], ...] = (),
            wall: float = 0.0,
        ) -> None:
            entries.append(
                StepRecord(
                    state=state,
                    role=role,
                    prompt=prompt,
                    raw_response=raw,
                    parse_outcome=event,
                    revision_count=revisions,
                    wall_time=wall,
                    exchanges=exchanges,
                )
            )

        def withdraw() -> RunTranscript:
            transcript.terminal_state = FsmState.Q7_EARLY_WITHDRAWAL
            transcript.final_answer = BLANK_ANSWER
            transcript.stage1_answer = BLANK_ANSWER
            transcript.flags["final_parse_strict"] = False
            transcript.flags["final_parse_tolerant"] = False
            return transcript

        try:
            while True:
                # q0: decompose (or give up when the round budget is spent)
                rounds += 1
                if rounds > self.budgets.max_iterations:
                    visit(FsmState.Q0_DECOMPOSE, None, "", "", FsmEvent.BUDGET_EXCEEDED)
                    return withdraw()
                working = splice_question(record.question, answered)
                d_prompt = self.prompts.render(
                    PromptRole.DECOMPOSER, self.setting, {"question": working}
                ).text
                t0 = self._clock()
                d_raw = self._complete(d_prompt).text
                d_result = self._parse(SchemaKind.DECOMPOSER_OUT, d_raw)
                d_exchanges = ((d_prompt, d_raw), *d_result.exchanges)
                if not d_result.ok:
                    visit(
                        FsmState.Q0_DECOMPOSE, "decomposer", d_prompt, d_raw,
                        FsmEvent.BUDGET_EXCEEDED, d_result.attempts - 1, d_exchanges,
                        self._clock() - t0,
                    )
                    return withdraw()
                visit(
                    FsmState.Q0_DECOMPOSE, "decomposer", d_prompt, d_raw,
                    FsmEvent.PARSE_OK, d_result.attempts - 1, d_exchanges,
                    self._clock() - t0,
                )
                # q1: validation confirmed above; pass through
                visit(FsmState.Q1_REVISE_DECOMPOSE, None, "", "", FsmEvent.PARSE_OK)

                simple = bool(d_result.value["simple"])
                subquestion = working if simple else str(d_result.value["subquestion"])

                # q2: search
                s_prompt = self.prompts.render(
                    PromptRole.SEARCHER, self.setting,
                    {"subquestion": subquestion, "paragraphs": block},
                ).text
                t0 = self._clock()
                s_raw = self._complete(s_prompt).text
                visit(
                    FsmState.Q2_SEARCH, "searcher", s_prompt, s_raw,
                    FsmEvent.SEARCH_RETURNED, 0, ((s_prompt, s_raw),),
                    self._clock() - t0,
                )

                # q3: validate (and repair) the search output
                t0 = self._clock()
                s_result = self._parse(self._searcher_kind, s_raw)
                if not s_result.ok:
                    visit(
                        FsmState.Q3_REVISE_SEARCH, "revisor", "", "",
                        FsmEvent.BUDGET_EXCEEDED, s_result.attempts - 1,
                        s_result.exchanges, self._clock() - t0,
                    )
                    return withdraw()
                visit(
                    FsmState.Q3_REVISE_SEARCH, "revisor" if s_result.repaired else None,
                    "", "", FsmEvent.PARSE_OK, s_result.attempts - 1,
                    s_result.exchanges, self._clock() - t0,
                )
                step = SubQuestionStep(
                    index=len(steps) + 1,
                    subquestion=subquestion,
                    paragraph_title=s_result.value.get("paragraph_title") or "",
                    subanswer=s_result.value["answer"],
                    evidence=s_result.value.get("evidence"),
                    raw_exchanges=((s_prompt, s_raw), *s_result.exchanges),
                )
                steps.append(step)
                self._note_parse_flags(transcript, s_result)

                # q4: judge whether to keep decomposing
                if simple:
                    # Nothing left to split: the search above answered the
                    # whole remaining question.
                    visit(FsmState.Q4_TERMINATE, None, "", "", FsmEvent.STOP_DECOMPOSITION)
                    transcript.terminal_state = FsmState.Q5_ANSWER_FOUND
                    transcript.final_answer = step.subanswer
                    break

                role = (
                    PromptRole.TERMINATOR
                    if self.terminator_variant == "continue"
                    else PromptRole.TERMINATOR_IDENTICAL
                )
                kind = (
                    SchemaKind.TERMINATOR_OUT
                    if self.terminator_variant == "continue"
                    else SchemaKind.TERMINATOR_IDENTICAL_OUT
                )
                t_prompt = self.prompts.render(
                    role, self.setting,
                    {"question": record.question, "subquestion": subquestion},
                ).text
                t0 = self._clock()
                t_raw = self._complete(t_prompt).text
                t_result = self._parse(kind, t_raw)
                t_exchanges = ((t_prompt, t_raw), *t_result.exchanges)
                if not t_result.ok:
                    visit(
                        FsmState.Q4_TERMINATE, "terminator", t_prompt, t_raw,
                        FsmEvent.BUDGET_EXCEEDED, t_result.attempts - 1, t_exchanges,
                        self._clock() - t0,
                    )
                    return withdraw()
                if self.terminator_variant == "continue":
                    keep_going = bool(t_result.value["continue"])
                else:
                    keep_going = not bool(t_result.value["identical"])
                event = (
                    FsmEvent.CONTINUE_DECOMPOSITION if keep_going else FsmEvent.STOP_DECOMPOSITION
                )
                visit(
                    FsmState.Q4_TERMINATE, "terminator", t_prompt, t_raw,
                    event, t_result.attempts - 1, t_exchanges, self._clock() - t0,
                )
                if keep_going:
                    answered.append((subquestion, step.subanswer))
                    continue
                transcript.terminal_state = FsmState.Q5_ANSWER_FOUND
                transcript.final_answer = (
                    _scalar_text(t_result.value.get("answer")) or step.subanswer
                )
                self._note_parse_flags(transcript, t_result)
                break
        except GatewayError as exc:
            logger.warning("run aborted for %s: %s", record.id, exc)
            transcript.flags["incomplete"] = True
            transcript.flags["error"] = str(exc)
            transcript.flags["final_parse_strict"] = False
            transcript.flags["final_parse_tolerant"] = False
            return transcript

        transcript.stage1_answer = transcript.final_answer
        transcript.flags.setdefault("final_parse_strict", True)
        transcript.flags.setdefault("final_parse_tolerant", True)
        return transcript

    @staticmethod
    def _note_parse_flags(transcript: RunTranscript, result: ParseResult) -> None:
        """Track whether the answer-bearing output needed any tolerance."""
        transcript.flags["final_parse_strict"] = result.strict
        transcript.flags["final_parse_tolerant"] = result.ok

    # -- stage 2 ----------------------------------------------------------

    def run_fsm2(self, fsm1: RunTranscript, record: QuestionRecord) -> RunTranscript:
        """Summarize the collected hops and let the model revise the answer.

        Early-withdrawal and incomplete stage-1 transcripts pass through
        unchanged. An irreparable summary keeps the stage-1 answer and flags
        the transcript instead of blanking it.
        """
        if fsm1.terminal_state is not FsmState.Q5_ANSWER_FOUND:
            return fsm1
        out = RunTranscript(
            record_id=fsm1.record_id,
            strategy="sg-fsm2",
            setting=fsm1.setting,
            entries=list(fsm1.entries),
            steps=list(fsm1.steps),
            terminal_state=fsm1.terminal_state,
            final_answer=fsm1.final_answer,
            stage1_answer=fsm1.final_answer,
            flags=dict(fsm1.flags),
            config=dict(fsm1.config),
            record_snapshot=fsm1.record_snapshot,
        )
        stage1_answer = fsm1.final_answer or ""
        if self.setting == 1:
            prompt = self.prompts.render_summarizer(
                out.steps, record.question, stage1_answer
            ).text
            kind = SchemaKind.SUMMARIZER_OUT_S1
        else:
            titles = []
            for step in out.steps:
                if step.paragraph_title and step.paragraph_title not in titles:
                    titles.append(step.paragraph_title)
            found = [p for p in record.paragraphs if p.title in titles]
            history = "\n".join(f"{s.subquestion} Answer: {s.subanswer}" for s in out.steps)
            prompt = self.prompts.render(
                PromptRole.SUMMARIZER, 2,
                {
                    "question": record.question,
                    "paragraphs": paragraphs_block(found) if found else "(none found)",
                    "history": history,
                },
            ).text
            kind = SchemaKind.FINAL_S2_OUT
        try:
            t0 = self._clock()
            raw = self._complete(prompt).text
            result = self._parse(kind, raw)
            wall = self._clock() - t0
        except GatewayError as exc:
            logger.warning("summary stage aborted for %s: %s", record.id, exc)
            out.flags["summarizer_failed"] = True
            out.flags["error"] = str(exc)
            out.flags["final_parse_strict"] = False
            out.flags["final_parse_tolerant"] = False
            return out
        exchanges = ((prompt, raw), *result.exchanges)
        if result.ok:
            out.entries.append(
                StepRecord(
                    state=FsmState.Q5_ANSWER_FOUND,
                    role="summarizer",
                    prompt=prompt,
                    raw_response=raw,
                    parse_outcome=FsmEvent.SUMMARY_RETURNED,
                    revision_count=result.attempts - 1,
                    wall_time=wall,
                    exchanges=exchanges,
                )
            )
            out.terminal_state = FsmState.Q6_SUMMARIZED
            out.final_answer = result.value["answer"]
            out.summary = {
                k: v for k, v in result.value.items()
                if k in ("answer", "reason", "supporting_facts", "evidences", "explain")
            }
            out.flags["final_parse_strict"] = result.strict
            out.flags["final_parse_tolerant"] = True
        else:
            out.entries.append(
                StepRecord(
                    state=FsmState.Q5_ANSWER_FOUND,
                    role="summarizer",
                    prompt=prompt,
                    raw_response=raw,
                    parse_outcome=FsmEvent.PARSE_FAIL,
                    revision_count=result.attempts - 1,
                    wall_time=wall,
                    exchanges=exchanges,
                )
            )
            out.flags["summarizer_failed"] = True
            out.flags["final_parse_strict"] = False
            out.flags["final_parse_tolerant"] = False
        return out


def _scalar_text(value: Any) -> str | None:
    if isinstance(value, str):
        return value.strip() or None
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        return str(value)
    return None
