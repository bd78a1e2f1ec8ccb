"""Runnable strategies: single-prompt baselines, the ReAct loop, and the
two-stage guided state machine. Every strategy yields a RunTranscript with an
embedded Prediction, so the evaluator treats them uniformly.

Baselines get no repair loop: their format failures are exactly what the
format metric measures.
"""

from __future__ import annotations

import difflib
import logging
import re
import time
from dataclasses import dataclass, field
from typing import Sequence

from .datasets import Paragraph, QuestionRecord
from .engine import FsmEngine
from .errors import ConfigError, GatewayError
from .fsm import FsmBudgets, FsmState
from .gateway import Backend, CompletionRequest
from .metrics import Prediction, normalize_answer
from .parsing import SchemaKind, parse_with_repair
from .prompts import PromptKit, PromptRole, paragraphs_block
from .transcript import RunTranscript, StepRecord

logger = logging.getLogger(__name__)

STRATEGY_NAMES = ("direct", "cot", "sp-cot", "react", "sg-fsm1", "sg-fsm2")


@dataclass
class StrategyContext:
    backend: Backend
    prompts: PromptKit = field(default_factory=PromptKit)
    setting: int = 1
    budgets: FsmBudgets = field(default_factory=FsmBudgets)
    terminator_variant: str = "continue"
    model_id: str = "default"
    temperature: float = 0.0
    max_tokens: int = 512
    request_timeout: float = 60.0
    demonstrations: str = ""
    react_max_steps: int = 8
    deadline: float | None = None

    def complete(self, prompt: str) -> str:
        if self.deadline is not None and time.monotonic() > self.deadline:
            raise GatewayError("record deadline exceeded")
        request = CompletionRequest(
            prompt=prompt,
            model_id=self.model_id,
            temperature=self.temperature,
            max_tokens=self.max_tokens,
            timeout=self.request_timeout,
        )
        return self.backend.complete(request).text


class Strategy:
    name: str

    def __init__(self, ctx: StrategyContext):
        self.ctx = ctx

    def run(self, record: QuestionRecord) -> RunTranscript:
        raise NotImplementedError

    def _base_transcript(self, record: QuestionRecord, config: dict) -> RunTranscript:
        return RunTranscript(
            record_id=record.id,
            strategy=self.name,
            setting=self.ctx.setting,
            config=config,
            record_snapshot=record.to_dict(),
        )


def _one_shot_kinds(role: PromptRole, setting: int) -> tuple[SchemaKind, ...]:
    if role in (PromptRole.SPCOT, PromptRole.REACT):
        # These templates demand the full reasoning-chain object in both
        # settings; accept the answer-only shape too when scoring setting 1.
        return (
            (SchemaKind.BASELINE_S2_OUT, SchemaKind.BASELINE_S1_OUT)
            if setting == 1
            else (SchemaKind.BASELINE_S2_OUT,)
        )
    return (SchemaKind.BASELINE_S1_OUT,) if setting == 1 else (SchemaKind.BASELINE_S2_OUT,)


def _payload_prediction(
    record: QuestionRecord,
    strategy: str,
    setting: int,
    payload: dict | None,
    strict: bool,
) -> Prediction:
    if payload is None:
        return Prediction(
            record_id=record.id, answer="", strategy=strategy,
            format_ok_strict=False, format_ok_tolerant=False,
        )
    facts = payload.get("supporting_facts") if setting == 2 else None
    evidences = payload.get("evidences") if setting == 2 else None
    return Prediction(
        record_id=record.id,
        answer=str(payload.get("answer") or ""),
        strategy=strategy,
        supporting_facts=list(facts) if facts else None,
        evidences=list(evidences) if evidences else None,
        format_ok_strict=strict,
        format_ok_tolerant=True,
    )


class OneShotStrategy(Strategy):
    """Direct, chain-of-thought, and the self-prompted variant: one prompt,
    one completion, parsed once."""

    def __init__(self, ctx: StrategyContext, name: str, role: PromptRole):
        super().__init__(ctx)
        self.name = name
        self.role = role

    def run(self, record: QuestionRecord) -> RunTranscript:
        ctx = self.ctx
        slots = {
            "question": record.question,
            "paragraphs": paragraphs_block(record.paragraphs),
        }
        if self.role is PromptRole.SPCOT:
            demos = ctx.demonstrations
            if not demos:
                logger.info("sp-cot running without demonstrations")
            slots["demonstrations"] = f"{demos}\n" if demos else ""
        prompt = ctx.prompts.render(self.role, ctx.setting, slots).text
        transcript = self._base_transcript(
            record,
            {
                "setting": ctx.setting,
                "model_id": ctx.model_id,
                "temperature": ctx.temperature,
                "max_tokens": ctx.max_tokens,
                "demonstrations": ctx.demonstrations,
            },
        )
        t0 = time.perf_counter()
        try:
            raw = ctx.complete(prompt)
        except GatewayError as exc:
            transcript.flags["incomplete"] = True
            transcript.flags["error"] = str(exc)
            transcript.prediction = _payload_prediction(
                record, self.name, ctx.setting, None, False
            ).to_dict()
            return transcript
        payload = None
        strict = False
        for kind in _one_shot_kinds(self.role, ctx.setting):
            result = parse_with_repair(kind, raw, revisor=None, max_revisions=0)
            if result.ok:
                payload, strict = result.value, result.strict
                break
        transcript.entries.append(
            StepRecord(
                state=None, role=self.name, prompt=prompt, raw_response=raw,
                parse_outcome=None, revision_count=0,
                wall_time=time.perf_counter() - t0, exchanges=((prompt, raw),),
            )
        )
        transcript.final_answer = str(payload.get("answer") or "") if payload else ""
        transcript.prediction = _payload_prediction(
            record, self.name, ctx.setting, payload, strict
        ).to_dict()
        return transcript


_ACTION = re.compile(r"Action[^:\n]*:\s*(Search|Lookup|Finish)\s*\[", re.IGNORECASE)


def parse_react_action(text: str) -> tuple[str, str] | None:
    """Last action directive in a response: (verb, bracket content)."""
    last = None
    for match in _ACTION.finditer(text):
        content = _bracket_content(text, match.end() - 1)
        if content is not None:
            last = (match.group(1).capitalize(), content)
    return last


def _bracket_content(text: str, open_idx: int) -> str | None:
    depth = 0
    in_string = False
    escaped = False
    for i in range(open_idx, len(text)):
        ch = text[i]
        if in_string:
            if escaped:
                escaped = False
            elif ch == "\\":
                escaped = True
            elif ch == '"':
                in_string = False
            continue
        if ch == '"':
            in_string = True
        elif ch == "[":
            depth += 1
        elif ch == "]":
            depth -= 1
            if depth == 0:
                return text[open_idx + 1 : i]
    return None


class ReactTools:
    """Deterministic Search/Lookup over the record's candidate paragraphs."""

    def __init__(self, paragraphs: Sequence[Paragraph]):
        self.paragraphs = list(paragraphs)
        self.by_title = {p.title.casefold(): p for p in self.paragraphs}
        self.current: Paragraph | None = None
        self._cursor: dict[str, int] = {}

    def search(self, entity: str) -> str:
        hit = self.by_title.get(entity.strip().casefold())
        if hit is None:
            titles = [p.title for p in self.paragraphs]
            close = difflib.get_close_matches(entity.strip(), titles, n=1, cutoff=0.75)
            if close:
                hit = self.by_title[close[0].casefold()]
        if hit is not None:
            self.current = hit
            self._cursor.clear()
            return f"{hit.title}: " + " ".join(hit.sentences)
        titles = [p.title for p in self.paragraphs]
        similar = difflib.get_close_matches(entity.strip(), titles, n=3, cutoff=0.3)
        if not similar:
            similar = titles[:3]
        return f"Could not find {entity}. Similar: {similar}"

    def lookup(self, keyword: str) -> str:
        if self.current is None:
            return "No passage selected yet; Search for an entity first."
        key = keyword.strip().casefold()
        start = self._cursor.get(key, 0)
        for i in range(start, len(self.current.sentences)):
            if key in self.current.sentences[i].casefold():
                self._cursor[key] = i + 1
                return self.current.sentences[i]
        self._cursor[key] = len(self.current.sentences)
        return "No more results."


class ReactStrategy(Strategy):
    name = "react"

    def run(self, record: QuestionRecord) -> RunTranscript:
        ctx = self.ctx
        transcript = self._base_transcript(
            record,
            {
                "setting": ctx.setting,
                "model_id": ctx.model_id,
                "temperature": ctx.temperature,
                "max_tokens": ctx.max_tokens,
                "react_max_steps": ctx.react_max_steps,
            },
        )
        tools = ReactTools(record.paragraphs)
        block = paragraphs_block(record.paragraphs)
        scratchpad = ""
        payload = None
        strict = False
        try:
            for _ in range(ctx.react_max_steps):
                prompt = ctx.prompts.render(
                    PromptRole.REACT, ctx.setting,
                    {"question": record.question, "paragraphs": block, "scratchpad": scratchpad},
                ).text
                t0 = time.perf_counter()
                raw = ctx.complete(prompt)
                transcript.entries.append(
                    StepRecord(
                        state=None, role="react", prompt=prompt, raw_response=raw,
                        parse_outcome=None, wall_time=time.perf_counter() - t0,
                        exchanges=((prompt, raw),),
                    )
                )
                action = parse_react_action(raw)
                if action is None:
                    scratchpad += f"\n{raw.strip()}\nObservation: Invalid action. " \
                        "Use Search[entity], Lookup[keyword] or Finish[results]."
                    continue
                verb, arg = action
                if verb == "Finish":
                    for kind in _one_shot_kinds(PromptRole.REACT, ctx.setting):
                        result = parse_with_repair(kind, arg, revisor=None, max_revisions=0)
                        if result.ok:
                            payload, strict = result.value, result.strict
                            break
                    break
                observation = tools.search(arg) if verb == "Search" else tools.lookup(arg)
                scratchpad += f"\n{raw.strip()}\nObservation: {observation}"
        except GatewayError as exc:
            transcript.flags["incomplete"] = True
            transcript.flags["error"] = str(exc)
        transcript.final_answer = str(payload.get("answer") or "") if payload else ""
        transcript.prediction = _payload_prediction(
            record, self.name, ctx.setting, payload, strict
        ).to_dict()
        return transcript


def locate_sentence(record: QuestionRecord, title: str, answer: str) -> int:
    """First sentence of the titled paragraph that contains the answer, else 0.

    Stage-1 searches return a title but no sentence index; setting-2 scoring
    needs one.
    """
    want = normalize_answer(answer)
    for paragraph in record.paragraphs:
        if paragraph.title == title:
            if want:
                for i, sentence in enumerate(paragraph.sentences):
                    if want in normalize_answer(sentence):
                        return i
            return 0
    return 0


def fsm_prediction(
    transcript: RunTranscript, record: QuestionRecord, strategy: str
) -> Prediction:
    setting = transcript.setting
    terminal = transcript.terminal_state
    if terminal is None or terminal is FsmState.Q7_EARLY_WITHDRAWAL:
        return Prediction(
            record_id=record.id, answer="", strategy=strategy,
            format_ok_strict=False, format_ok_tolerant=False,
            terminal_state=terminal.value if terminal else None,
        )
    facts = None
    evidences = None
    if setting == 2:
        summary = transcript.summary or {}
        if summary.get("supporting_facts"):
            facts = [(str(t), int(i)) for t, i in summary["supporting_facts"]]
            evidences = [tuple(e) for e in summary.get("evidences") or []] or None
        else:
            facts = [
                (s.paragraph_title, locate_sentence(record, s.paragraph_title, s.subanswer))
                for s in transcript.steps
                if s.paragraph_title
            ] or None
            evidences = [s.evidence for s in transcript.steps if s.evidence] or None
    return Prediction(
        record_id=record.id,
        answer=transcript.final_answer or "",
        strategy=strategy,
        supporting_facts=facts,
        evidences=evidences,
        format_ok_strict=bool(transcript.flags.get("final_parse_strict")),
        format_ok_tolerant=bool(transcript.flags.get("final_parse_tolerant")),
        terminal_state=terminal.value,
    )


class FsmStrategy(Strategy):
    def __init__(self, ctx: StrategyContext, stage2: bool):
        super().__init__(ctx)
        self.stage2 = stage2
        self.name = "sg-fsm2" if stage2 else "sg-fsm1"

    def _engine(self) -> FsmEngine:
        ctx = self.ctx
        return FsmEngine(
            ctx.backend,
            ctx.prompts,
            setting=ctx.setting,
            budgets=ctx.budgets,
            terminator_variant=ctx.terminator_variant,
            model_id=ctx.model_id,
            temperature=ctx.temperature,
            max_tokens=ctx.max_tokens,
            request_timeout=ctx.request_timeout,
            deadline=ctx.deadline,
        )

    def run(self, record: QuestionRecord) -> RunTranscript:
        engine = self._engine()
        transcript = engine.run_fsm1(record)
        if self.stage2 and not transcript.flags.get("incomplete"):
            transcript = engine.run_fsm2(transcript, record)
            transcript.strategy = "sg-fsm2"
        transcript.prediction = fsm_prediction(transcript, record, self.name).to_dict()
        return transcript


def make_strategy(name: str, ctx: StrategyContext) -> Strategy:
    if name == "direct":
        return OneShotStrategy(ctx, "direct", PromptRole.DIRECT)
    if name == "cot":
        return OneShotStrategy(ctx, "cot", PromptRole.COT)
    if name == "sp-cot":
        return OneShotStrategy(ctx, "sp-cot", PromptRole.SPCOT)
    if name == "react":
        return ReactStrategy(ctx)
    if name == "sg-fsm1":
        return FsmStrategy(ctx, stage2=False)
    if name == "sg-fsm2":
        return FsmStrategy(ctx, stage2=True)
    raise ConfigError(f"unknown strategy {name!r}; expected one of {STRATEGY_NAMES}")
