"""Extraction and schema validation of role outputs, plus the repair loop.

The parser is the component that decides "output can be parsed correctly":
it produces the ok/fail events the state machine routes on. Extraction is
tolerant (code fences, surrounding prose); the JSON grammar itself is strict
(no trailing commas, no NaN/Infinity). Validation matches keys exactly first,
then through a documented alias table and a case-insensitive fallback; alias
hits still count as parsed but are flagged so both strict and tolerant format
rates can be reported.
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Callable

from .errors import SchemaViolation

logger = logging.getLogger(__name__)

_FENCE = re.compile(r"```[a-zA-Z0-9_-]*\n?|```")
_MAX_CANDIDATES = 64


def _reject_constant(name: str) -> Any:
    raise ValueError(f"non-standard JSON constant {name}")


def strict_loads(text: str) -> Any:
    """json.loads with NaN/Infinity rejected."""
    return json.loads(text, parse_constant=_reject_constant)


def _balanced_span(text: str, start: int) -> int | None:
    """End index (exclusive) of the brace-balanced span opening at ``start``."""
    depth = 0
    in_string = False
    escaped = False
    for i in range(start, len(text)):
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
        elif ch == "{":
            depth += 1
        elif ch == "}":
            depth -= 1
            if depth == 0:
                return i + 1
    return None


def extract_all_json(text: str) -> list[dict]:
    """Every brace-balanced span that strict-parses to an object, left to right.

    A candidate that parses is skipped over; one that does not is re-entered
    so a valid inner object can still be rescued.
    """
    if not isinstance(text, str):
        return []
    cleaned = _FENCE.sub("", text)
    found: list[dict] = []
    i = 0
    n = len(cleaned)
    while i < n and len(found) < _MAX_CANDIDATES:
        if cleaned[i] != "{":
            i += 1
            continue
        end = _balanced_span(cleaned, i)
        if end is None:
            i += 1
            continue
        try:
            value = strict_loads(cleaned[i:end])
        except ValueError:
            i += 1
            continue
        if isinstance(value, dict):
            found.append(value)
            i = end
        else:
            i += 1
    return found


def extract_json(text: str) -> dict | None:
    """First JSON object extractable from raw model output, or None."""
    candidates = extract_all_json(text)
    if len(candidates) > 1:
        logger.debug("response contained %d JSON objects; using the first", len(candidates))
    return candidates[0] if candidates else None


class SchemaKind(str, Enum):
    DECOMPOSER_OUT = "decomposer_out"
    SEARCHER_OUT_S1 = "searcher_out_s1"
    SEARCHER_OUT_S2 = "searcher_out_s2"
    TERMINATOR_OUT = "terminator_out"
    TERMINATOR_IDENTICAL_OUT = "terminator_identical_out"
    SUMMARIZER_OUT_S1 = "summarizer_out_s1"
    FINAL_S2_OUT = "final_s2_out"
    BASELINE_S1_OUT = "baseline_s1_out"
    BASELINE_S2_OUT = "baseline_s2_out"


def _conv_bool(value: Any) -> bool:
    if isinstance(value, bool):
        return value
    raise SchemaViolation(f"expected a JSON boolean, got {type(value).__name__}")


def _conv_text(value: Any) -> str:
    # Numbers are stringified: role outputs routinely emit years unquoted.
    if isinstance(value, bool) or value is None:
        raise SchemaViolation(f"expected a string, got {value!r}")
    if isinstance(value, (int, float)):
        return str(value)
    if isinstance(value, str):
        return value
    raise SchemaViolation(f"expected a string, got {type(value).__name__}")


def _conv_nonempty_text(value: Any) -> str:
    text = _conv_text(value).strip()
    if not text:
        raise SchemaViolation("expected a non-empty string")
    return text


def _conv_optional_text(value: Any) -> str | None:
    if value is None:
        return None
    return _conv_text(value)


def _conv_triple(value: Any) -> tuple[str, str, str]:
    if isinstance(value, (list, tuple)) and len(value) == 1 and isinstance(value[0], (list, tuple)):
        value = value[0]
    if not isinstance(value, (list, tuple)) or len(value) != 3:
        raise SchemaViolation("evidence must be a [subject, relation, object] triple")
    return tuple(_conv_text(v) for v in value)  # type: ignore[return-value]


def _conv_triples(value: Any) -> list[tuple[str, str, str]]:
    if not isinstance(value, (list, tuple)):
        raise SchemaViolation("evidences must be a list of triples")
    return [_conv_triple(v) for v in value]


def _conv_sent_index(value: Any) -> int:
    if isinstance(value, bool):
        raise SchemaViolation("sentence index must be an integer")
    if isinstance(value, int):
        return value
    if isinstance(value, float) and value.is_integer():
        return int(value)
    if isinstance(value, str) and value.strip().lstrip("-").isdigit():
        return int(value.strip())
    raise SchemaViolation(f"sentence index must be an integer, got {value!r}")


def _conv_facts(value: Any) -> list[tuple[str, int]]:
    if not isinstance(value, (list, tuple)):
        raise SchemaViolation("supporting-facts must be a list of [title, sentence id] pairs")
    out = []
    for item in value:
        if not isinstance(item, (list, tuple)) or len(item) != 2:
            raise SchemaViolation("each supporting fact must be a [title, sentence id] pair")
        out.append((_conv_text(item[0]), _conv_sent_index(item[1])))
    return out


@dataclass(frozen=True)
class _Field:
    name: str  # key in the normalized payload
    wire: tuple[str, ...]  # accepted keys; wire[0] is the canonical (strict) one
    convert: Callable[[Any], Any]
    required: bool = True
    soft_default: Any = None  # used when optional and absent
    soft_flag: bool = False  # absence counts against the strict format flag


_SCHEMAS: dict[SchemaKind, tuple[_Field, ...]] = {
    SchemaKind.DECOMPOSER_OUT: (
        _Field("simple", ("simple", "is_simple"), _conv_bool),
        _Field("subquestion", ("subquestion", "sub-question", "sub_question", "sub question"),
               _conv_optional_text, required=False),
    ),
    SchemaKind.SEARCHER_OUT_S1: (
        _Field("question", ("question", "subquestion", "sub-question"), _conv_text,
               required=False, soft_default="", soft_flag=True),
        _Field("paragraph_title", ("paragraph title", "paragraph_title", "paragraph-title", "title"),
               _conv_text, required=False, soft_default="", soft_flag=True),
        _Field("answer", ("answer", "subanswer", "subanswers", "sub-answer", "sub_answer", "final answer"),
               _conv_nonempty_text),
    ),
    SchemaKind.SEARCHER_OUT_S2: (
        _Field("question", ("question", "subquestion", "sub-question"), _conv_text,
               required=False, soft_default="", soft_flag=True),
        _Field("paragraph_title", ("paragraph title", "paragraph_title", "paragraph-title", "title"),
               _conv_text, required=False, soft_default="", soft_flag=True),
        _Field("answer", ("answer", "subanswer", "subanswers", "sub-answer", "sub_answer", "final answer"),
               _conv_nonempty_text),
        _Field("evidence", ("evidence", "evidences", "triple"), _conv_triple,
               required=False, soft_flag=True),
    ),
    SchemaKind.TERMINATOR_OUT: (
        _Field("continue", ("continue", "should_continue"), _conv_bool),
    ),
    SchemaKind.TERMINATOR_IDENTICAL_OUT: (
        _Field("identical", ("identical", "same"), _conv_bool),
    ),
    SchemaKind.SUMMARIZER_OUT_S1: (
        _Field("answer", ("Answer", "answer", "final answer", "final_answer"), _conv_text),
        _Field("reason", ("Reason", "reason", "explain", "explanation"), _conv_text),
    ),
    SchemaKind.FINAL_S2_OUT: (
        _Field("supporting_facts",
               ("supporting-facts", "supporting_facts", "supporting facts", "sp"), _conv_facts),
        _Field("evidences", ("evidences", "evidence", "triples"), _conv_triples),
        _Field("answer", ("answer", "final answer", "final_answer"), _conv_text),
        _Field("explain", ("explain", "explanation"), _conv_text, required=False),
    ),
    SchemaKind.BASELINE_S1_OUT: (
        _Field("explain", ("explain", "explanation", "reasoning"), _conv_text),
        _Field("answer", ("answer", "final answer", "final_answer"), _conv_text),
    ),
}
_SCHEMAS[SchemaKind.BASELINE_S2_OUT] = _SCHEMAS[SchemaKind.FINAL_S2_OUT]


@dataclass(frozen=True)
class ParseFlags:
    aliased: bool = False
    case_folded: bool = False
    soft_missing: tuple[str, ...] = ()
    extra_keys: tuple[str, ...] = ()

    @property
    def strict(self) -> bool:
        return not (self.aliased or self.case_folded or self.soft_missing)


def validate(kind: SchemaKind, value: Any) -> tuple[dict[str, Any], ParseFlags]:
    """Check required keys, value types and cross-field rules.

    Returns the normalized payload (internal snake-case keys, numbers
    stringified) plus tolerance flags. Unknown extra keys are tolerated,
    logged, and carried through under their own names.
    """
    if not isinstance(value, dict):
        raise SchemaViolation(f"expected a JSON object, got {type(value).__name__}")
    fields = _SCHEMAS[kind]
    payload: dict[str, Any] = {}
    aliased = False
    case_folded = False
    soft_missing: list[str] = []
    consumed: set[str] = set()

    for spec in fields:
        key_used = None
        for wire_key in spec.wire:
            if wire_key in value:
                key_used = wire_key
                break
        if key_used is None:
            folded = {k.lower(): k for k in value if isinstance(k, str)}
            for wire_key in spec.wire:
                hit = folded.get(wire_key.lower())
                if hit is not None and hit not in consumed:
                    key_used = hit
                    case_folded = True
                    logger.debug("case-insensitive key match %r -> %r", hit, spec.wire[0])
                    break
        if key_used is None:
            if spec.required:
                raise SchemaViolation(f"missing required key {spec.wire[0]!r}")
            if spec.soft_flag:
                soft_missing.append(spec.name)
            payload[spec.name] = spec.soft_default
            continue
        if key_used != spec.wire[0]:
            aliased = True
            logger.debug("alias key %r accepted for %r", key_used, spec.wire[0])
        consumed.add(key_used)
        try:
            payload[spec.name] = spec.convert(value[key_used])
        except SchemaViolation as exc:
            raise SchemaViolation(f"key {key_used!r}: {exc}") from None

    extras = tuple(k for k in value if k not in consumed)
    if extras:
        logger.debug("tolerated extra keys: %s", extras)
    for k in extras:
        if isinstance(k, str) and k not in payload:
            payload[k] = value[k]

    if kind == SchemaKind.DECOMPOSER_OUT:
        sub = payload.get("subquestion")
        if isinstance(sub, str) and not sub.strip():
            sub = None
            payload["subquestion"] = None
        if payload["simple"] and sub is not None:
            raise SchemaViolation("simple=true requires subquestion to be null")
        if not payload["simple"] and not sub:
            raise SchemaViolation("simple=false requires a non-empty subquestion")

    flags = ParseFlags(
        aliased=aliased,
        case_folded=case_folded,
        soft_missing=tuple(soft_missing),
        extra_keys=extras,
    )
    return payload, flags


@dataclass
class ParseResult:
    ok: bool
    value: dict[str, Any] | None
    reason: str | None  # no_json_found | schema_violation
    detail: str | None
    repaired: bool
    attempts: int
    flags: ParseFlags = field(default_factory=ParseFlags)
    exchanges: tuple[tuple[str, str], ...] = ()

    @property
    def strict(self) -> bool:
        return self.ok and self.flags.strict


def _try_parse(kind: SchemaKind, raw: str) -> tuple[dict | None, ParseFlags | None, str, str]:
    """One extraction+validation pass. Returns (payload, flags, reason, detail)."""
    candidates = extract_all_json(raw)
    if not candidates:
        return None, None, "no_json_found", "no brace-balanced span parses as JSON"
    first_error = ""
    for candidate in candidates:
        try:
            payload, flags = validate(kind, candidate)
            return payload, flags, "", ""
        except SchemaViolation as exc:
            if not first_error:
                first_error = str(exc)
    return None, None, "schema_violation", first_error


Revisor = Callable[[str], tuple[str, str]]


def parse_with_repair(
    kind: SchemaKind,
    raw: str,
    revisor: Revisor | None = None,
    max_revisions: int = 2,
) -> ParseResult:
    """Extract and validate; on failure ask the revisor to rewrite the text.

    ``revisor`` maps illegal text to a (prompt, response) exchange (an LLM
    call in production, a scripted lookup in tests). Each revision burns one
    attempt; ``attempts`` never exceeds 1 + max_revisions. The final failure
    is returned, not raised, so the engine can route on it.
    """
    exchanges: list[tuple[str, str]] = []
    current = raw
    attempts = 0
    reason = detail = None
    while attempts <= max_revisions:
        attempts += 1
        payload, flags, reason, detail = _try_parse(kind, current)
        if payload is not None and flags is not None:
            return ParseResult(
                ok=True,
                value=payload,
                reason=None,
                detail=None,
                repaired=attempts > 1,
                attempts=attempts,
                flags=flags,
                exchanges=tuple(exchanges),
            )
        if revisor is None or attempts > max_revisions:
            break
        prompt, response = revisor(current)
        exchanges.append((prompt, response))
        current = response
    return ParseResult(
        ok=False,
        value=None,
        reason=reason,
        detail=detail,
        repaired=False,
        attempts=attempts,
        exchanges=tuple(exchanges),
    )
