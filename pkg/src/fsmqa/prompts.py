"""Role prompt templates and rendering.

Templates live as plain text files (one per role/setting) so they can be
audited or swapped without touching code; the packaged set reproduces the
method's role prompts. Slots use ``{{name}}`` markers, which cannot collide
with the literal JSON braces the instruction texts contain.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .datasets import Paragraph
from .errors import EmptySteps, MissingSlot, UnknownRoleSetting

_SLOT = re.compile(r"\{\{(\w+)\}\}")


class PromptRole(str, Enum):
    DECOMPOSER = "decomposer"
    SEARCHER = "searcher"
    REVISOR = "revisor"
    TERMINATOR = "terminator"
    TERMINATOR_IDENTICAL = "terminator_identical"
    SUMMARIZER = "summarizer"
    DIRECT = "direct"
    COT = "cot"
    SPCOT = "sp-cot"
    REACT = "react"


# (role, setting) -> template file stem. Roles whose wording does not depend
# on the setting share one file.
_TEMPLATE_FILES: dict[tuple[PromptRole, int], str] = {
    (PromptRole.DECOMPOSER, 1): "decomposer",
    (PromptRole.DECOMPOSER, 2): "decomposer",
    (PromptRole.SEARCHER, 1): "searcher_s1",
    (PromptRole.SEARCHER, 2): "searcher_s2",
    (PromptRole.REVISOR, 1): "revisor",
    (PromptRole.REVISOR, 2): "revisor",
    (PromptRole.TERMINATOR, 1): "terminator",
    (PromptRole.TERMINATOR, 2): "terminator",
    (PromptRole.TERMINATOR_IDENTICAL, 1): "terminator_identical",
    (PromptRole.TERMINATOR_IDENTICAL, 2): "terminator_identical",
    (PromptRole.SUMMARIZER, 1): "summarizer_s1",
    (PromptRole.SUMMARIZER, 2): "summarizer_s2",
    (PromptRole.DIRECT, 1): "direct_s1",
    (PromptRole.DIRECT, 2): "direct_s2",
    (PromptRole.COT, 1): "cot_s1",
    (PromptRole.COT, 2): "cot_s2",
    (PromptRole.SPCOT, 1): "spcot",
    (PromptRole.SPCOT, 2): "spcot",
    (PromptRole.REACT, 1): "react",
    (PromptRole.REACT, 2): "react",
}

# Documented slot sets, used by the round-trip slot audit.
ROLE_SLOTS: dict[str, frozenset[str]] = {
    "decomposer": frozenset({"question"}),
    "searcher_s1": frozenset({"subquestion", "paragraphs"}),
    "searcher_s2": frozenset({"subquestion", "paragraphs"}),
    "revisor": frozenset({"illegal_text"}),
    "terminator": frozenset({"question", "subquestion"}),
    "terminator_identical": frozenset({"question", "subquestion"}),
    "summarizer_s1": frozenset({"question", "steps", "stage1_answer"}),
    "summarizer_s2": frozenset({"question", "paragraphs", "history"}),
    "direct_s1": frozenset({"question", "paragraphs"}),
    "direct_s2": frozenset({"question", "paragraphs"}),
    "cot_s1": frozenset({"question", "paragraphs"}),
    "cot_s2": frozenset({"question", "paragraphs"}),
    "spcot": frozenset({"demonstrations", "question", "paragraphs"}),
    "react": frozenset({"question", "paragraphs", "scratchpad"}),
}


@dataclass(frozen=True)
class RenderedPrompt:
    role: PromptRole
    text: str
    token_estimate: int


def paragraphs_block(paragraphs: Sequence[Paragraph]) -> str:
    """Candidate paragraphs as title plus zero-indexed sentences.

    The sentence indices are what setting-2 answers point back at.
    """
    blocks = []
    for p in paragraphs:
        lines = [f"Title: {p.title}"]
        lines.extend(f"{i}: {s}" for i, s in enumerate(p.sentences))
        blocks.append("\n".join(lines))
    return "\n\n".join(blocks)


class PromptKit:
    """Loads and renders role templates from a template directory."""

    def __init__(self, template_dir: str | Path | None = None):
        self._dir = Path(template_dir) if template_dir is not None else None
        self._cache: dict[str, str] = {}

    def template_body(self, stem: str) -> str:
        if stem not in self._cache:
            if self._dir is not None:
                path = self._dir / f"{stem}.txt"
                if not path.exists():
                    raise UnknownRoleSetting(f"no template file {path}")
                body = path.read_text(encoding="utf-8")
            else:
                body = _packaged_template(stem)
            self._cache[stem] = body
        return self._cache[stem]

    def slots_in(self, stem: str) -> frozenset[str]:
        return frozenset(_SLOT.findall(self.template_body(stem)))

    def render(
        self,
        role: PromptRole,
        setting: int,
        context: Mapping[str, str],
    ) -> RenderedPrompt:
        """Fill the (role, setting) template. Deterministic; a missing slot is
        an error, never silent emptiness."""
        try:
            stem = _TEMPLATE_FILES[(role, setting)]
        except KeyError:
            raise UnknownRoleSetting(f"no template for role={role.value} setting={setting}") from None
        body = self.template_body(stem)

        def fill(match: re.Match) -> str:
            name = match.group(1)
            if name not in context:
                raise MissingSlot(f"{stem}: slot {name!r} not supplied")
            return str(context[name])

        text = _SLOT.sub(fill, body).rstrip("\n")
        leftover = _SLOT.search(text)
        if leftover:
            raise MissingSlot(f"{stem}: unexpanded slot {leftover.group(1)!r} after render")
        return RenderedPrompt(role=role, text=text, token_estimate=len(text.split()))

    def render_summarizer(
        self,
        steps: Sequence,
        question: str,
        stage1_answer: str,
    ) -> RenderedPrompt:
        """Stage-2 check prompt: one block per hop, then the original question
        and the stage-1 answer. Evidence lines appear only when a hop carries
        an evidence triple."""
        if not steps:
            raise EmptySteps("summarizer needs at least one completed step")
        blocks = []
        for step in steps:
            lines = [
                f"Sub-question {step.index}: {step.subquestion}",
                f"Paragraph: {step.paragraph_title}",
            ]
            if step.evidence is not None:
                s, r, o = step.evidence
                lines.append(f"Evidence: ({s}, {r}, {o})")
            lines.append(f"Sub-answer: {step.subanswer}")
            blocks.append("\n".join(lines))
        return self.render(
            PromptRole.SUMMARIZER,
            1,
            {
                "question": question,
                "steps": "\n\n".join(blocks),
                "stage1_answer": stage1_answer,
            },
        )


@lru_cache(maxsize=None)
def _packaged_template(stem: str) -> str:
    ref = resources.files("fsmqa") / "templates" / f"{stem}.txt"
    try:
        return ref.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise UnknownRoleSetting(f"no packaged template {stem!r}") from None


def splice_question(question: str, answered: Iterable[tuple[str, str]]) -> str:
    """Working question shown to the decomposer: the original text with each
    resolved hop appended as an answer clause. Surface rewriting is left to
    the model; the original string is preserved elsewhere."""
    out = question
    for subq, suba in answered:
        out += f' — where "{subq}" has answer "{suba}"'
    return out
