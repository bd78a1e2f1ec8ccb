"""Request/response models for the HTTP service."""

from __future__ import annotations

from typing import Any, Literal

from pydantic import BaseModel, Field

from ..datasets import Paragraph, QuestionRecord


class ParagraphIn(BaseModel):
    title: str
    sentences: list[str] = Field(min_length=1)


class RecordIn(BaseModel):
    id: str = "adhoc"
    dataset: str = "hotpotqa"
    question: str
    paragraphs: list[ParagraphIn] = Field(min_length=1)
    gold_answer: str = ""
    gold_supporting_facts: list[tuple[str, int]] | None = None
    gold_evidences: list[tuple[str, str, str]] | None = None
    hop_count: int | None = None
    question_type: str | None = None

    def to_record(self) -> QuestionRecord:
        return QuestionRecord(
            id=self.id,
            dataset=self.dataset,
            question=self.question,
            paragraphs=tuple(
                Paragraph(p.title, tuple(p.sentences)) for p in self.paragraphs
            ),
            gold_answer=self.gold_answer,
            gold_supporting_facts=(
                tuple(self.gold_supporting_facts) if self.gold_supporting_facts else None
            ),
            gold_evidences=tuple(self.gold_evidences) if self.gold_evidences else None,
            hop_count=self.hop_count,
            question_type=self.question_type,
        )


class ScriptRuleIn(BaseModel):
    match: str | list[str]
    response: str
    regex: bool = False


class SolveRequest(BaseModel):
    record: RecordIn
    strategy: Literal["direct", "cot", "sp-cot", "react", "sg-fsm1", "sg-fsm2"] = "sg-fsm2"
    setting: Literal[1, 2] = 1
    max_iterations: int = 6
    max_revisions: int = 2
    terminator_variant: Literal["continue", "identical"] = "continue"
    rules: list[ScriptRuleIn] | None = None
    include_transcript: bool = False


class HopOut(BaseModel):
    index: int
    subquestion: str
    paragraph_title: str
    subanswer: str
    evidence: tuple[str, str, str] | None = None


class SolveResponse(BaseModel):
    record_id: str
    strategy: str
    terminal_state: str | None
    final_answer: str | None
    steps: list[HopOut]
    format_ok_strict: bool
    format_ok_tolerant: bool
    prediction: dict[str, Any] | None
    transcript: dict[str, Any] | None = None


class ParseRequest(BaseModel):
    kind: str
    text: str


class ParseResponse(BaseModel):
    ok: bool
    value: dict[str, Any] | None
    reason: str | None
    detail: str | None
    strict: bool


class RenderRequest(BaseModel):
    role: str
    setting: Literal[1, 2] = 1
    context: dict[str, str]


class RenderResponse(BaseModel):
    role: str
    text: str
    token_estimate: int


class ScoreItem(BaseModel):
    record: RecordIn
    prediction: dict[str, Any]


class ScoreRequest(BaseModel):
    items: list[ScoreItem]
    setting: Literal[1, 2] = 1
    strategy: str = "external"
    dataset: str = "adhoc"


class ChatMessage(BaseModel):
    role: str
    content: str | None = ""


class ChatCompletionRequest(BaseModel):
    model: str = "scripted"
    messages: list[ChatMessage]
    temperature: float = 0.0
    max_tokens: int = 512


class ChatChoice(BaseModel):
    index: int = 0
    message: ChatMessage
    finish_reason: str = "stop"


class ChatCompletionResponse(BaseModel):
    id: str
    object: str = "chat.completion"
    created: int
    model: str
    choices: list[ChatChoice]
    usage: dict[str, int]
