"""HTTP service wrapping the core package.

Endpoints cover the interactive surface: solve one record with any strategy,
render a role prompt, parse a raw model response against a role schema, and
score externally produced predictions. A chat-completions endpoint backed by
the service's scripted rules makes the service usable as a deterministic
upstream for clients speaking the open wire format (including this package's
own CLI in remote mode).
"""

from __future__ import annotations

import time
import uuid

from fastapi import FastAPI, HTTPException

from .. import __version__
from ..errors import FsmQaError
from ..fsm import FsmBudgets
from ..gateway import Backend, ScriptedBackend
from ..metrics import Prediction, aggregate, classify_error, score_sample
from ..parsing import SchemaKind, parse_with_repair
from ..prompts import PromptKit, PromptRole
from ..strategies import StrategyContext, make_strategy
from .models import (
    ChatChoice,
    ChatCompletionRequest,
    ChatCompletionResponse,
    ChatMessage,
    HopOut,
    ParseRequest,
    ParseResponse,
    RenderRequest,
    RenderResponse,
    ScoreRequest,
    SolveRequest,
    SolveResponse,
)


def create_app(
    scripted_backend: Backend | None = None,
    template_dir: str | None = None,
) -> FastAPI:
    app = FastAPI(title="fsmqa", version=__version__)
    app.state.backend = scripted_backend
    app.state.prompts = PromptKit(template_dir)

    @app.get("/health")
    def health() -> dict:
        backend = app.state.backend
        return {
            "status": "ok",
            "version": __version__,
            "backend": backend.describe() if backend else None,
        }

    @app.post("/solve", response_model=SolveResponse)
    def solve(request: SolveRequest) -> SolveResponse:
        if request.rules is not None:
            backend = ScriptedBackend([r.model_dump() for r in request.rules])
        elif app.state.backend is not None:
            backend = app.state.backend
        else:
            raise HTTPException(
                status_code=422,
                detail="no backend configured; supply inline rules or start with --script",
            )
        ctx = StrategyContext(
            backend=backend,
            prompts=app.state.prompts,
            setting=request.setting,
            budgets=FsmBudgets(request.max_iterations, request.max_revisions),
            terminator_variant=request.terminator_variant,
        )
        record = request.record.to_record()
        try:
            transcript = make_strategy(request.strategy, ctx).run(record)
        except FsmQaError as exc:
            raise HTTPException(status_code=502, detail=str(exc)) from exc
        prediction = transcript.prediction or {}
        return SolveResponse(
            record_id=transcript.record_id,
            strategy=transcript.strategy,
            terminal_state=transcript.terminal_state.value if transcript.terminal_state else None,
            final_answer=transcript.final_answer,
            steps=[
                HopOut(
                    index=s.index,
                    subquestion=s.subquestion,
                    paragraph_title=s.paragraph_title,
                    subanswer=s.subanswer,
                    evidence=s.evidence,
                )
                for s in transcript.steps
            ],
            format_ok_strict=bool(prediction.get("format_ok_strict")),
            format_ok_tolerant=bool(prediction.get("format_ok_tolerant")),
            prediction=prediction or None,
            transcript=transcript.to_dict() if request.include_transcript else None,
        )

    @app.post("/parse", response_model=ParseResponse)
    def parse(request: ParseRequest) -> ParseResponse:
        try:
            kind = SchemaKind(request.kind)
        except ValueError:
            valid = ", ".join(k.value for k in SchemaKind)
            raise HTTPException(status_code=422, detail=f"kind must be one of: {valid}") from None
        result = parse_with_repair(kind, request.text, revisor=None, max_revisions=0)
        return ParseResponse(
            ok=result.ok,
            value=result.value,
            reason=result.reason,
            detail=result.detail,
            strict=result.strict,
        )

    @app.post("/prompts/render", response_model=RenderResponse)
    def render(request: RenderRequest) -> RenderResponse:
        try:
            role = PromptRole(request.role)
        except ValueError:
            valid = ", ".join(r.value for r in PromptRole)
            raise HTTPException(status_code=422, detail=f"role must be one of: {valid}") from None
        try:
            rendered = app.state.prompts.render(role, request.setting, request.context)
        except FsmQaError as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from exc
        return RenderResponse(
            role=role.value, text=rendered.text, token_estimate=rendered.token_estimate
        )

    @app.post("/score")
    def score(request: ScoreRequest) -> dict:
        scores = []
        predictions = []
        for item in request.items:
            record = item.record.to_record()
            prediction = Prediction.from_dict(item.prediction)
            sample = score_sample(prediction, record, request.setting)
            sample.error_category = classify_error(
                prediction, None, record, setting=request.setting
            )
            scores.append(sample)
            predictions.append(prediction)
        report = aggregate(
            scores,
            predictions,
            strategy=request.strategy,
            dataset=request.dataset,
            setting=request.setting,
        )
        return report.to_dict()

    @app.post("/v1/chat/completions", response_model=ChatCompletionResponse)
    def chat_completions(request: ChatCompletionRequest) -> ChatCompletionResponse:
        backend = app.state.backend
        if backend is None:
            raise HTTPException(status_code=400, detail="service started without a script backend")
        prompt = "\n".join(m.content or "" for m in request.messages if m.role == "user")
        from ..gateway import CompletionRequest

        try:
            completion = backend.complete(
                CompletionRequest(
                    prompt=prompt,
                    temperature=request.temperature,
                    max_tokens=request.max_tokens,
                )
            )
        except FsmQaError as exc:
            raise HTTPException(status_code=404, detail=str(exc)) from exc
        text = completion.text
        return ChatCompletionResponse(
            id=f"chatcmpl-{uuid.uuid4().hex[:12]}",
            created=int(time.time()),
            model=request.model,
            choices=[ChatChoice(message=ChatMessage(role="assistant", content=text))],
            usage={
                "prompt_tokens": len(prompt.split()),
                "completion_tokens": len(text.split()),
                "total_tokens": len(prompt.split()) + len(text.split()),
            },
        )

    return app
