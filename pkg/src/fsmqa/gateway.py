"""Uniform completion interface over remote chat endpoints and scripted lookups.

Remote traffic speaks the prevailing chat-completion wire format (model,
messages, temperature, max_tokens in; choices[0].message.content out) over
httpx with bounded, jittered retries. Scripted backends are deterministic
prompt-to-text lookups that make whole runs replayable offline.
"""

from __future__ import annotations

import hashlib
import json
import logging
import random
import re
import threading
import time
from collections import deque
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Sequence

import httpx

from .errors import (
    AuthFailure,
    GatewayError,
    GatewayTimeout,
    NoScriptMatch,
    RateLimitExhausted,
)

logger = logging.getLogger(__name__)


def prompt_fingerprint(prompt: str) -> str:
    return hashlib.sha256(prompt.encode("utf-8")).hexdigest()[:12]


@dataclass(frozen=True)
class CompletionRequest:
    prompt: str
    model_id: str = "default"
    temperature: float = 0.0
    max_tokens: int = 512
    timeout: float = 60.0

    def __post_init__(self) -> None:
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.max_tokens < 1:
            raise ValueError("max_tokens must be >= 1")


@dataclass(frozen=True)
class CompletionResponse:
    text: str
    latency: float = 0.0
    usage: dict[str, int] | None = None
    retry_count: int = 0


class Backend:
    """Anything that can answer a completion request."""

    def complete(self, request: CompletionRequest) -> CompletionResponse:
        raise NotImplementedError

    def describe(self) -> str:
        return type(self).__name__


@dataclass(frozen=True)
class ScriptRule:
    """First matching rule wins. ``match`` is a substring, a list of
    substrings that must all occur, or a regex when ``regex=True``."""

    match: str | tuple[str, ...]
    response: str
    regex: bool = False

    def matches(self, prompt: str) -> bool:
        if self.regex:
            assert isinstance(self.match, str)
            return re.search(self.match, prompt, re.DOTALL) is not None
        needles = (self.match,) if isinstance(self.match, str) else self.match
        return all(n in prompt for n in needles)


class ScriptedBackend(Backend):
    """Deterministic rule-based stand-in for a live model."""

    def __init__(
        self,
        rules: Sequence[ScriptRule | tuple | dict],
        *,
        strict: bool = True,
        fallback: str = "",
    ):
        self.rules = [self._coerce(r) for r in rules]
        self.strict = strict
        self.fallback = fallback
        self._lock = threading.Lock()
        self.calls: list[str] = []

    @staticmethod
    def _coerce(rule) -> ScriptRule:
        if isinstance(rule, ScriptRule):
            return rule
        if isinstance(rule, dict):
            match = rule["match"]
            if isinstance(match, list):
                match = tuple(match)
            return ScriptRule(match=match, response=rule["response"], regex=bool(rule.get("regex")))
        match, response = rule
        if isinstance(match, list):
            match = tuple(match)
        return ScriptRule(match=match, response=response)

    @classmethod
    def from_rules_file(cls, path: str | Path) -> "ScriptedBackend":
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        return cls(
            data.get("rules", []),
            strict=bool(data.get("strict", True)),
            fallback=data.get("fallback", ""),
        )

    def complete(self, request: CompletionRequest) -> CompletionResponse:
        with self._lock:
            self.calls.append(request.prompt)
        for rule in self.rules:
            if rule.matches(request.prompt):
                return CompletionResponse(text=rule.response)
        if self.strict:
            raise NoScriptMatch(
                f"no script rule matches prompt {prompt_fingerprint(request.prompt)}",
                prompt_fingerprint=prompt_fingerprint(request.prompt),
            )
        return CompletionResponse(text=self.fallback)

    def describe(self) -> str:
        return f"scripted({len(self.rules)} rules, strict={self.strict})"


class ReplayBackend(Backend):
    """Exact-prompt lookup with per-prompt FIFO queues.

    Two recorded exchanges may share a prompt with different responses (a
    revision loop, a repeated sub-question); sequence order disambiguates.
    """

    def __init__(self, exchanges: Sequence[tuple[str, str]]):
        self._queues: dict[str, deque[str]] = {}
        collisions = 0
        for prompt, response in exchanges:
            queue = self._queues.setdefault(prompt, deque())
            if queue and queue[-1] != response:
                collisions += 1
            queue.append(response)
        if collisions:
            logger.debug("replay backend: %d same-prompt collisions resolved by order", collisions)
        self._lock = threading.Lock()

    def complete(self, request: CompletionRequest) -> CompletionResponse:
        with self._lock:
            queue = self._queues.get(request.prompt)
            if not queue:
                raise NoScriptMatch(
                    f"replay backend has no recorded response for prompt "
                    f"{prompt_fingerprint(request.prompt)}",
                    prompt_fingerprint=prompt_fingerprint(request.prompt),
                )
            return CompletionResponse(text=queue.popleft())

    def describe(self) -> str:
        return f"replay({sum(len(q) for q in self._queues.values())} exchanges)"


def from_transcript(transcript) -> ReplayBackend:
    """Replay backend over every exchange a recorded run made."""
    return ReplayBackend(transcript.all_exchanges())


class OpenAICompatBackend(Backend):
    """Client for any endpoint speaking the open chat-completion wire format."""

    def __init__(
        self,
        base_url: str,
        model: str,
        *,
        api_key: str | None = None,
        retry_cap: int = 3,
        backoff_base: float = 1.0,
        sleeper: Callable[[float], None] = time.sleep,
        rng: random.Random | None = None,
    ):
        self.base_url = base_url.rstrip("/")
        self.model = model
        self.api_key = api_key
        self.retry_cap = retry_cap
        self.backoff_base = backoff_base
        self._sleep = sleeper
        self._rng = rng or random.Random()
        self._client = httpx.Client()

    def close(self) -> None:
        self._client.close()

    def _headers(self) -> dict[str, str]:
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        return headers

    def complete(self, request: CompletionRequest) -> CompletionResponse:
        fp = prompt_fingerprint(request.prompt)
        body = {
            "model": self.model if request.model_id == "default" else request.model_id,
            "messages": [
                {"role": "system", "content": ""},
                {"role": "user", "content": request.prompt},
            ],
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        }
        url = f"{self.base_url}/chat/completions"
        started = time.perf_counter()
        last_error: Exception | None = None
        rate_limited = False
        for attempt in range(1 + self.retry_cap):
            if attempt:
                delay = self.backoff_base * (2 ** (attempt - 1)) * (1 + 0.25 * self._rng.random())
                self._sleep(delay)
            try:
                response = self._client.post(
                    url, json=body, headers=self._headers(), timeout=request.timeout
                )
            except httpx.TimeoutException as exc:
                last_error = exc
                continue
            except httpx.HTTPError as exc:
                last_error = exc
                continue
            if response.status_code in (401, 403):
                raise AuthFailure(f"auth rejected for prompt {fp}", prompt_fingerprint=fp)
            if response.status_code == 429:
                rate_limited = True
                last_error = GatewayError(f"rate limited (prompt {fp})", prompt_fingerprint=fp)
                continue
            if response.status_code >= 500:
                last_error = GatewayError(
                    f"server error {response.status_code} (prompt {fp})", prompt_fingerprint=fp
                )
                continue
            if response.status_code != 200:
                raise GatewayError(
                    f"unexpected status {response.status_code} (prompt {fp})",
                    prompt_fingerprint=fp,
                )
            payload = response.json()
            try:
                text = payload["choices"][0]["message"]["content"] or ""
            except (KeyError, IndexError, TypeError) as exc:
                raise GatewayError(
                    f"malformed completion payload (prompt {fp}): {exc!r}",
                    prompt_fingerprint=fp,
                ) from exc
            return CompletionResponse(
                text=text,
                latency=time.perf_counter() - started,
                usage=payload.get("usage"),
                retry_count=attempt,
            )
        if isinstance(last_error, httpx.TimeoutException):
            raise GatewayTimeout(
                f"timed out after {1 + self.retry_cap} attempts (prompt {fp})",
                prompt_fingerprint=fp,
            )
        if rate_limited:
            raise RateLimitExhausted(
                f"rate limited after {1 + self.retry_cap} attempts (prompt {fp})",
                prompt_fingerprint=fp,
            )
        raise GatewayError(
            f"transport failed after {1 + self.retry_cap} attempts (prompt {fp}): {last_error!r}",
            prompt_fingerprint=fp,
        )

    def describe(self) -> str:
        return f"remote({self.base_url}, model={self.model})"


class BoundedBackend(Backend):
    """Ceiling on concurrent in-flight requests across a shared backend."""

    def __init__(self, inner: Backend, max_in_flight: int):
        self.inner = inner
        self._sem = threading.BoundedSemaphore(max_in_flight)

    def complete(self, request: CompletionRequest) -> CompletionResponse:
        with self._sem:
            return self.inner.complete(request)

    def describe(self) -> str:
        return f"bounded({self.inner.describe()})"
