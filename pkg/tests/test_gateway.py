import json

import pytest

from fsmqa.errors import AuthFailure, GatewayError, NoScriptMatch, RateLimitExhausted
from fsmqa.gateway import (
    BoundedBackend,
    CompletionRequest,
    OpenAICompatBackend,
    ReplayBackend,
    ScriptRule,
    ScriptedBackend,
    from_transcript,
)
from fsmqa.transcript import RunTranscript, StepRecord
from stub_server import StubChatServer


def req(prompt: str) -> CompletionRequest:
    return CompletionRequest(prompt=prompt, timeout=5.0)


class TestCompletionRequest:
    def test_validation(self):
        with pytest.raises(ValueError):
            CompletionRequest(prompt="x", temperature=-0.1)
        with pytest.raises(ValueError):
            CompletionRequest(prompt="x", max_tokens=0)
        assert CompletionRequest(prompt="x").temperature == 0.0


class TestScriptedBackend:
    def test_first_match_wins(self):
        backend = ScriptedBackend([
            ("needle", "first"),
            ("needle", "second"),
        ])
        assert backend.complete(req("hay needle stack")).text == "first"

    def test_all_substrings_must_match(self):
        backend = ScriptedBackend([(["alpha", "beta"], "both")], strict=False, fallback="none")
        assert backend.complete(req("alpha then beta")).text == "both"
        assert backend.complete(req("alpha only")).text == "none"

    def test_regex_rule(self):
        backend = ScriptedBackend([ScriptRule(match=r"year \d{4}", response="ok", regex=True)])
        assert backend.complete(req("the year 1932 arrived")).text == "ok"

    def test_strict_no_match(self):
        backend = ScriptedBackend([("x", "y")], strict=True)
        with pytest.raises(NoScriptMatch) as err:
            backend.complete(req("nothing matches"))
        assert err.value.prompt_fingerprint

    def test_searcher_rule_example(self):
        response = (
            '{"question": "...", "paragraph title": "The Mask of Fu Manchu", "answer": "1932"}'
        )
        backend = ScriptedBackend([
            ("What year was The Mask Of Fu Manchu released", response),
        ])
        out = backend.complete(req("... What year was The Mask Of Fu Manchu released ..."))
        assert json.loads(out.text)["answer"] == "1932"

    def test_rules_file_round_trip(self, tmp_path):
        path = tmp_path / "rules.json"
        path.write_text(json.dumps({
            "strict": False,
            "fallback": "fb",
            "rules": [{"match": ["a", "b"], "response": "r"}],
        }), encoding="utf-8")
        backend = ScriptedBackend.from_rules_file(path)
        assert backend.complete(req("a b")).text == "r"
        assert backend.complete(req("c")).text == "fb"

    def test_call_log(self):
        backend = ScriptedBackend([("p", "r")])
        backend.complete(req("p one"))
        backend.complete(req("p two"))
        assert backend.calls == ["p one", "p two"]


class TestReplayBackend:
    def test_fifo_per_prompt(self):
        backend = ReplayBackend([("same", "first"), ("same", "second")])
        assert backend.complete(req("same")).text == "first"
        assert backend.complete(req("same")).text == "second"
        with pytest.raises(NoScriptMatch):
            backend.complete(req("same"))

    def test_exact_prompt_only(self):
        backend = ReplayBackend([("exact prompt", "r")])
        with pytest.raises(NoScriptMatch):
            backend.complete(req("exact"))

    def test_empty_backend(self):
        backend = ReplayBackend([])
        with pytest.raises(NoScriptMatch):
            backend.complete(req("anything"))

    def test_from_transcript_collects_visit_exchanges(self):
        transcript = RunTranscript(record_id="r", strategy="s", setting=1)
        transcript.entries.append(StepRecord(
            state=None, role="x", prompt="p1", raw_response="bad",
            parse_outcome=None, exchanges=(("p1", "bad"), ("revise p1", "good")),
        ))
        backend = from_transcript(transcript)
        assert backend.complete(req("p1")).text == "bad"
        assert backend.complete(req("revise p1")).text == "good"


class TestBoundedBackend:
    def test_ceiling_enforced_under_contention(self):
        import threading
        import time

        class SlowBackend(ScriptedBackend):
            def __init__(self):
                super().__init__([("p", "r")])
                self.in_flight = 0
                self.max_seen = 0
                self._gauge = threading.Lock()

            def complete(self, request):
                with self._gauge:
                    self.in_flight += 1
                    self.max_seen = max(self.max_seen, self.in_flight)
                try:
                    time.sleep(0.005)
                    return super().complete(request)
                finally:
                    with self._gauge:
                        self.in_flight -= 1

        inner = SlowBackend()
        bounded = BoundedBackend(inner, max_in_flight=3)
        threads = [
            threading.Thread(target=lambda: bounded.complete(req("p"))) for _ in range(12)
        ]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        assert inner.max_seen <= 3
        assert len(inner.calls) == 12
        assert bounded.describe().startswith("bounded(")


class TestRemoteBackend:
    def rules(self):
        return ScriptedBackend([("ping", "pong")])

    def test_success_over_http(self):
        with StubChatServer(self.rules()) as stub:
            backend = OpenAICompatBackend(stub.base_url, "test-model", sleeper=lambda s: None)
            out = backend.complete(req("ping"))
            assert out.text == "pong"
            assert out.retry_count == 0
            assert out.usage["total_tokens"] == 2
            backend.close()

    def test_retry_on_429_then_success(self):
        with StubChatServer(self.rules(), status_plan=[429, 429, 200]) as stub:
            backend = OpenAICompatBackend(stub.base_url, "m", sleeper=lambda s: None)
            out = backend.complete(req("ping"))
            assert out.text == "pong"
            assert out.retry_count == 2
            assert stub.request_count == 3
            backend.close()

    def test_rate_limit_exhausted(self):
        with StubChatServer(self.rules(), status_plan=[429, 429, 429, 429]) as stub:
            backend = OpenAICompatBackend(stub.base_url, "m", retry_cap=3, sleeper=lambda s: None)
            with pytest.raises(RateLimitExhausted):
                backend.complete(req("ping"))
            assert stub.request_count == 4  # 1 + retry cap
            backend.close()

    def test_auth_failure_no_retry(self):
        with StubChatServer(self.rules(), status_plan=[401]) as stub:
            backend = OpenAICompatBackend(stub.base_url, "m", sleeper=lambda s: None)
            with pytest.raises(AuthFailure):
                backend.complete(req("ping"))
            assert stub.request_count == 1
            backend.close()

    def test_server_errors_then_success(self):
        with StubChatServer(self.rules(), status_plan=[500, 200]) as stub:
            backend = OpenAICompatBackend(stub.base_url, "m", sleeper=lambda s: None)
            assert backend.complete(req("ping")).retry_count == 1
            backend.close()

    def test_transport_error_wrapped(self):
        backend = OpenAICompatBackend(
            "http://127.0.0.1:9/v1", "m", retry_cap=1, sleeper=lambda s: None
        )
        with pytest.raises(GatewayError):
            backend.complete(CompletionRequest(prompt="x", timeout=0.2))
        backend.close()

    def test_empty_content_is_not_an_error(self):
        backend_rules = ScriptedBackend([("ping", "")])
        with StubChatServer(backend_rules) as stub:
            backend = OpenAICompatBackend(stub.base_url, "m", sleeper=lambda s: None)
            assert backend.complete(req("ping")).text == ""
            backend.close()
