"""Exception hierarchy shared across the package."""


class FsmQaError(Exception):
    """Base class for every error raised by this package."""


class UndefinedTransition(FsmQaError):
    """A (state, event) pair outside the transition table. Always an engine bug."""


class GatewayError(FsmQaError):
    """Transport-level failure talking to a model backend."""

    def __init__(self, message: str, prompt_fingerprint: str | None = None):
        super().__init__(message)
        self.prompt_fingerprint = prompt_fingerprint


class GatewayTimeout(GatewayError):
    pass


class RateLimitExhausted(GatewayError):
    pass


class AuthFailure(GatewayError):
    pass


class NoScriptMatch(GatewayError):
    """Strict scripted backend received a prompt matching no rule."""


class SchemaViolation(FsmQaError):
    """Parsed JSON does not satisfy the schema for its role."""


class MissingSlot(FsmQaError):
    """A prompt template slot was not supplied at render time."""


class UnknownRoleSetting(FsmQaError):
    pass


class EmptySteps(FsmQaError):
    pass


class MalformedFile(FsmQaError):
    def __init__(self, message: str, path: str | None = None, line: int | None = None):
        where = path or "<input>"
        if line is not None:
            where = f"{where}:{line}"
        super().__init__(f"{where}: {message}")
        self.path = path
        self.line = line


class SizeExceedsCorpus(FsmQaError):
    pass


class ConfigError(FsmQaError):
    pass


class DivergenceDetected(FsmQaError):
    pass
