"""Batch execution: load and sample a dataset, push every record through a
strategy under bounded concurrency, persist transcripts and a resumable
manifest, then score the run directory.

Run directory layout:
    manifest.json      config snapshot + per-record status (atomic rewrites)
    records.jsonl      the sampled records in canonical form
    transcripts.jsonl  one transcript per line, appended by a single writer
    report.json/.txt   written by evaluation
    scores.jsonl       per-sample scores
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import time
from concurrent.futures import FIRST_COMPLETED, ThreadPoolExecutor, wait
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any

from . import datasets, metrics
from .datasets import QuestionRecord, SamplePlan
from .errors import ConfigError, DivergenceDetected, FsmQaError
from .fsm import FsmBudgets
from .gateway import Backend, OpenAICompatBackend, ScriptedBackend, from_transcript
from .metrics import Prediction
from .prompts import PromptKit
from .strategies import STRATEGY_NAMES, StrategyContext, make_strategy
from .transcript import RunTranscript

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.json"
RECORDS_NAME = "records.jsonl"
TRANSCRIPTS_NAME = "transcripts.jsonl"


@dataclass
class RunConfig:
    dataset_path: str
    dataset_kind: str
    strategy: str
    out_dir: str
    setting: int = 1
    backend: str = "script:script.json"  # "script:<path>" or an http(s) endpoint
    model: str = "default"
    sample_size: int | None = None
    seed: int = 0
    concurrency: int = 1
    max_iterations: int = 6
    max_revisions: int = 2
    terminator_variant: str = "continue"
    temperature: float = 0.0
    max_tokens: int = 512
    request_timeout: float = 60.0
    retry_cap: int = 3
    record_timeout: float = 600.0
    demos_path: str | None = None
    salvage: bool = False
    include_unanswerable: bool = False
    template_dir: str | None = None

    def __post_init__(self) -> None:
        if self.strategy not in STRATEGY_NAMES:
            raise ConfigError(f"unknown strategy {self.strategy!r}")
        if self.setting not in (1, 2):
            raise ConfigError("setting must be 1 or 2")
        if self.dataset_kind not in datasets.DATASET_KINDS:
            raise ConfigError(f"unknown dataset kind {self.dataset_kind!r}")
        if self.concurrency < 1:
            raise ConfigError("concurrency must be >= 1")

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    def content_hash(self) -> str:
        canonical = json.dumps(self.to_dict(), sort_keys=True)
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:16]

    @classmethod
    def from_file(cls, path: str | Path, overrides: dict[str, Any] | None = None) -> "RunConfig":
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        data.update({k: v for k, v in (overrides or {}).items() if v is not None})
        try:
            return cls(**data)
        except TypeError as exc:
            raise ConfigError(f"bad config file {path}: {exc}") from exc


def atomic_write(path: Path, text: str) -> None:
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


def build_backend(config: RunConfig) -> Backend:
    spec = config.backend
    if spec.startswith("script:"):
        return ScriptedBackend.from_rules_file(spec[len("script:"):])
    if spec.startswith("http://") or spec.startswith("https://"):
        base = os.environ.get("FSMQA_BASE_URL") or spec
        return OpenAICompatBackend(
            base,
            config.model,
            api_key=os.environ.get("OPENAI_API_KEY"),
            retry_cap=config.retry_cap,
        )
    raise ConfigError(f"backend must be 'script:<path>' or an http(s) URL, got {spec!r}")


def _strategy_context(config: RunConfig, backend: Backend) -> StrategyContext:
    demos = ""
    if config.demos_path:
        demos = Path(config.demos_path).read_text(encoding="utf-8").strip()
    return StrategyContext(
        backend=backend,
        prompts=PromptKit(config.template_dir),
        setting=config.setting,
        budgets=FsmBudgets(config.max_iterations, config.max_revisions),
        terminator_variant=config.terminator_variant,
        model_id=config.model,
        temperature=config.temperature,
        max_tokens=config.max_tokens,
        request_timeout=config.request_timeout,
        demonstrations=demos,
    )


@dataclass
class RunManifest:
    config: dict[str, Any]
    config_hash: str
    status: dict[str, str] = field(default_factory=dict)  # record_id -> pending|done|failed
    errors: dict[str, str] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        return {
            "config": self.config,
            "config_hash": self.config_hash,
            "status": self.status,
            "errors": self.errors,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "RunManifest":
        return cls(
            config=data["config"],
            config_hash=data["config_hash"],
            status=dict(data.get("status", {})),
            errors=dict(data.get("errors", {})),
        )

    def save(self, run_dir: Path) -> None:
        atomic_write(run_dir / MANIFEST_NAME, json.dumps(self.to_dict(), indent=2, sort_keys=True))


@dataclass
class RunResult:
    run_dir: Path
    done: int
    failed: int
    skipped: int

    @property
    def ok(self) -> bool:
        return self.failed == 0


def _load_or_sample(config: RunConfig, run_dir: Path) -> list[QuestionRecord]:
    cache = run_dir / RECORDS_NAME
    if cache.exists():
        return datasets.read_cache(cache)
    records = datasets.load(
        config.dataset_path,
        config.dataset_kind,
        salvage=config.salvage,
        include_unanswerable=config.include_unanswerable,
    )
    if config.sample_size is not None:
        records = datasets.sample(records, SamplePlan(size=config.sample_size, seed=config.seed))
    datasets.write_cache(records, cache)
    return records


def execute_run(config: RunConfig) -> RunResult:
    """Run every pending record through the configured strategy.

    Interrupted or partially failed runs resume: records already marked done
    are skipped; a config whose hash differs from the manifest is refused.
    Per-record failures are recorded, never fatal to the batch.
    """
    run_dir = Path(config.out_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    records = _load_or_sample(config, run_dir)

    manifest_path = run_dir / MANIFEST_NAME
    if manifest_path.exists():
        manifest = RunManifest.from_dict(json.loads(manifest_path.read_text(encoding="utf-8")))
        if manifest.config_hash != config.content_hash():
            raise ConfigError(
                f"{run_dir} holds a run with a different config "
                f"({manifest.config_hash} != {config.content_hash()}); refusing to resume"
            )
    else:
        manifest = RunManifest(
            config=config.to_dict(),
            config_hash=config.content_hash(),
            status={r.id: "pending" for r in records},
        )
        manifest.save(run_dir)

    backend = build_backend(config)
    ctx = _strategy_context(config, backend)
    pending = [r for r in records if manifest.status.get(r.id) != "done"]
    skipped = len(records) - len(pending)
    if skipped:
        logger.info("resuming %s: %d records already done", run_dir, skipped)

    transcripts_path = run_dir / TRANSCRIPTS_NAME
    done = failed = 0

    def run_one(record: QuestionRecord) -> RunTranscript:
        local_ctx = ctx
        if config.record_timeout:
            local_ctx = StrategyContext(**{**ctx.__dict__, "deadline": time.monotonic() + config.record_timeout})
        return make_strategy(config.strategy, local_ctx).run(record)

    with transcripts_path.open("a", encoding="utf-8") as sink:
        with ThreadPoolExecutor(max_workers=config.concurrency) as pool:
            futures = {pool.submit(run_one, r): r for r in pending}
            remaining = set(futures)
            while remaining:
                finished, remaining = wait(remaining, return_when=FIRST_COMPLETED)
                for future in finished:
                    record = futures[future]
                    try:
                        transcript = future.result()
                    except FsmQaError as exc:
                        logger.error("record %s failed: %s", record.id, exc)
                        manifest.status[record.id] = "failed"
                        manifest.errors[record.id] = str(exc)
                        failed += 1
                        manifest.save(run_dir)
                        continue
                    if transcript.flags.get("incomplete"):
                        manifest.status[record.id] = "failed"
                        manifest.errors[record.id] = transcript.flags.get("error", "incomplete")
                        failed += 1
                    else:
                        manifest.status[record.id] = "done"
                        manifest.errors.pop(record.id, None)
                        done += 1
                    sink.write(transcript.to_line() + "\n")
                    sink.flush()
                    manifest.save(run_dir)
    return RunResult(run_dir=run_dir, done=done, failed=failed, skipped=skipped)


def read_transcripts(run_dir: str | Path) -> list[RunTranscript]:
    path = Path(run_dir) / TRANSCRIPTS_NAME
    transcripts: dict[str, RunTranscript] = {}
    if not path.exists():
        raise ConfigError(f"{path} not found; run the batch first")
    for line in path.read_text(encoding="utf-8").splitlines():
        if line.strip():
            t = RunTranscript.from_line(line)
            transcripts[t.record_id] = t  # re-runs supersede earlier lines
    return list(transcripts.values())


def evaluate_run(run_dir: str | Path) -> metrics.MetricsReport:
    """Score every done record in a run directory and write reports.

    Records whose status is failed (transport trouble, not model behaviour)
    are excluded from scoring and noted in the report.
    """
    run_dir = Path(run_dir)
    records = {r.id: r for r in datasets.read_cache(run_dir / RECORDS_NAME)}
    manifest = RunManifest.from_dict(
        json.loads((run_dir / MANIFEST_NAME).read_text(encoding="utf-8"))
    )
    config = manifest.config
    transcripts = read_transcripts(run_dir)
    failed = sum(1 for status in manifest.status.values() if status == "failed")

    scores = []
    predictions = []
    for transcript in transcripts:
        record = records.get(transcript.record_id)
        if record is None:
            logger.warning("transcript %s has no cached record; skipped", transcript.record_id)
            continue
        if manifest.status.get(transcript.record_id) != "done":
            continue
        prediction = (
            Prediction.from_dict(transcript.prediction)
            if transcript.prediction
            else Prediction(record_id=record.id, answer="", strategy=transcript.strategy)
        )
        score = metrics.score_sample(prediction, record, transcript.setting)
        score.error_category = metrics.classify_error(
            prediction, transcript, record, setting=transcript.setting
        )
        scores.append(score)
        predictions.append(prediction)

    report = metrics.aggregate(
        scores,
        predictions,
        strategy=config.get("strategy", "?"),
        dataset=config.get("dataset_kind", "?"),
        setting=config.get("setting", 1),
    )
    if failed:
        report.notes.append(f"{failed} records failed and were excluded from scoring")
    atomic_write(run_dir / "report.json", json.dumps(report.to_dict(), indent=2, sort_keys=True))
    atomic_write(run_dir / "report.txt", report.to_text())
    atomic_write(run_dir / "scores.jsonl", metrics.scores_to_jsonl(scores))
    return report


@dataclass
class ReplayOutcome:
    record_id: str
    equal: bool
    divergence: str | None = None


def _first_divergence(old: dict, new: dict) -> str:
    o_entries, n_entries = old.get("entries", []), new.get("entries", [])
    for i, (oe, ne) in enumerate(zip(o_entries, n_entries)):
        if oe != ne:
            keys = [k for k in oe if oe.get(k) != ne.get(k)]
            return f"entry {i} differs on {keys}"
    if len(o_entries) != len(n_entries):
        return f"entry count differs ({len(o_entries)} vs {len(n_entries)})"
    keys = [k for k in old if old.get(k) != new.get(k)]
    return f"top-level fields differ: {keys}"


def replay_transcript(transcript: RunTranscript, template_dir: str | None = None) -> ReplayOutcome:
    """Re-execute a recorded run against its own exchanges and compare."""
    if transcript.record_snapshot is None:
        raise DivergenceDetected("transcript carries no record snapshot; cannot replay")
    record = QuestionRecord.from_dict(transcript.record_snapshot)
    cfg = transcript.config
    ctx = StrategyContext(
        backend=from_transcript(transcript),
        prompts=PromptKit(template_dir),
        setting=transcript.setting,
        budgets=FsmBudgets(
            cfg.get("max_iterations", 6), cfg.get("max_revisions_per_output", 2)
        ),
        terminator_variant=cfg.get("terminator_variant", "continue"),
        model_id=cfg.get("model_id", "default"),
        temperature=cfg.get("temperature", 0.0),
        max_tokens=cfg.get("max_tokens", 512),
        demonstrations=cfg.get("demonstrations", ""),
        react_max_steps=cfg.get("react_max_steps", 8),
    )
    fresh = make_strategy(transcript.strategy, ctx).run(record)
    old, new = transcript.comparable_dict(), fresh.comparable_dict()
    if old == new:
        return ReplayOutcome(record_id=transcript.record_id, equal=True)
    return ReplayOutcome(
        record_id=transcript.record_id, equal=False, divergence=_first_divergence(old, new)
    )


def load_transcripts_file(path: str | Path) -> list[RunTranscript]:
    """A standalone transcript .json file or a transcripts .jsonl log."""
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    stripped = text.lstrip()
    if stripped.startswith("{") and "\n{" not in text.strip():
        return [RunTranscript.from_dict(json.loads(text))]
    return [RunTranscript.from_line(line) for line in text.splitlines() if line.strip()]
