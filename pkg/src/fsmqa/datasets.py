"""Benchmark ingestion: unified question records, loaders, subsampling, cache.

Supported source layouts:
  hotpotqa  - JSON array; context as [title, [sentences]] pairs, supporting_facts.
  2wiki     - same as hotpotqa plus evidences triples.
  musique   - JSONL; paragraphs carry idx/title/paragraph_text, plus a
              question_decomposition list and an answerable flag.
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass
from pathlib import Path
from random import Random
from typing import Any, Iterable

from .errors import MalformedFile, SizeExceedsCorpus

logger = logging.getLogger(__name__)

RECORD_SCHEMA_VERSION = 1

DATASET_KINDS = ("hotpotqa", "2wiki", "musique")

# Sentence boundary: terminal punctuation, whitespace, then an uppercase letter
# or a digit. Musique ships unsplit paragraph text.
_SENT_SPLIT = re.compile(r"(?<=[.!?])\s+(?=[A-Z0-9\"'(])")


def split_sentences(text: str) -> list[str]:
    parts = [p.strip() for p in _SENT_SPLIT.split(text.strip())]
    return [p for p in parts if p]


@dataclass(frozen=True)
class Paragraph:
    title: str
    sentences: tuple[str, ...]


@dataclass(frozen=True)
class QuestionRecord:
    """One benchmark sample in the unified internal form."""

    id: str
    dataset: str
    question: str
    paragraphs: tuple[Paragraph, ...]
    gold_answer: str
    gold_supporting_facts: tuple[tuple[str, int], ...] | None = None
    gold_evidences: tuple[tuple[str, str, str], ...] | None = None
    gold_decomposition: tuple[tuple[str, str], ...] | None = None
    gold_support_titles: tuple[str, ...] | None = None
    hop_count: int | None = None
    question_type: str | None = None

    def gold_titles(self) -> tuple[str, ...]:
        """Titles of the gold paragraphs, from whichever source provides them."""
        if self.gold_supporting_facts:
            seen: list[str] = []
            for title, _ in self.gold_supporting_facts:
                if title not in seen:
                    seen.append(title)
            return tuple(seen)
        return self.gold_support_titles or ()

    def to_dict(self) -> dict[str, Any]:
        return {
            "schema_version": RECORD_SCHEMA_VERSION,
            "id": self.id,
            "dataset": self.dataset,
            "question": self.question,
            "paragraphs": [
                {"title": p.title, "sentences": list(p.sentences)} for p in self.paragraphs
            ],
            "gold_answer": self.gold_answer,
            "gold_supporting_facts": (
                [list(sf) for sf in self.gold_supporting_facts]
                if self.gold_supporting_facts is not None
                else None
            ),
            "gold_evidences": (
                [list(ev) for ev in self.gold_evidences]
                if self.gold_evidences is not None
                else None
            ),
            "gold_decomposition": (
                [list(dc) for dc in self.gold_decomposition]
                if self.gold_decomposition is not None
                else None
            ),
            "gold_support_titles": (
                list(self.gold_support_titles) if self.gold_support_titles is not None else None
            ),
            "hop_count": self.hop_count,
            "question_type": self.question_type,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "QuestionRecord":
        return cls(
            id=str(data["id"]),
            dataset=data["dataset"],
            question=data["question"],
            paragraphs=tuple(
                Paragraph(p["title"], tuple(p["sentences"])) for p in data["paragraphs"]
            ),
            gold_answer=data["gold_answer"],
            gold_supporting_facts=(
                tuple((sf[0], int(sf[1])) for sf in data["gold_supporting_facts"])
                if data.get("gold_supporting_facts") is not None
                else None
            ),
            gold_evidences=(
                tuple((str(e[0]), str(e[1]), str(e[2])) for e in data["gold_evidences"])
                if data.get("gold_evidences") is not None
                else None
            ),
            gold_decomposition=(
                tuple((str(d[0]), str(d[1])) for d in data["gold_decomposition"])
                if data.get("gold_decomposition") is not None
                else None
            ),
            gold_support_titles=(
                tuple(data["gold_support_titles"])
                if data.get("gold_support_titles") is not None
                else None
            ),
            hop_count=data.get("hop_count"),
            question_type=data.get("question_type"),
        )


@dataclass(frozen=True)
class SamplePlan:
    size: int = 1000
    seed: int = 0


def _check_record(record: QuestionRecord) -> str | None:
    """Return a problem description, or None when the record is well formed."""
    if not record.question.strip():
        return "empty question"
    if not record.paragraphs:
        return "no candidate paragraphs"
    for p in record.paragraphs:
        if not p.sentences:
            return f"paragraph {p.title!r} has no sentences"
    if record.gold_supporting_facts:
        titles = {p.title for p in record.paragraphs}
        for title, idx in record.gold_supporting_facts:
            if title not in titles:
                return f"supporting fact title {title!r} matches no paragraph"
            if idx < 0:
                return f"negative sentence index for {title!r}"
    return None


def _read_text(path: Path) -> str:
    raw = path.read_bytes()
    try:
        return raw.decode("utf-8")
    except UnicodeDecodeError:
        logger.warning("%s: invalid UTF-8 sequences replaced", path)
        return raw.decode("utf-8", errors="replace")


def _iter_source_objects(path: Path) -> Iterable[tuple[int, dict]]:
    """Yield (line_number, object) for a JSON array file or a JSONL file."""
    text = _read_text(path)
    stripped = text.lstrip()
    if not stripped:
        return
    if stripped.startswith("["):
        try:
            items = json.loads(text)
        except json.JSONDecodeError as exc:
            raise MalformedFile(f"invalid JSON: {exc}", path=str(path)) from exc
        if not isinstance(items, list):
            raise MalformedFile("top-level JSON value is not an array", path=str(path))
        for i, item in enumerate(items):
            yield i + 1, item
    else:
        for i, line in enumerate(text.splitlines()):
            if not line.strip():
                continue
            try:
                yield i + 1, json.loads(line)
            except json.JSONDecodeError as exc:
                raise MalformedFile(f"invalid JSON line: {exc}", path=str(path), line=i + 1) from exc


def _parse_hotpot_like(item: dict, dataset: str) -> QuestionRecord:
    paragraphs = tuple(
        Paragraph(title=str(ctx[0]), sentences=tuple(str(s) for s in ctx[1]))
        for ctx in item["context"]
    )
    sup = None
    if item.get("supporting_facts") is not None:
        sup = tuple((str(sf[0]), int(sf[1])) for sf in item["supporting_facts"])
    evidences = None
    if dataset == "2wiki" and item.get("evidences") is not None:
        evidences = tuple((str(e[0]), str(e[1]), str(e[2])) for e in item["evidences"])
    return QuestionRecord(
        id=str(item["_id"]),
        dataset=dataset,
        question=str(item["question"]),
        paragraphs=paragraphs,
        gold_answer=str(item["answer"]),
        gold_supporting_facts=sup,
        gold_evidences=evidences,
        hop_count=None,
        question_type=item.get("type"),
    )


_MUSIQUE_HOPS = re.compile(r"^(\d+)hop")


def _parse_musique(item: dict) -> QuestionRecord:
    paragraphs = []
    support_titles = []
    for para in item["paragraphs"]:
        sentences = tuple(split_sentences(str(para["paragraph_text"])))
        paragraphs.append(Paragraph(title=str(para["title"]), sentences=sentences))
        if para.get("is_supporting"):
            support_titles.append(str(para["title"]))
    decomposition = None
    if item.get("question_decomposition"):
        decomposition = tuple(
            (str(step["question"]), str(step.get("answer", "")))
            for step in item["question_decomposition"]
        )
    rec_id = str(item["id"])
    hops = None
    m = _MUSIQUE_HOPS.match(rec_id)
    if m:
        hops = int(m.group(1))
    return QuestionRecord(
        id=rec_id,
        dataset="musique",
        question=str(item["question"]),
        paragraphs=tuple(paragraphs),
        gold_answer=str(item.get("answer", "")),
        gold_supporting_facts=None,
        gold_evidences=None,
        gold_decomposition=decomposition,
        gold_support_titles=tuple(support_titles) or None,
        hop_count=hops,
        question_type=rec_id.split("__")[0] if "__" in rec_id else None,
    )


def load(
    path: str | Path,
    dataset: str,
    *,
    salvage: bool = False,
    include_unanswerable: bool = False,
) -> list[QuestionRecord]:
    """Load a benchmark file into unified records.

    In strict mode (default) a malformed sample aborts loading; with
    ``salvage=True`` bad samples are skipped and logged. Musique records
    flagged unanswerable are skipped unless ``include_unanswerable``.
    """
    path = Path(path)
    if dataset not in DATASET_KINDS:
        raise MalformedFile(f"unknown dataset kind {dataset!r}", path=str(path))
    if not path.exists():
        raise MalformedFile("file does not exist", path=str(path))

    records: list[QuestionRecord] = []
    for line_no, item in _iter_source_objects(path):
        try:
            if dataset == "musique":
                if not include_unanswerable and item.get("answerable") is False:
                    continue
                record = _parse_musique(item)
            else:
                record = _parse_hotpot_like(item, dataset)
        except (KeyError, IndexError, TypeError, ValueError) as exc:
            if salvage:
                logger.warning("%s:%s skipped: %r", path, line_no, exc)
                continue
            raise MalformedFile(f"bad sample: {exc!r}", path=str(path), line=line_no) from exc
        problem = _check_record(record)
        if problem is not None:
            if salvage:
                logger.warning("%s:%s skipped: %s", path, line_no, problem)
                continue
            raise MalformedFile(problem, path=str(path), line=line_no)
        records.append(record)
    return records


def sample(records: list[QuestionRecord], plan: SamplePlan) -> list[QuestionRecord]:
    """Uniform draw without replacement, deterministic per seed.

    Generator: Mersenne Twister (``random.Random(seed).random()``) driving a
    partial Fisher-Yates shuffle; the first ``size`` swapped-out elements are
    returned in draw order. ``Random.random()`` is stable across platforms and
    Python versions for a given seed.
    """
    if plan.size > len(records):
        raise SizeExceedsCorpus(f"requested {plan.size} of {len(records)} records")
    rng = Random(plan.seed)
    pool = list(records)
    drawn: list[QuestionRecord] = []
    n = len(pool)
    for i in range(plan.size):
        j = i + int(rng.random() * (n - i))
        pool[i], pool[j] = pool[j], pool[i]
        drawn.append(pool[i])
    return drawn


def write_cache(records: Iterable[QuestionRecord], path: str | Path) -> None:
    """Write the canonical JSONL cache, one record per line."""
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(record.to_dict(), ensure_ascii=False, sort_keys=True))
            fh.write("\n")


def read_cache(path: str | Path) -> list[QuestionRecord]:
    path = Path(path)
    records = []
    for line_no, item in _iter_source_objects(path):
        if item.get("schema_version") != RECORD_SCHEMA_VERSION:
            raise MalformedFile(
                f"unsupported cache schema_version {item.get('schema_version')!r}",
                path=str(path),
                line=line_no,
            )
        records.append(QuestionRecord.from_dict(item))
    return records
