"""Scoring: answer EM/F1, supporting facts, evidence triples, format rate,
error taxonomy, and aggregated reports.

Answer normalization and F1 follow the de-facto extractive-QA evaluation
script (lowercase, strip punctuation, drop articles, collapse whitespace,
token-multiset F1 with the yes/no/noanswer zero rule).
"""

from __future__ import annotations

import json
import logging
import re
import string
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Iterable, Sequence

logger = logging.getLogger(__name__)

_PUNCT = set(string.punctuation)
_ARTICLES = re.compile(r"\b(a|an|the)\b")
_SPECIAL = ("yes", "no", "noanswer")


def normalize_answer(text: str) -> str:
    lowered = text.lower()
    no_punct = "".join(ch for ch in lowered if ch not in _PUNCT)
    no_articles = _ARTICLES.sub(" ", no_punct)
    return " ".join(no_articles.split())


@dataclass(frozen=True)
class PairScores:
    em: int
    f1: float
    precision: float
    recall: float

    def as_tuple(self) -> tuple[int, float, float, float]:
        return (self.em, self.f1, self.precision, self.recall)


def answer_scores(pred: str, gold: str) -> PairScores:
    """EM and token-level F1 over normalized answers.

    Both-empty after normalization scores em=f1=1 by convention (logged);
    the reference script never sees empty gold answers.
    """
    np_, ng = normalize_answer(pred), normalize_answer(gold)
    em = int(np_ == ng)
    if not np_ and not ng:
        logger.debug("both answers empty after normalization; scoring 1.0 by convention")
        return PairScores(1, 1.0, 1.0, 1.0)
    if (np_ in _SPECIAL or ng in _SPECIAL) and np_ != ng:
        return PairScores(em, 0.0, 0.0, 0.0)
    pred_tokens = np_.split()
    gold_tokens = ng.split()
    common = Counter(pred_tokens) & Counter(gold_tokens)
    num_same = sum(common.values())
    if num_same == 0:
        return PairScores(em, 0.0, 0.0, 0.0)
    precision = 1.0 * num_same / len(pred_tokens)
    recall = 1.0 * num_same / len(gold_tokens)
    f1 = (2 * precision * recall) / (precision + recall)
    return PairScores(em, f1, precision, recall)


def _set_scores(pred: set, gold: set) -> PairScores:
    if not pred and not gold:
        return PairScores(1, 1.0, 1.0, 1.0)
    tp = len(pred & gold)
    precision = tp / len(pred) if pred else 0.0
    recall = tp / len(gold) if gold else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    return PairScores(int(pred == gold), f1, precision, recall)


def sup_scores(
    pred_facts: Iterable[Sequence] | None,
    gold_facts: Iterable[Sequence],
) -> PairScores:
    """Supporting facts as sets of (normalized title, sentence index)."""
    pred = {(normalize_answer(str(t)), int(i)) for t, i in (pred_facts or [])}
    gold = {(normalize_answer(str(t)), int(i)) for t, i in gold_facts}
    return _set_scores(pred, gold)


def _norm_triple(triple: Sequence) -> tuple[str, str, str]:
    s, r, o = (str(x) for x in triple)
    return (normalize_answer(s), normalize_answer(r), normalize_answer(o))


def joint_scores(
    pred_triples: Iterable[Sequence] | None,
    gold_triples: Iterable[Sequence],
) -> PairScores:
    """Evidence triples compared element-wise under answer normalization."""
    pred = {_norm_triple(t) for t in (pred_triples or [])}
    gold = {_norm_triple(t) for t in gold_triples}
    return _set_scores(pred, gold)


def relaxed_joint_f1(
    pred_triples: Iterable[Sequence] | None,
    gold_triples: Iterable[Sequence],
) -> float:
    """Looser triple overlap: greedy one-to-one matching where every element
    of a pair has token F1 > 0.5. Reported alongside the strict variant."""
    pred = [_norm_triple(t) for t in (pred_triples or [])]
    gold = [_norm_triple(t) for t in gold_triples]
    if not pred and not gold:
        return 1.0
    if not pred or not gold:
        return 0.0
    remaining = list(gold)
    matched = 0
    for p in pred:
        for g in remaining:
            if all(answer_scores(pe, ge).f1 > 0.5 for pe, ge in zip(p, g)):
                remaining.remove(g)
                matched += 1
                break
    precision = matched / len(pred)
    recall = matched / len(gold)
    return 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0


def classical_joint(ans: PairScores, sup: PairScores) -> tuple[int, float]:
    """Joint metric as the per-sample product of answer and sup scores."""
    em = ans.em * sup.em
    precision = ans.precision * sup.precision
    recall = ans.recall * sup.recall
    f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    return em, f1


class ErrorCategory(str, Enum):
    FORMAT_MISMATCH = "format_mismatch"
    HALLUCINATION_RESPONSE = "hallucination_response"
    ERROR_PROPAGATION = "error_propagation"
    LOST_IN_MIDDLE = "lost_in_middle"
    CORRECT = "correct"
    UNCLASSIFIED = "unclassified"


@dataclass
class Prediction:
    """A strategy's final output for one record."""

    record_id: str
    answer: str
    strategy: str
    supporting_facts: list[tuple[str, int]] | None = None
    evidences: list[tuple[str, str, str]] | None = None
    format_ok_strict: bool = False
    format_ok_tolerant: bool = False
    terminal_state: str | None = None

    def to_dict(self) -> dict[str, Any]:
        return {
            "record_id": self.record_id,
            "answer": self.answer,
            "strategy": self.strategy,
            "supporting_facts": (
                [list(sf) for sf in self.supporting_facts]
                if self.supporting_facts is not None
                else None
            ),
            "evidences": (
                [list(ev) for ev in self.evidences] if self.evidences is not None else None
            ),
            "format_ok_strict": self.format_ok_strict,
            "format_ok_tolerant": self.format_ok_tolerant,
            "terminal_state": self.terminal_state,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "Prediction":
        return cls(
            record_id=data["record_id"],
            answer=data.get("answer") or "",
            strategy=data.get("strategy", ""),
            supporting_facts=(
                [(str(t), int(i)) for t, i in data["supporting_facts"]]
                if data.get("supporting_facts") is not None
                else None
            ),
            evidences=(
                [(str(s), str(r), str(o)) for s, r, o in data["evidences"]]
                if data.get("evidences") is not None
                else None
            ),
            format_ok_strict=bool(data.get("format_ok_strict")),
            format_ok_tolerant=bool(data.get("format_ok_tolerant")),
            terminal_state=data.get("terminal_state"),
        )


@dataclass
class SampleScore:
    record_id: str
    ans: PairScores
    sup: PairScores | None = None
    joint: PairScores | None = None
    joint_f1_relaxed: float | None = None
    classical_joint_em: int | None = None
    classical_joint_f1: float | None = None
    error_category: ErrorCategory | None = None

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {
            "record_id": self.record_id,
            "ans_em": self.ans.em,
            "ans_f1": self.ans.f1,
            "ans_precision": self.ans.precision,
            "ans_recall": self.ans.recall,
        }
        if self.sup is not None:
            out["sup_em"] = self.sup.em
            out["sup_f1"] = self.sup.f1
        if self.joint is not None:
            out["joint_em"] = self.joint.em
            out["joint_f1"] = self.joint.f1
            out["joint_f1_relaxed"] = self.joint_f1_relaxed
        if self.classical_joint_em is not None:
            out["classical_joint_em"] = self.classical_joint_em
            out["classical_joint_f1"] = self.classical_joint_f1
        if self.error_category is not None:
            out["error_category"] = self.error_category.value
        return out


def score_sample(prediction: Prediction, record, setting: int) -> SampleScore:
    """Score one prediction against its record's gold data.

    Sup and joint families are scored only where gold data exists (Musique
    lacks sentence-level supporting facts; triple gold exists for 2wiki).
    """
    ans = answer_scores(prediction.answer, record.gold_answer)
    score = SampleScore(record_id=record.id, ans=ans)
    if setting == 2 and record.gold_supporting_facts is not None:
        score.sup = sup_scores(prediction.supporting_facts, record.gold_supporting_facts)
        em, f1 = classical_joint(ans, score.sup)
        score.classical_joint_em = em
        score.classical_joint_f1 = f1
    if setting == 2 and record.gold_evidences is not None:
        score.joint = joint_scores(prediction.evidences, record.gold_evidences)
        score.joint_f1_relaxed = relaxed_joint_f1(prediction.evidences, record.gold_evidences)
    return score


def format_rate(predictions: Sequence[Prediction]) -> tuple[float | None, float | None]:
    """(strict, tolerant) fractions of format-valid final outputs; None when empty."""
    if not predictions:
        return None, None
    n = len(predictions)
    strict = sum(1 for p in predictions if p.format_ok_strict) / n
    tolerant = sum(1 for p in predictions if p.format_ok_tolerant) / n
    return strict, tolerant


def _step_trace(transcript) -> list[tuple[str, str]]:
    """(paragraph_title, subanswer) per hop from an engine transcript."""
    if transcript is None:
        return []
    steps = getattr(transcript, "steps", None) or []
    out = []
    for step in steps:
        title = getattr(step, "paragraph_title", None)
        answer = getattr(step, "subanswer", None)
        if title is None and isinstance(step, dict):
            title, answer = step.get("paragraph_title"), step.get("subanswer")
        out.append((str(title or ""), str(answer or "")))
    return out


def classify_error(
    prediction: Prediction,
    transcript,
    record,
    *,
    setting: int = 2,
    sup_f1_threshold: float = 0.5,
) -> ErrorCategory:
    """Assign exactly one failure category per the four-way taxonomy.

    Rule order: format mismatch, hallucination (right answer, wrong or missing
    evidence), error propagation (an intermediate hop went off the gold path),
    lost-in-the-middle (hops fine, final synthesis wrong). Supporting facts
    are only "required" in setting 2 where the dataset has gold. Heuristic;
    the report documents this.
    """
    q7 = prediction.terminal_state == "q7_early_withdrawal"
    if q7 or not prediction.format_ok_tolerant:
        return ErrorCategory.FORMAT_MISMATCH

    ans = answer_scores(prediction.answer, record.gold_answer)
    gold_titles = {normalize_answer(t) for t in record.gold_titles()}

    if ans.em == 1:
        if setting == 2 and record.gold_supporting_facts is not None:
            if not prediction.supporting_facts:
                return ErrorCategory.HALLUCINATION_RESPONSE
            sup = sup_scores(prediction.supporting_facts, record.gold_supporting_facts)
            if sup.f1 < sup_f1_threshold:
                return ErrorCategory.HALLUCINATION_RESPONSE
        return ErrorCategory.CORRECT

    # Wrong answer: inspect whatever trace is available.
    trace = _step_trace(transcript)
    if not trace and prediction.supporting_facts:
        trace = [(title, "") for title, _ in prediction.supporting_facts]
    if not trace:
        return ErrorCategory.UNCLASSIFIED

    first_title = normalize_answer(trace[0][0])
    if gold_titles and first_title and first_title not in gold_titles:
        return ErrorCategory.ERROR_PROPAGATION
    if record.gold_decomposition:
        gold_answers = {normalize_answer(a) for _, a in record.gold_decomposition}
        for _, sub_answer in trace:
            if sub_answer and normalize_answer(sub_answer) not in gold_answers:
                return ErrorCategory.ERROR_PROPAGATION
    return ErrorCategory.LOST_IN_MIDDLE


def _mean(values: list[float]) -> float | None:
    return sum(values) / len(values) if values else None


@dataclass
class MetricsReport:
    strategy: str
    dataset: str
    setting: int
    n: int
    means: dict[str, float | None]
    format_rate_strict: float | None
    format_rate_tolerant: float | None
    error_histogram: dict[str, int]
    n_sup: int = 0
    n_joint: int = 0
    notes: list[str] = field(default_factory=list)

    def to_dict(self) -> dict[str, Any]:
        return {
            "strategy": self.strategy,
            "dataset": self.dataset,
            "setting": self.setting,
            "n": self.n,
            "n_sup": self.n_sup,
            "n_joint": self.n_joint,
            "means": self.means,
            "format_rate_strict": self.format_rate_strict,
            "format_rate_tolerant": self.format_rate_tolerant,
            "error_histogram": self.error_histogram,
            "notes": self.notes,
        }

    def to_text(self) -> str:
        def pct(v: float | None) -> str:
            return f"{100 * v:6.1f}" if v is not None else "     -"

        m = self.means
        lines = [
            f"strategy={self.strategy}  dataset={self.dataset}  setting={self.setting}  n={self.n}",
            "",
            f"{'':14}{'EM':>7}{'F1':>7}{'Format':>8}",
            f"{'ans':14}{pct(m.get('ans_em'))}{pct(m.get('ans_f1'))}{pct(self.format_rate_strict):>8}",
        ]
        if self.n_sup:
            lines.append(f"{'sup':14}{pct(m.get('sup_em'))}{pct(m.get('sup_f1'))}")
        if self.n_joint:
            lines.append(f"{'joint':14}{pct(m.get('joint_em'))}{pct(m.get('joint_f1'))}")
        if self.n_sup:
            lines.append(
                f"{'joint(prod)':14}{pct(m.get('classical_joint_em'))}{pct(m.get('classical_joint_f1'))}"
            )
        lines.append(f"format strict/tolerant: {pct(self.format_rate_strict)} /{pct(self.format_rate_tolerant)}")
        if self.error_histogram:
            lines.append("errors: " + ", ".join(f"{k}={v}" for k, v in sorted(self.error_histogram.items())))
        for note in self.notes:
            lines.append(f"note: {note}")
        return "\n".join(lines) + "\n"


def aggregate(
    scores: Sequence[SampleScore],
    predictions: Sequence[Prediction],
    *,
    strategy: str,
    dataset: str,
    setting: int,
) -> MetricsReport:
    """Arithmetic means over scored samples; sup/joint means over the samples
    where gold data existed."""
    means: dict[str, float | None] = {
        "ans_em": _mean([float(s.ans.em) for s in scores]),
        "ans_f1": _mean([s.ans.f1 for s in scores]),
        "ans_precision": _mean([s.ans.precision for s in scores]),
        "ans_recall": _mean([s.ans.recall for s in scores]),
    }
    with_sup = [s for s in scores if s.sup is not None]
    with_joint = [s for s in scores if s.joint is not None]
    means["sup_em"] = _mean([float(s.sup.em) for s in with_sup])
    means["sup_f1"] = _mean([s.sup.f1 for s in with_sup])
    means["joint_em"] = _mean([float(s.joint.em) for s in with_joint])
    means["joint_f1"] = _mean([s.joint.f1 for s in with_joint])
    means["joint_f1_relaxed"] = _mean(
        [s.joint_f1_relaxed for s in with_joint if s.joint_f1_relaxed is not None]
    )
    means["classical_joint_em"] = _mean(
        [float(s.classical_joint_em) for s in with_sup if s.classical_joint_em is not None]
    )
    means["classical_joint_f1"] = _mean(
        [s.classical_joint_f1 for s in with_sup if s.classical_joint_f1 is not None]
    )
    strict, tolerant = format_rate(predictions)
    histogram: dict[str, int] = {}
    for s in scores:
        if s.error_category is not None:
            histogram[s.error_category.value] = histogram.get(s.error_category.value, 0) + 1
    notes = ["error taxonomy is heuristic; see docs/schemas.md"]
    if setting == 2 and not with_sup:
        notes.append("sup/joint omitted: no sentence-level gold for this dataset")
    return MetricsReport(
        strategy=strategy,
        dataset=dataset,
        setting=setting,
        n=len(scores),
        n_sup=len(with_sup),
        n_joint=len(with_joint),
        means=means,
        format_rate_strict=strict,
        format_rate_tolerant=tolerant,
        error_histogram=histogram,
        notes=notes,
    )


def scores_to_jsonl(scores: Sequence[SampleScore]) -> str:
    return "".join(json.dumps(s.to_dict(), sort_keys=True) + "\n" for s in scores)
