"""EM / F1 metrics over normalized answers, batch benchmark running, and
report emission (text or csv)."""

from __future__ import annotations

import csv
import io
import json
import re
import string
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from decimal import ROUND_HALF_UP, Decimal

from .agent import Trajectory
from .errors import IngestError, InvalidParameter, RagloopError, TrajectoryAborted
from .protocol import PRIMITIVE_NAMES, Answer

_ARTICLES_RE = re.compile(r"\b(a|an|the)\b")
_PUNCT = set(string.punctuation)


def normalize_answer(s: str) -> str:
    """lower -> strip punctuation -> drop articles -> collapse whitespace."""
    s = s.lower()
    s = "".join(ch for ch in s if ch not in _PUNCT)
    s = _ARTICLES_RE.sub(" ", s)
    return " ".join(s.split())


def exact_match(pred: str, golds: list[str]) -> int:
    norm = normalize_answer(pred)
    return int(any(norm == normalize_answer(g) for g in golds))


def _f1_single(pred: str, gold: str) -> float:
    pred_tokens = normalize_answer(pred).split()
    gold_tokens = normalize_answer(gold).split()
    if not pred_tokens and not gold_tokens:
        return 1.0
    if not pred_tokens or not gold_tokens:
        return 0.0
    common = Counter(pred_tokens) & Counter(gold_tokens)
    num_same = sum(common.values())
    if num_same == 0:
        return 0.0
    precision = num_same / len(pred_tokens)
    recall = num_same / len(gold_tokens)
    return 2 * precision * recall / (precision + recall)


def f1(pred: str, golds: list[str]) -> float:
    """Token-level F1, max over gold aliases."""
    return max(_f1_single(pred, g) for g in golds)


@dataclass(frozen=True)
class QAExample:
    question: str
    gold_answers: tuple[str, ...]
    dataset_tag: str = "default"


def load_qa_dataset(path: str) -> list[QAExample]:
    """Line-delimited records: question, answers (non-empty list), optional
    dataset_tag. Malformed lines fail the whole load with their line number."""
    out = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise IngestError(line_no, f"invalid JSON: {exc.msg}")
            question = obj.get("question")
            answers = obj.get("answers")
            if not isinstance(question, str) or not question.strip():
                raise IngestError(line_no, "missing or empty 'question'")
            if (
                not isinstance(answers, list)
                or not answers
                or not all(isinstance(a, str) for a in answers)
            ):
                raise IngestError(line_no, "'answers' must be a non-empty list of strings")
            tag = obj.get("dataset_tag", "default")
            if not isinstance(tag, str):
                raise IngestError(line_no, "'dataset_tag' must be a string")
            out.append(QAExample(question=question, gold_answers=tuple(answers), dataset_tag=tag))
    return out


def round1(value: float) -> float:
    """Half-up to one decimal, so 52.75 reports as 52.8."""
    return float(Decimal(str(value)).quantize(Decimal("0.1"), rounding=ROUND_HALF_UP))


def _round2(value: float) -> float:
    return float(Decimal(str(value)).quantize(Decimal("0.01"), rounding=ROUND_HALF_UP))


@dataclass(frozen=True)
class ExampleResult:
    question: str
    dataset_tag: str
    prediction: str | None
    em: int
    f1: float
    turns: int
    action_counts: dict
    error: str | None = None


@dataclass(frozen=True)
class EvalRow:
    dataset: str
    num_examples: int
    em: float  # percentage, 1 decimal
    f1: float  # percentage, 1 decimal
    avg_turns: float
    action_counts: dict  # mean invocations per question
    errors: int


@dataclass(frozen=True)
class EvalReport:
    rows: tuple[EvalRow, ...]
    examples: tuple[ExampleResult, ...] = field(default=())


def _count_actions(trajectory: Trajectory) -> dict:
    from .engine import _wire_name

    counts: Counter = Counter()
    for step in trajectory.steps:
        for action in step.action_suite:
            if not isinstance(action, Answer):
                counts[_wire_name(action)] += 1
    return dict(counts)


def _score_example(example: QAExample, runner) -> ExampleResult:
    try:
        trajectory = runner(example.question)
    except TrajectoryAborted as exc:
        partial = exc.trajectory
        return ExampleResult(
            question=example.question,
            dataset_tag=example.dataset_tag,
            prediction=None,
            em=0,
            f1=0.0,
            turns=len(partial.steps) if partial is not None else 0,
            action_counts=_count_actions(partial) if partial is not None else {},
            error=str(exc),
        )
    except RagloopError as exc:
        return ExampleResult(
            question=example.question,
            dataset_tag=example.dataset_tag,
            prediction=None,
            em=0,
            f1=0.0,
            turns=0,
            action_counts={},
            error=str(exc),
        )
    pred = trajectory.final_answer
    em_score = exact_match(pred, list(example.gold_answers)) if pred is not None else 0
    f1_score = f1(pred, list(example.gold_answers)) if pred is not None else 0.0
    return ExampleResult(
        question=example.question,
        dataset_tag=example.dataset_tag,
        prediction=pred,
        em=em_score,
        f1=f1_score,
        turns=len(trajectory.steps),
        action_counts=_count_actions(trajectory),
        error=None if pred is not None else "no final answer",
    )


def _aggregate(tag: str, results: list[ExampleResult]) -> EvalRow:
    n = len(results)
    counts: Counter = Counter()
    for r in results:
        counts.update(r.action_counts)
    return EvalRow(
        dataset=tag,
        num_examples=n,
        em=round1(100.0 * sum(r.em for r in results) / n),
        f1=round1(100.0 * sum(r.f1 for r in results) / n),
        avg_turns=_round2(sum(r.turns for r in results) / n),
        action_counts={name: _round2(counts[name] / n) for name in sorted(counts)},
        errors=sum(1 for r in results if r.error is not None),
    )


def run_benchmark(dataset: list[QAExample], runner, max_workers: int = 1) -> EvalReport:
    """One trajectory per example via `runner(question)`; failures score 0
    with an error note instead of aborting the batch."""
    if not dataset:
        raise InvalidParameter("dataset is empty")
    if max_workers <= 1:
        results = [_score_example(ex, runner) for ex in dataset]
    else:
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            results = list(pool.map(lambda ex: _score_example(ex, runner), dataset))

    tags: dict[str, list[ExampleResult]] = {}
    for r in results:
        tags.setdefault(r.dataset_tag, []).append(r)
    rows = [_aggregate(tag, rs) for tag, rs in sorted(tags.items())]
    if len(rows) > 1:
        rows.append(_aggregate("ALL", results))
    return EvalReport(rows=tuple(rows), examples=tuple(results))


REPORT_COLUMNS = ("dataset", "num_examples", "em", "f1", "avg_turns", "errors", "action_counts")


def emit_report(report: EvalReport, fmt: str = "text") -> str:
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf)
        writer.writerow(REPORT_COLUMNS)
        for row in report.rows:
            writer.writerow(
                [
                    row.dataset,
                    row.num_examples,
                    row.em,
                    row.f1,
                    row.avg_turns,
                    row.errors,
                    json.dumps(row.action_counts, sort_keys=True),
                ]
            )
        return buf.getvalue()
    if fmt != "text":
        raise ValueError(f"unknown report format {fmt!r}")

    header = f"{'dataset':<16} {'n':>5} {'EM':>6} {'F1':>6} {'turns':>6} {'errors':>6}  actions/question"
    lines = [header, "-" * len(header)]
    for row in report.rows:
        actions = ", ".join(f"{k}={v}" for k, v in row.action_counts.items()) or "-"
        lines.append(
            f"{row.dataset:<16} {row.num_examples:>5} {row.em:>6.1f} {row.f1:>6.1f} "
            f"{row.avg_turns:>6.2f} {row.errors:>6}  {actions}"
        )
    return "\n".join(lines) + "\n"
