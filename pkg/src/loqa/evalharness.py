"""Batch evaluation of the question-answering pipeline.

Records carry a question plus any of: a gold short answer, a gold reference
answer (for Rouge), or multiple-choice options. Per-record failures are
recorded, never fatal. Multiple choice is scored on the predicted short
answer.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import Sequence

from .errors import LoqaError
from .metrics import (
    mc_match,
    rouge_1,
    rouge_2,
    rouge_l,
    short_contains,
    short_exact,
)
from .pipeline import Pipeline


@dataclass
class QaRecord:
    question: str
    short: str | None = None
    full: str | None = None
    choices: dict[str, str] | None = None
    correct_choice: str | None = None
    user_id: str | None = None
    now: int | None = None

    def __post_init__(self):
        if (self.choices is None) != (self.correct_choice is None):
            raise ValueError("choices and correct_choice must come together")
        if self.choices is not None and self.correct_choice not in self.choices:
            raise ValueError(
                f"correct_choice {self.correct_choice!r} not among choices")


@dataclass
class RecordResult:
    question: str
    category: str | None = None
    predicted_full: str | None = None
    predicted_short: str | None = None
    gold_short: str | None = None
    short_exact: bool | None = None
    short_contains: bool | None = None
    rouge_1: float | None = None
    rouge_2: float | None = None
    rouge_l: float | None = None
    mc_correct: bool | None = None
    error: str | None = None


@dataclass
class EvalReport:
    results: list[RecordResult] = field(default_factory=list)
    summary: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps({"summary": self.summary,
                           "results": [asdict(r) for r in self.results]},
                          indent=2)

    def render_table(self) -> str:
        lines = [f"{'metric':<16} {'value':>10} {'n':>6}"]
        lines.append("-" * 34)
        for key in ("short_exact", "short_contains", "rouge_1", "rouge_2",
                    "rouge_l", "mc_accuracy"):
            if key in self.summary:
                entry = self.summary[key]
                lines.append(f"{key:<16} {entry['value']:>10.4f} {entry['n']:>6}")
        lines.append(f"{'records':<16} {self.summary['records']:>10}")
        lines.append(f"{'errors':<16} {self.summary['errors']:>10}")
        return "\n".join(lines)


def _mean(values: list) -> float:
    return sum(values) / len(values)


def evaluate(
    pipeline: Pipeline,
    records: Sequence[QaRecord],
    now: int | None = None,
) -> EvalReport:
    """Run every record through the pipeline and score what can be scored."""
    report = EvalReport()
    for rec in records:
        row = RecordResult(question=rec.question, gold_short=rec.short)
        try:
            result = pipeline.answer(rec.question,
                                     now=rec.now if rec.now is not None else now,
                                     user_id=rec.user_id)
            row.category = result.category
            row.predicted_full = result.answer
            row.predicted_short = result.short
            if result.error:
                row.error = result.error
            if rec.short is not None:
                row.short_exact = short_exact(result.short, rec.short)
                row.short_contains = short_contains(result.answer, rec.short)
            if rec.full is not None:
                row.rouge_1 = rouge_1(result.answer, rec.full)
                row.rouge_2 = rouge_2(result.answer, rec.full)
                row.rouge_l = rouge_l(result.answer, rec.full)
            if rec.choices is not None:
                row.mc_correct = mc_match(result.short, rec.choices,
                                          rec.correct_choice)
        except LoqaError as e:
            row.error = str(e)
        report.results.append(row)

    summary: dict = {"records": len(report.results),
                     "errors": sum(1 for r in report.results if r.error)}
    for key, attr in (("short_exact", "short_exact"),
                      ("short_contains", "short_contains"),
                      ("rouge_1", "rouge_1"), ("rouge_2", "rouge_2"),
                      ("rouge_l", "rouge_l"), ("mc_accuracy", "mc_correct")):
        values = [getattr(r, attr) for r in report.results
                  if getattr(r, attr) is not None]
        if values:
            summary[key] = {"value": _mean([float(v) for v in values]),
                            "n": len(values)}
    report.summary = summary
    return report


def load_records(path) -> list[QaRecord]:
    """JSON lines, one record per line."""
    records = []
    with open(path, encoding="utf-8") as f:
        for line_no, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                doc = json.loads(line)
            except json.JSONDecodeError as e:
                raise ValueError(f"line {line_no}: not valid JSON: {e}") from None
            known = {k: doc[k] for k in QaRecord.__dataclass_fields__ if k in doc}
            if "question" not in known:
                raise ValueError(f"line {line_no}: record needs a question")
            records.append(QaRecord(**known))
    return records
