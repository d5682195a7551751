"""Query functions over the embedding store.

Each function turns (matched windows, scope) into a SensorContext: one
deterministic natural-language sentence plus a machine-readable payload.
One matched window counts as one minute. Matching is strict: a window
counts only when its similarity score is > h.

Functions:
  CalculateDuration   minutes an activity was detected in the scope
  DetectActivity      top-k activities by detected minutes in the scope
  CountingFrequency   episodes: maximal runs of matches, gaps <= 5 min join
  CountingDays        days in the scope with at least one match
  DetectFirstTime     clock time of the earliest match
  DetectLastTime      clock time of the latest match
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import QueryError, ScopeError
from .schema import LabelVocabulary
from .similarity import SimilarityModel
from .store import EmbeddingStore, match_windows
from .timescope import (
    TimeScope,
    clock_hhmm,
    day_name,
    iso_date,
    resolve_scope,
    resolve_scope_per_day,
    scope_phrase,
)

QUERY_FUNCTIONS = (
    "CalculateDuration",
    "DetectActivity",
    "CountingFrequency",
    "CountingDays",
    "DetectFirstTime",
    "DetectLastTime",
)

DEFAULT_GAP_MINUTES = 5
DEFAULT_TOP_K = 3


@dataclass(frozen=True)
class QuerySpec:
    """One decomposed query: a function, its contexts, and a time scope."""

    function: str
    contexts: tuple[str, ...]
    scope: TimeScope

    def __post_init__(self):
        if self.function not in QUERY_FUNCTIONS:
            raise QueryError(f"unknown query function {self.function!r}")
        if not self.contexts and self.function != "DetectActivity":
            raise QueryError(f"{self.function} needs at least one context phrase")


@dataclass
class SensorContext:
    """One retrieved fact: rendered sentence plus raw values."""

    text: str
    values: dict
    function: str
    context: str | None
    scope_text: str


@dataclass
class ExecutionContext:
    """Everything execute() needs to turn specs into contexts."""

    store: EmbeddingStore
    similarity: SimilarityModel
    label_vectors: np.ndarray        # (|vocab|, E), vocabulary order
    vocab: LabelVocabulary
    now: int
    h: float = 0.5
    user_id: str | None = None
    gap_minutes: int = DEFAULT_GAP_MINUTES
    top_k: int = DEFAULT_TOP_K

    def label_vector(self, phrase: str) -> np.ndarray:
        return self.label_vectors[self.vocab.index(phrase)]

    def matches(self, phrase: str, intervals: list[tuple[int, int]]):
        return match_windows(self.store, self.similarity, self.label_vector(phrase),
                             intervals, h=self.h, user_id=self.user_id)


def format_minutes(minutes: int) -> str:
    """35 -> '35 minutes'; 125 -> '2 hours and 5 minutes'; 120 -> '2 hours'."""
    h, m = divmod(int(minutes), 60)
    h_part = f"{h} hour" + ("s" if h != 1 else "")
    m_part = f"{m} minute" + ("s" if m != 1 else "")
    if h and m:
        return f"{h_part} and {m_part}"
    if h:
        return h_part
    return m_part


def _sentence(*parts: str) -> str:
    return " ".join(p for p in parts if p).rstrip() + "."


def calculate_duration(
    ctx: ExecutionContext, phrase: str, intervals: list[tuple[int, int]], scope_text: str
) -> SensorContext:
    minutes = ctx.matches(phrase, intervals).minutes
    if minutes > 0:
        text = _sentence(f"You spent {format_minutes(minutes)} {phrase}", scope_text)
    else:
        text = _sentence(f"You have no recorded time {phrase}", scope_text)
    return SensorContext(text=text, values={"minutes": minutes},
                         function="CalculateDuration", context=phrase,
                         scope_text=scope_text)


def count_episodes(timestamps: np.ndarray, gap_minutes: int) -> list[tuple[int, int]]:
    """Maximal runs of matched windows; a gap of <= gap_minutes joins."""
    if len(timestamps) == 0:
        return []
    ts = np.sort(np.asarray(timestamps))
    episodes = []
    start = prev = int(ts[0])
    for t in ts[1:]:
        t = int(t)
        if t - prev > gap_minutes * 60:
            episodes.append((start, prev))
            start = t
        prev = t
    episodes.append((start, prev))
    return episodes


def counting_frequency(
    ctx: ExecutionContext, phrase: str, intervals: list[tuple[int, int]], scope_text: str
) -> SensorContext:
    matched = ctx.matches(phrase, intervals)
    episodes = count_episodes(matched.timestamps, ctx.gap_minutes)
    n = len(episodes)
    text = _sentence(f"You were {phrase} {n} time" + ("s" if n != 1 else ""), scope_text)
    return SensorContext(
        text=text,
        values={"count": n, "minutes": matched.minutes,
                "episodes": [[int(a), int(b)] for a, b in episodes]},
        function="CountingFrequency", context=phrase, scope_text=scope_text)


def counting_days(
    ctx: ExecutionContext,
    phrase: str,
    per_day: list[tuple[int, list[tuple[int, int]]]],
    scope_text: str,
) -> SensorContext:
    hit_days = []
    for day, intervals in per_day:
        if ctx.matches(phrase, intervals).minutes > 0:
            hit_days.append(day)
    n, total = len(hit_days), len(per_day)
    text = _sentence(f"You were {phrase} on {n} of the last {total} days")
    return SensorContext(
        text=text,
        values={"days": n, "total_days": total,
                "dates": [iso_date(d) for d in hit_days]},
        function="CountingDays", context=phrase, scope_text=scope_text)


def detect_first_time(
    ctx: ExecutionContext, phrase: str, intervals: list[tuple[int, int]],
    scope_text: str, last: bool = False
) -> SensorContext:
    matched = ctx.matches(phrase, intervals)
    name = "DetectLastTime" if last else "DetectFirstTime"
    if matched.minutes == 0:
        text = _sentence(f"Not detected: {phrase}", scope_text)
        return SensorContext(text=text, values={"timestamp": None},
                             function=name, context=phrase, scope_text=scope_text)
    t = int(matched.timestamps[-1] if last else matched.timestamps[0])
    which = "last" if last else "first"
    text = _sentence(
        f"You were {which} {phrase} around {clock_hhmm(t)}", scope_text)
    return SensorContext(text=text,
                         values={"timestamp": t, "time": clock_hhmm(t)},
                         function=name, context=phrase, scope_text=scope_text)


def detect_last_time(
    ctx: ExecutionContext, phrase: str, intervals: list[tuple[int, int]], scope_text: str
) -> SensorContext:
    return detect_first_time(ctx, phrase, intervals, scope_text, last=True)


def detect_activity(
    ctx: ExecutionContext, intervals: list[tuple[int, int]], scope_text: str
) -> SensorContext:
    ranked = []
    for phrase in ctx.vocab.phrases:
        minutes = ctx.matches(phrase, intervals).minutes
        if minutes > 0:
            ranked.append((phrase, minutes))
    ranked.sort(key=lambda pm: (-pm[1], ctx.vocab.index(pm[0])))
    top = ranked[: ctx.top_k]
    if not top:
        text = _sentence("No confident activity detected", scope_text)
        return SensorContext(text=text, values={"activities": []},
                             function="DetectActivity", context=None,
                             scope_text=scope_text)
    listed = ", ".join(f"{p} ({format_minutes(m)})" for p, m in top)
    text = _sentence(f"You were mostly {listed}", scope_text)
    return SensorContext(
        text=text,
        values={"activities": [{"label": p, "minutes": m} for p, m in top]},
        function="DetectActivity", context=None, scope_text=scope_text)


def _scope_reference_time(
    scope: TimeScope, produced: list[SensorContext]
) -> int | None:
    """Timestamp an after/before scope hangs on, from an earlier context."""
    if scope.kind not in ("after_result", "before_result"):
        return None
    ref = scope.result_ref
    if ref is None or ref >= len(produced):
        raise ScopeError(f"scope references context {ref}, "
                         f"but only {len(produced)} exist so far")
    t = produced[ref].values.get("timestamp")
    if t is None:
        raise ScopeError(
            f"referenced context {ref} produced no timestamp to anchor on")
    return int(t)


def execute(specs: list[QuerySpec], ctx: ExecutionContext) -> list[SensorContext]:
    """Run specs in order; later specs may reference earlier results.

    Returns one SensorContext per (spec, context phrase), or one per day for
    per-day scopes. Raises ScopeError when an after/before reference cannot
    be resolved.
    """
    if not specs:
        raise QueryError("no query specs to execute")
    bounds = ctx.store.bounds() if len(ctx.store) else None
    produced: list[SensorContext] = []
    for spec in specs:
        ref_time = _scope_reference_time(spec.scope, produced)
        stext = scope_phrase(spec.scope, result_time=ref_time)
        if spec.scope.per_day:
            per_day = resolve_scope_per_day(spec.scope, ctx.now, bounds, ref_time)
            for phrase in spec.contexts:
                for day, intervals in per_day:
                    day_text = f"on {day_name(day)} ({iso_date(day)})"
                    c = _run_one(ctx, spec, phrase, intervals, day_text)
                    c.values["day"] = day_name(day)
                    c.values["date"] = iso_date(day)
                    produced.append(c)
            continue
        if spec.function == "CountingDays":
            per_day = resolve_scope_per_day(spec.scope, ctx.now, bounds, ref_time)
            for phrase in spec.contexts:
                produced.append(counting_days(ctx, phrase, per_day, stext))
            continue
        intervals = resolve_scope(spec.scope, ctx.now, bounds, ref_time)
        if spec.function == "DetectActivity":
            produced.append(detect_activity(ctx, intervals, stext))
            continue
        for phrase in spec.contexts:
            produced.append(_run_one(ctx, spec, phrase, intervals, stext))
    return produced


def _run_one(
    ctx: ExecutionContext,
    spec: QuerySpec,
    phrase: str,
    intervals: list[tuple[int, int]],
    scope_text: str,
) -> SensorContext:
    if phrase not in ctx.vocab:
        raise QueryError(f"context phrase {phrase!r} not in vocabulary")
    if spec.function == "CalculateDuration":
        return calculate_duration(ctx, phrase, intervals, scope_text)
    if spec.function == "CountingFrequency":
        return counting_frequency(ctx, phrase, intervals, scope_text)
    if spec.function == "DetectFirstTime":
        return detect_first_time(ctx, phrase, intervals, scope_text)
    if spec.function == "DetectLastTime":
        return detect_last_time(ctx, phrase, intervals, scope_text)
    raise QueryError(f"unhandled function {spec.function!r}")
