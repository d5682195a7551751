"""Time scopes: the date/time-of-day part of a decomposed question.

All calendar math is UTC-based on integer unix seconds. Resolved intervals
are half-open [start, end): a window belongs to day d when
day_start(d) <= timestamp < day_start(d) + 86400. "After" scopes start one
second past the reference so the referenced window itself is excluded, and
run to the end of that day; "before" scopes run from the start of the
reference's day up to (not including) the reference.

Time-of-day bands: morning 06-12, afternoon 12-18, evening 18-24,
night 00-06. "Last week" is the Monday-Sunday week before the week
containing now.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, replace
from datetime import datetime, timezone

from .errors import ScopeError

DAY = 86400
WEEK = 7 * DAY

WEEKDAY_NAMES = ("Monday", "Tuesday", "Wednesday", "Thursday",
                 "Friday", "Saturday", "Sunday")

TIME_OF_DAY_HOURS: dict[str, tuple[int, int]] = {
    "morning": (6, 12),
    "afternoon": (12, 18),
    "evening": (18, 24),
    "night": (0, 6),
    "any": (0, 24),
}

SPANS = ("today", "yesterday", "last_week", "all")
KINDS = ("absolute_range", "named_day", "relative_span",
         "after_result", "before_result")


def configure_time_of_day(bands: dict[str, "tuple[int, int] | list[int]"]) -> None:
    """Override the day-band hour table, e.g. {"morning": [5, 11]}.

    Process-wide (the bands are part of scope resolution everywhere);
    "any" is fixed at the full day. Hours are [start, end) in 0..24.
    """
    for name, hours in bands.items():
        if name == "any" or name not in TIME_OF_DAY_HOURS:
            raise ScopeError(f"unknown or fixed time-of-day band {name!r}")
        try:
            h0, h1 = (int(hours[0]), int(hours[1]))
        except (TypeError, ValueError, IndexError):
            raise ScopeError(f"band {name!r} needs [start_hour, end_hour]") from None
        if not (0 <= h0 < h1 <= 24):
            raise ScopeError(f"band {name!r}: need 0 <= start < end <= 24")
        TIME_OF_DAY_HOURS[name] = (h0, h1)


def day_start(ts: int) -> int:
    return ts - ts % DAY


def weekday(ts: int) -> int:
    """Monday=0 .. Sunday=6."""
    return datetime.fromtimestamp(ts, tz=timezone.utc).weekday()


def week_start(ts: int) -> int:
    return day_start(ts) - weekday(ts) * DAY


def clock_hhmm(ts: int) -> str:
    dt = datetime.fromtimestamp(ts, tz=timezone.utc)
    return f"{dt.hour:02d}:{dt.minute:02d}"


def day_name(ts: int) -> str:
    return WEEKDAY_NAMES[weekday(ts)]


def iso_date(ts: int) -> str:
    return datetime.fromtimestamp(ts, tz=timezone.utc).strftime("%Y-%m-%d")


@dataclass(frozen=True)
class TimeScope:
    """One date scope plus optional time-of-day restriction.

    Exactly the fields of the active kind are meaningful:
      absolute_range: start, end
      named_day:      day_of_week (0=Monday), last
      relative_span:  span in {today, yesterday, last_week, all}
      after_result / before_result: result_ref (index of an earlier context)
    """

    kind: str = "relative_span"
    span: str = "all"
    start: int | None = None
    end: int | None = None
    day_of_week: int | None = None
    last: bool = False
    result_ref: int | None = None
    time_of_day: str = "any"
    per_day: bool = False

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ScopeError(f"unknown scope kind {self.kind!r}")
        if self.time_of_day not in TIME_OF_DAY_HOURS:
            raise ScopeError(f"unknown time of day {self.time_of_day!r}")
        if self.kind == "absolute_range":
            if self.start is None or self.end is None or self.end <= self.start:
                raise ScopeError("absolute_range needs start < end")
        elif self.kind == "named_day":
            if self.day_of_week is None or not 0 <= self.day_of_week <= 6:
                raise ScopeError("named_day needs day_of_week in 0..6")
        elif self.kind == "relative_span":
            if self.span not in SPANS:
                raise ScopeError(f"unknown span {self.span!r}")
        else:
            if self.result_ref is None or self.result_ref < 0:
                raise ScopeError(f"{self.kind} needs a non-negative result_ref")


def _base_intervals(
    scope: TimeScope,
    now: int,
    data_bounds: tuple[int, int] | None,
    result_time: int | None,
) -> list[tuple[int, int]]:
    if scope.kind == "absolute_range":
        return [(scope.start, scope.end)]
    if scope.kind == "named_day":
        back = (weekday(now) - scope.day_of_week) % 7
        if scope.last and back == 0:
            back = 7
        start = day_start(now) - back * DAY
        return [(start, start + DAY)]
    if scope.kind == "relative_span":
        if scope.span == "today":
            return [(day_start(now), day_start(now) + DAY)]
        if scope.span == "yesterday":
            return [(day_start(now) - DAY, day_start(now))]
        if scope.span == "last_week":
            start = week_start(now) - WEEK
            return [(start, start + WEEK)]
        if data_bounds is None:
            raise ScopeError("span 'all' needs data bounds to resolve")
        lo, hi = data_bounds
        if hi <= lo:
            raise ScopeError("data bounds are empty")
        return [(day_start(lo), day_start(hi - 1) + DAY)]
    if result_time is None:
        raise ScopeError(f"{scope.kind} scope has no resolved reference time")
    if scope.kind == "after_result":
        return [(result_time + 1, day_start(result_time) + DAY)]
    return [(day_start(result_time), result_time)]


def _apply_time_of_day(
    intervals: list[tuple[int, int]], tod: str
) -> list[tuple[int, int]]:
    if tod == "any":
        return intervals
    h0, h1 = TIME_OF_DAY_HOURS[tod]
    out: list[tuple[int, int]] = []
    for a, b in intervals:
        day = day_start(a)
        while day < b:
            lo = max(a, day + h0 * 3600)
            hi = min(b, day + h1 * 3600)
            if lo < hi:
                out.append((lo, hi))
            day += DAY
    return out


def resolve_scope(
    scope: TimeScope,
    now: int,
    data_bounds: tuple[int, int] | None = None,
    result_time: int | None = None,
) -> list[tuple[int, int]]:
    """Sorted, non-overlapping half-open [start, end) unix-second intervals.

    Empty only when an after/before reference leaves no room in its day.
    """
    base = _base_intervals(scope, now, data_bounds, result_time)
    base = [(a, b) for a, b in base if a < b]
    return _apply_time_of_day(base, scope.time_of_day)


def resolve_scope_per_day(
    scope: TimeScope,
    now: int,
    data_bounds: tuple[int, int] | None = None,
    result_time: int | None = None,
) -> list[tuple[int, list[tuple[int, int]]]]:
    """Like resolve_scope, grouped as (day_start, intervals of that day)."""
    intervals = resolve_scope(scope, now, data_bounds, result_time)
    days: dict[int, list[tuple[int, int]]] = {}
    for a, b in intervals:
        day = day_start(a)
        while day < b:
            lo, hi = max(a, day), min(b, day + DAY)
            if lo < hi:
                days.setdefault(day, []).append((lo, hi))
            day += DAY
    return sorted(days.items())


def scope_days(
    scope: TimeScope,
    now: int,
    data_bounds: tuple[int, int] | None = None,
    result_time: int | None = None,
) -> int:
    """Number of distinct calendar days the scope touches."""
    return len(resolve_scope_per_day(scope, now, data_bounds, result_time))


_TOD_PHRASES = {
    "morning": "in the morning",
    "afternoon": "in the afternoon",
    "evening": "in the evening",
    "night": "at night",
}


def scope_phrase(scope: TimeScope, result_time: int | None = None) -> str:
    """Deterministic surface phrase used inside answer templates."""
    if scope.kind == "absolute_range":
        date = f"between {iso_date(scope.start)} and {iso_date(scope.end)}"
    elif scope.kind == "named_day":
        name = WEEKDAY_NAMES[scope.day_of_week]
        date = f"last {name}" if scope.last else f"on {name}"
    elif scope.kind == "relative_span":
        date = {"today": "today", "yesterday": "yesterday",
                "last_week": "last week", "all": ""}[scope.span]
    elif scope.kind == "after_result":
        date = (f"after {clock_hhmm(result_time)}"
                if result_time is not None else "after that")
    else:
        date = (f"before {clock_hhmm(result_time)}"
                if result_time is not None else "before that")
    tod = _TOD_PHRASES.get(scope.time_of_day, "")
    parts = [p for p in (date, tod) if p]
    return " ".join(parts)


# ===== date-phrase grammar shared by the rule decomposer and marker parser =====

_WEEKDAY_INDEX = {name.lower(): i for i, name in enumerate(WEEKDAY_NAMES)}
_DATE_RE = re.compile(
    r"^(?:(?P<per_day>each day)\s+)?(?:"
    r"(?P<today>today)|(?P<yesterday>yesterday)|(?P<last_week>last week)|"
    r"on (?P<on_day>monday|tuesday|wednesday|thursday|friday|saturday|sunday)|"
    r"last (?P<last_day>monday|tuesday|wednesday|thursday|friday|saturday|sunday)|"
    r"(?P<after>after previous)|(?P<before>before previous)|(?P<all>all time)"
    r")$"
)


def parse_date_phrase(text: str, previous_index: int | None = None) -> TimeScope:
    """Parse a date phrase from the question grammar into a TimeScope.

    Accepted forms: today / yesterday / last week / on <weekday> /
    last <weekday> / all time / each day <any of those> / after previous /
    before previous (the latter two need previous_index, the position of the
    context the reference resolves against). Raises ScopeError otherwise.
    """
    norm = " ".join(text.lower().split())
    m = _DATE_RE.match(norm)
    if not m:
        raise ScopeError(f"cannot parse date phrase {text!r}")
    per_day = bool(m.group("per_day"))
    if m.group("today"):
        scope = TimeScope(kind="relative_span", span="today")
    elif m.group("yesterday"):
        scope = TimeScope(kind="relative_span", span="yesterday")
    elif m.group("last_week"):
        scope = TimeScope(kind="relative_span", span="last_week")
    elif m.group("on_day"):
        scope = TimeScope(kind="named_day", day_of_week=_WEEKDAY_INDEX[m.group("on_day")])
    elif m.group("last_day"):
        scope = TimeScope(kind="named_day",
                          day_of_week=_WEEKDAY_INDEX[m.group("last_day")], last=True)
    elif m.group("all"):
        scope = TimeScope(kind="relative_span", span="all")
    else:
        if previous_index is None:
            raise ScopeError(f"{norm!r} needs a previous context to refer to")
        kind = "after_result" if m.group("after") else "before_result"
        scope = TimeScope(kind=kind, result_ref=previous_index)
    if per_day:
        scope = replace(scope, per_day=True)
    return scope


def parse_time_of_day(text: str) -> str:
    """Map a time-of-day phrase ('in the morning', 'night', ...) to a band."""
    norm = " ".join(text.lower().split())
    for band in ("morning", "afternoon", "evening", "night"):
        if band in norm:
            return band
    raise ScopeError(f"cannot parse time of day {text!r}")
