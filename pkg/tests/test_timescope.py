from __future__ import annotations

import pytest

from loqa.errors import ScopeError
from loqa.timescope import (
    DAY,
    TimeScope,
    clock_hhmm,
    day_start,
    parse_date_phrase,
    parse_time_of_day,
    resolve_scope,
    resolve_scope_per_day,
    scope_days,
    scope_phrase,
    week_start,
    weekday,
)

# Wednesday 2015-09-30 15:00:00 UTC
NOW = 1443625200
TODAY = 1443571200


class TestCalendarHelpers:
    def test_anchor_is_wednesday(self):
        assert weekday(NOW) == 2
        assert day_start(NOW) == TODAY
        assert week_start(NOW) == TODAY - 2 * DAY

    def test_clock(self):
        assert clock_hhmm(TODAY + 10 * 3600 + 7 * 60) == "10:07"


class TestResolve:
    def test_today_and_yesterday(self):
        assert resolve_scope(TimeScope(span="today"), NOW) == [(TODAY, TODAY + DAY)]
        assert resolve_scope(TimeScope(span="yesterday"), NOW) == [(TODAY - DAY, TODAY)]

    def test_last_week_is_monday_to_sunday_before_this_week(self):
        (a, b), = resolve_scope(TimeScope(span="last_week"), NOW)
        assert a == week_start(NOW) - 7 * DAY
        assert b == week_start(NOW)
        assert weekday(a) == 0
        assert (b - a) // DAY == 7

    def test_named_day_most_recent_not_after_now(self):
        # Tuesday from a Wednesday -> yesterday
        (a, b), = resolve_scope(TimeScope(kind="named_day", day_of_week=1), NOW)
        assert a == TODAY - DAY and b == TODAY
        # Wednesday from a Wednesday -> today
        (a, b), = resolve_scope(TimeScope(kind="named_day", day_of_week=2), NOW)
        assert a == TODAY
        # Saturday from a Wednesday -> 4 days back
        (a, b), = resolve_scope(TimeScope(kind="named_day", day_of_week=5), NOW)
        assert a == TODAY - 4 * DAY

    def test_last_weekday_is_strictly_before_today(self):
        (a, _), = resolve_scope(
            TimeScope(kind="named_day", day_of_week=2, last=True), NOW)
        assert a == TODAY - 7 * DAY

    def test_time_of_day_bands(self):
        scope = TimeScope(span="today", time_of_day="morning")
        assert resolve_scope(scope, NOW) == [(TODAY + 6 * 3600, TODAY + 12 * 3600)]
        scope = TimeScope(span="today", time_of_day="night")
        assert resolve_scope(scope, NOW) == [(TODAY, TODAY + 6 * 3600)]
        scope = TimeScope(span="today", time_of_day="evening")
        assert resolve_scope(scope, NOW) == [(TODAY + 18 * 3600, TODAY + DAY)]

    def test_last_week_morning_is_seven_intervals(self):
        scope = TimeScope(span="last_week", time_of_day="morning")
        intervals = resolve_scope(scope, NOW)
        assert len(intervals) == 7
        assert all(b - a == 6 * 3600 for a, b in intervals)

    def test_after_result_runs_to_end_of_day_exclusive_of_ref(self):
        t_ref = TODAY + 10 * 3600 + 7 * 60  # 10:07
        scope = TimeScope(kind="after_result", result_ref=0)
        (a, b), = resolve_scope(scope, NOW, result_time=t_ref)
        assert a == t_ref + 1
        assert b == TODAY + DAY

    def test_before_result_starts_at_day_start(self):
        t_ref = TODAY + 10 * 3600
        scope = TimeScope(kind="before_result", result_ref=0)
        (a, b), = resolve_scope(scope, NOW, result_time=t_ref)
        assert (a, b) == (TODAY, t_ref)

    def test_before_result_at_midnight_is_empty(self):
        scope = TimeScope(kind="before_result", result_ref=0)
        assert resolve_scope(scope, NOW, result_time=TODAY) == []

    def test_all_span_needs_bounds(self):
        with pytest.raises(ScopeError):
            resolve_scope(TimeScope(span="all"), NOW)
        got = resolve_scope(TimeScope(span="all"), NOW,
                            data_bounds=(TODAY + 100, TODAY + DAY + 100))
        assert got == [(TODAY, TODAY + 2 * DAY)]

    def test_result_scopes_need_reference(self):
        with pytest.raises(ScopeError):
            resolve_scope(TimeScope(kind="after_result", result_ref=0), NOW)

    def test_per_day_grouping(self):
        scope = TimeScope(span="last_week", time_of_day="morning")
        days = resolve_scope_per_day(scope, NOW)
        assert len(days) == 7
        day0, intervals = days[0]
        assert weekday(day0) == 0
        assert intervals == [(day0 + 6 * 3600, day0 + 12 * 3600)]
        assert scope_days(scope, NOW) == 7


class TestScopeValidation:
    def test_kind_field_coupling(self):
        with pytest.raises(ScopeError):
            TimeScope(kind="absolute_range", start=100, end=50)
        with pytest.raises(ScopeError):
            TimeScope(kind="named_day")
        with pytest.raises(ScopeError):
            TimeScope(kind="relative_span", span="fortnight")
        with pytest.raises(ScopeError):
            TimeScope(kind="after_result")


class TestScopePhrase:
    @pytest.mark.parametrize("scope,expected", [
        (TimeScope(span="last_week"), "last week"),
        (TimeScope(span="today"), "today"),
        (TimeScope(span="all"), ""),
        (TimeScope(kind="named_day", day_of_week=1), "on Tuesday"),
        (TimeScope(kind="named_day", day_of_week=5, last=True), "last Saturday"),
        (TimeScope(span="last_week", time_of_day="morning"), "last week in the morning"),
        (TimeScope(span="all", time_of_day="night"), "at night"),
    ])
    def test_phrases(self, scope, expected):
        assert scope_phrase(scope) == expected

    def test_after_phrase_uses_reference_clock(self):
        scope = TimeScope(kind="after_result", result_ref=0)
        assert scope_phrase(scope, result_time=TODAY + 10 * 3600) == "after 10:00"


class TestDateGrammar:
    @pytest.mark.parametrize("text,kind,extra", [
        ("today", "relative_span", {"span": "today"}),
        ("yesterday", "relative_span", {"span": "yesterday"}),
        ("last week", "relative_span", {"span": "last_week"}),
        ("Last Week", "relative_span", {"span": "last_week"}),
        ("on Tuesday", "named_day", {"day_of_week": 1, "last": False}),
        ("last tuesday", "named_day", {"day_of_week": 1, "last": True}),
        ("all time", "relative_span", {"span": "all"}),
        ("each day last week", "relative_span", {"span": "last_week", "per_day": True}),
    ])
    def test_accepted_forms(self, text, kind, extra):
        scope = parse_date_phrase(text)
        assert scope.kind == kind
        for key, val in extra.items():
            assert getattr(scope, key) == val

    def test_result_references(self):
        scope = parse_date_phrase("after previous", previous_index=0)
        assert scope.kind == "after_result" and scope.result_ref == 0
        scope = parse_date_phrase("before previous", previous_index=2)
        assert scope.kind == "before_result" and scope.result_ref == 2

    def test_reference_without_previous_rejected(self):
        with pytest.raises(ScopeError):
            parse_date_phrase("after previous")

    def test_unparseable(self):
        for bad in ("next week", "on caturday", "someday", ""):
            with pytest.raises(ScopeError):
                parse_date_phrase(bad)

    def test_time_of_day_words(self):
        assert parse_time_of_day("in the morning") == "morning"
        assert parse_time_of_day("NIGHT") == "night"
        with pytest.raises(ScopeError):
            parse_time_of_day("at teatime")


class TestConfigureTimeOfDay:
    def test_override_changes_resolution(self, monkeypatch):
        import loqa.timescope as ts

        monkeypatch.setattr(ts, "TIME_OF_DAY_HOURS", dict(ts.TIME_OF_DAY_HOURS))
        ts.configure_time_of_day({"morning": [5, 11]})
        (iv,) = resolve_scope(TimeScope(span="yesterday", time_of_day="morning"), NOW)
        y = TODAY - DAY
        assert iv == (y + 5 * 3600, y + 11 * 3600)

    def test_rejects_bad_bands(self, monkeypatch):
        import loqa.timescope as ts

        monkeypatch.setattr(ts, "TIME_OF_DAY_HOURS", dict(ts.TIME_OF_DAY_HOURS))
        with pytest.raises(ScopeError):
            ts.configure_time_of_day({"any": [0, 12]})
        with pytest.raises(ScopeError):
            ts.configure_time_of_day({"brunch": [10, 12]})
        with pytest.raises(ScopeError):
            ts.configure_time_of_day({"morning": [12, 6]})
        with pytest.raises(ScopeError):
            ts.configure_time_of_day({"morning": [0, 25]})
        with pytest.raises(ScopeError):
            ts.configure_time_of_day({"morning": 7})
