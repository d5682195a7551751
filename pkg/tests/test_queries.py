from __future__ import annotations

import numpy as np
import pytest

from loqa.errors import QueryError, ScopeError
from loqa.queries import (
    ExecutionContext,
    QuerySpec,
    count_episodes,
    execute,
    format_minutes,
)
from loqa.similarity import oracle_store_and_similarity
from loqa.synthetic import synthetic_timeline, synthetic_vocabulary
from loqa.timescope import DAY, TimeScope, resolve_scope, resolve_scope_per_day

import oracles

# Wednesday 2015-09-30 15:00 UTC; the default synthetic span ends that day.
NOW = 1443625200


@pytest.fixture(scope="module")
def rig():
    timeline = synthetic_timeline(days=10, seed=11)
    vocab = synthetic_vocabulary()
    store, model, label_vecs = oracle_store_and_similarity(timeline, vocab)
    ctx = ExecutionContext(store=store, similarity=model, label_vectors=label_vecs,
                           vocab=vocab, now=NOW)
    return timeline, vocab, ctx


class TestFormatMinutes:
    @pytest.mark.parametrize("m,text", [
        (0, "0 minutes"), (1, "1 minute"), (35, "35 minutes"),
        (60, "1 hour"), (61, "1 hour and 1 minute"), (125, "2 hours and 5 minutes"),
    ])
    def test_wording(self, m, text):
        assert format_minutes(m) == text


class TestEpisodes:
    def test_gap_of_five_minutes_joins(self):
        base = 1443571200
        ts = np.array([base + 60 * m for m in (0, 1, 2, 3, 4, 9, 10)])
        # 4 -> 9 is a 5 minute gap: same episode
        assert len(count_episodes(ts, gap_minutes=5)) == 1

    def test_gap_of_six_minutes_splits(self):
        base = 1443571200
        ts = np.array([base + 60 * m for m in (0, 1, 2, 3, 4, 11, 12)])
        assert len(count_episodes(ts, gap_minutes=5)) == 2

    def test_empty_and_single(self):
        assert count_episodes(np.array([], dtype=np.int64), 5) == []
        assert len(count_episodes(np.array([100]), 5)) == 1


class TestDuration:
    def test_matches_brute_force(self, rig):
        timeline, vocab, ctx = rig
        scope = TimeScope(span="last_week")
        intervals = resolve_scope(scope, NOW)
        for phrase in vocab.phrases[:4]:
            spec = QuerySpec(function="CalculateDuration", contexts=(phrase,), scope=scope)
            (out,) = execute([spec], ctx)
            assert out.values["minutes"] == oracles.truth_minutes(
                timeline, phrase, intervals)

    def test_text_contains_duration_and_scope(self, rig):
        timeline, vocab, ctx = rig
        scope = TimeScope(span="last_week", time_of_day="morning")
        phrase = vocab.phrases[0]
        (out,) = execute(
            [QuerySpec(function="CalculateDuration", contexts=(phrase,), scope=scope)], ctx)
        m = out.values["minutes"]
        assert format_minutes(m) in out.text or "no recorded time" in out.text
        assert "last week in the morning" in out.text

    def test_zero_minutes_wording(self, rig):
        timeline, vocab, ctx = rig
        # before the data starts: nothing recorded
        scope = TimeScope(kind="absolute_range", start=100, end=200)
        (out,) = execute(
            [QuerySpec(function="CalculateDuration", contexts=("walking",), scope=scope)], ctx)
        assert out.values["minutes"] == 0
        assert "no recorded time" in out.text


class TestCounting:
    def test_frequency_matches_brute_force(self, rig):
        timeline, vocab, ctx = rig
        for phrase in ("cooking", "eating", "walking"):
            for scope in (TimeScope(span="last_week"), TimeScope(span="yesterday")):
                spec = QuerySpec(function="CountingFrequency", contexts=(phrase,), scope=scope)
                (out,) = execute([spec], ctx)
                want = oracles.truth_episode_count(
                    timeline, phrase, resolve_scope(scope, NOW))
                assert out.values["count"] == want

    def test_days_matches_brute_force(self, rig):
        timeline, vocab, ctx = rig
        scope = TimeScope(span="last_week")
        per_day = resolve_scope_per_day(scope, NOW)
        for phrase in ("sitting", "grooming"):
            spec = QuerySpec(function="CountingDays", contexts=(phrase,), scope=scope)
            (out,) = execute([spec], ctx)
            assert out.values["days"] == oracles.truth_days(timeline, phrase, per_day)
            assert out.values["total_days"] == 7
            assert f"on {out.values['days']} of the last 7 days" in out.text


class TestFirstLast:
    def test_first_and_last_match_brute_force(self, rig):
        timeline, vocab, ctx = rig
        scope = TimeScope(span="yesterday")
        intervals = resolve_scope(scope, NOW)
        for phrase in vocab.phrases[:5]:
            (first,) = execute(
                [QuerySpec(function="DetectFirstTime", contexts=(phrase,), scope=scope)], ctx)
            (last,) = execute(
                [QuerySpec(function="DetectLastTime", contexts=(phrase,), scope=scope)], ctx)
            assert first.values["timestamp"] == oracles.truth_first(
                timeline, phrase, intervals)
            assert last.values["timestamp"] == oracles.truth_last(
                timeline, phrase, intervals)
            if first.values["timestamp"] is not None:
                assert "around" in first.text

    def test_not_detected_wording(self, rig):
        _, _, ctx = rig
        scope = TimeScope(kind="absolute_range", start=100, end=200)
        (out,) = execute(
            [QuerySpec(function="DetectFirstTime", contexts=("walking",), scope=scope)], ctx)
        assert out.values["timestamp"] is None
        assert "Not detected" in out.text


class TestDetectActivity:
    def test_ranking_matches_brute_force(self, rig):
        timeline, vocab, ctx = rig
        scope = TimeScope(span="yesterday", time_of_day="morning")
        (out,) = execute(
            [QuerySpec(function="DetectActivity", contexts=(), scope=scope)], ctx)
        want = oracles.truth_activity_ranking(
            timeline, vocab.phrases, resolve_scope(scope, NOW), top_k=3)
        got = [(a["label"], a["minutes"]) for a in out.values["activities"]]
        assert got == want

    def test_empty_scope_fallback(self, rig):
        _, _, ctx = rig
        scope = TimeScope(kind="absolute_range", start=100, end=200)
        (out,) = execute(
            [QuerySpec(function="DetectActivity", contexts=(), scope=scope)], ctx)
        assert out.values["activities"] == []
        assert "No confident activity detected" in out.text


class TestExecute:
    def test_two_contexts_produce_two_results_in_order(self, rig):
        _, _, ctx = rig
        spec = QuerySpec(function="CalculateDuration",
                         contexts=("sitting", "walking"), scope=TimeScope(span="last_week"))
        out = execute([spec], ctx)
        assert [c.context for c in out] == ["sitting", "walking"]

    def test_per_day_expansion(self, rig):
        _, _, ctx = rig
        spec = QuerySpec(function="CalculateDuration", contexts=("sitting",),
                         scope=TimeScope(span="last_week", per_day=True))
        out = execute([spec], ctx)
        assert len(out) == 7
        assert [c.values["day"] for c in out] == [
            "Monday", "Tuesday", "Wednesday", "Thursday", "Friday", "Saturday", "Sunday"]

    def test_after_result_chain(self, rig):
        timeline, vocab, ctx = rig
        specs = [
            QuerySpec(function="DetectLastTime", contexts=("at home",),
                      scope=TimeScope(kind="named_day", day_of_week=1)),
            QuerySpec(function="DetectActivity", contexts=(),
                      scope=TimeScope(kind="after_result", result_ref=0)),
        ]
        out = execute(specs, ctx)
        assert len(out) == 2
        t_ref = out[0].values["timestamp"]
        assert t_ref is not None
        # second context only counts windows strictly after the reference
        day_end = t_ref - t_ref % DAY + DAY
        want = oracles.truth_activity_ranking(
            timeline, vocab.phrases, [(t_ref + 1, day_end)], top_k=3)
        got = [(a["label"], a["minutes"]) for a in out[1].values["activities"]]
        assert got == want
        assert "after" in out[1].scope_text

    def test_unresolvable_reference_raises(self, rig):
        _, _, ctx = rig
        specs = [
            QuerySpec(function="DetectLastTime", contexts=("walking",),
                      scope=TimeScope(kind="absolute_range", start=100, end=200)),
            QuerySpec(function="DetectActivity", contexts=(),
                      scope=TimeScope(kind="after_result", result_ref=0)),
        ]
        with pytest.raises(ScopeError, match="no timestamp"):
            execute(specs, ctx)

    def test_forward_reference_raises(self, rig):
        _, _, ctx = rig
        specs = [QuerySpec(function="DetectActivity", contexts=(),
                           scope=TimeScope(kind="after_result", result_ref=0))]
        with pytest.raises(ScopeError):
            execute(specs, ctx)

    def test_empty_spec_list_raises(self, rig):
        _, _, ctx = rig
        with pytest.raises(QueryError):
            execute([], ctx)

    def test_unknown_phrase_raises(self, rig):
        _, _, ctx = rig
        spec = QuerySpec(function="CalculateDuration", contexts=("skydiving",),
                         scope=TimeScope(span="today"))
        with pytest.raises(Exception):
            execute([spec], ctx)


class TestSpecValidation:
    def test_unknown_function(self):
        with pytest.raises(QueryError):
            QuerySpec(function="FindAll", contexts=("x",), scope=TimeScope(span="today"))

    def test_contexts_required_except_detect_activity(self):
        with pytest.raises(QueryError):
            QuerySpec(function="CalculateDuration", contexts=(), scope=TimeScope(span="today"))
        QuerySpec(function="DetectActivity", contexts=(), scope=TimeScope(span="today"))


class TestRandomizedEquivalence:
    def test_random_scopes_match_brute_force(self):
        rng = np.random.default_rng(123)
        timeline = synthetic_timeline(days=10, seed=3)
        vocab = synthetic_vocabulary()
        store, model, label_vecs = oracle_store_and_similarity(timeline, vocab)
        ctx = ExecutionContext(store=store, similarity=model,
                               label_vectors=label_vecs, vocab=vocab, now=NOW)
        scopes = [
            TimeScope(span="today"), TimeScope(span="yesterday"),
            TimeScope(span="last_week"), TimeScope(span="all"),
            TimeScope(kind="named_day", day_of_week=3),
            TimeScope(span="last_week", time_of_day="evening"),
            TimeScope(span="yesterday", time_of_day="night"),
        ]
        bounds = store.bounds()
        for _ in range(60):
            phrase = str(rng.choice(vocab.phrases))
            scope = scopes[int(rng.integers(0, len(scopes)))]
            fn = str(rng.choice(["CalculateDuration", "CountingFrequency",
                                 "DetectFirstTime", "DetectLastTime"]))
            (out,) = execute([QuerySpec(function=fn, contexts=(phrase,), scope=scope)], ctx)
            intervals = resolve_scope(scope, NOW, data_bounds=bounds)
            if fn == "CalculateDuration":
                assert out.values["minutes"] == oracles.truth_minutes(
                    timeline, phrase, intervals)
            elif fn == "CountingFrequency":
                assert out.values["count"] == oracles.truth_episode_count(
                    timeline, phrase, intervals)
            elif fn == "DetectFirstTime":
                assert out.values["timestamp"] == oracles.truth_first(
                    timeline, phrase, intervals)
            else:
                assert out.values["timestamp"] == oracles.truth_last(
                    timeline, phrase, intervals)
