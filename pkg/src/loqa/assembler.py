"""Answer assembly: retrieved sensor contexts -> final answer.

Two modes share one output shape:

* assemble_template: deterministic sentences per question category.
* assemble_llm: a fixed answer prompt sent through a chat gateway, with a
  silent fallback to the template answer (error recorded) when the gateway
  fails after its retry.

Template answers keep a self-consistency invariant: running
extract_short_answer over the full answer recovers the short answer. That
lets the same extractor serve both modes.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from .errors import AssemblyError, GatewayError
from .gateway import ChatMessage
from .metrics import normalize_text
from .queries import SensorContext, format_minutes
from .schema import LabelVocabulary
from .timescope import WEEKDAY_NAMES

ANSWER_PROMPT_TEMPLATE = ("Answer the question based on the context below. "
                          "Context: {context} Question: {question} Response:")


@dataclass(frozen=True)
class GenConfig:
    temperature: float = 0.2
    max_tokens: int = 1024


@dataclass
class AnswerBundle:
    question: str
    category: str
    full: str
    short: str
    contexts: tuple[str, ...]  # the rendered sensor context sentences
    mode: str  # "template" or "llm"
    error: str | None = None


def build_answer_prompt(question: str, contexts) -> str:
    """Contexts may be SensorContext objects or plain sentences."""
    texts = [c.text if isinstance(c, SensorContext) else str(c) for c in contexts]
    return ANSWER_PROMPT_TEMPLATE.format(context=" ".join(texts),
                                         question=question)


def _durations(contexts: list[SensorContext]) -> list[SensorContext]:
    return [c for c in contexts if c.function == "CalculateDuration"]


def assemble_template(
    question: str,
    category: str,
    contexts: list[SensorContext],
    vocab: LabelVocabulary | None = None,
) -> AnswerBundle:
    if not contexts:
        raise AssemblyError("no sensor contexts to assemble an answer from")
    joined = " ".join(c.text for c in contexts)

    if category in ("TimeQuery", "Existence"):
        durs = _durations(contexts)
        if not durs:
            raise AssemblyError(f"{category} answer needs a duration context")
        total = int(sum(c.values.get("minutes", 0) for c in durs))
        if category == "Existence":
            short = "Yes" if total > 0 else "No"
            full = f"{short}. {joined}"
        else:
            short = format_minutes(total)
            full = joined
            if len(durs) > 1 and total > 0:
                full = f"In total {short}. {joined}"

    elif category == "TimeCompare":
        durs = _durations(contexts)
        if len(durs) < 2:
            raise AssemblyError("comparison answer needs two duration contexts")
        a, b = durs[0], durs[1]
        am, bm = a.values.get("minutes", 0), b.values.get("minutes", 0)
        if am == bm:
            lead = f"You spent an equal amount of time {a.context} and {b.context}."
            short = a.context
        else:
            winner, loser = (a, b) if am > bm else (b, a)
            lead = f"You spent more time {winner.context} than {loser.context}."
            short = winner.context
        full = f"{lead} {joined}"

    elif category == "DayQuery":
        days = [c for c in _durations(contexts) if "day" in c.values]
        if not days:
            raise AssemblyError("day comparison needs per-day duration contexts")
        best = days[0]
        for c in days[1:]:
            if c.values.get("minutes", 0) > best.values.get("minutes", 0):
                best = c
        short = best.values["day"]
        lead = (f"You spent the most time {best.context} on "
                f"{best.values['day']} ({best.values['date']}).")
        full = f"{lead} {joined}"

    elif category == "Counting":
        counting = [c for c in contexts
                    if c.function in ("CountingFrequency", "CountingDays")]
        if not counting:
            raise AssemblyError("counting answer needs a counting context")
        c = counting[0]
        if c.function == "CountingFrequency":
            short = f"{int(c.values['count'])} times"
        else:
            short = f"{int(c.values['days'])} days"
        full = joined

    elif category == "ActionQuery":
        acts = [c for c in contexts if c.function == "DetectActivity"] or contexts
        primary = acts[0]
        rest = [c.text for c in contexts if c is not primary]
        full = " ".join([primary.text] + rest)
        ranked = primary.values.get("activities", [])
        short = ranked[0]["label"] if ranked else "no confident activity"

    else:
        raise AssemblyError(f"unknown question category {category!r}")

    return AnswerBundle(question=question, category=category, full=full,
                        short=short, contexts=tuple(c.text for c in contexts),
                        mode="template")


def assemble_llm(
    question: str,
    category: str,
    contexts: list[SensorContext],
    gateway,
    vocab: LabelVocabulary | None = None,
    gen: GenConfig = GenConfig(),
) -> AnswerBundle:
    """Ask the gateway; fall back to the template answer (error recorded)
    when the gateway fails after its retry."""
    prompt = build_answer_prompt(question, contexts)
    try:
        full = gateway.complete([ChatMessage(role="user", content=prompt)],
                                temperature=gen.temperature,
                                max_tokens=gen.max_tokens)
    except GatewayError as e:
        bundle = assemble_template(question, category, contexts, vocab)
        bundle.error = str(e)
        return bundle
    return AnswerBundle(question=question, category=category, full=full,
                        short=extract_short_answer(category, full, vocab),
                        contexts=tuple(c.text for c in contexts), mode="llm")


# ===== short answer extraction =====

_DUR_RE = re.compile(r"\b(?:(\d+)\s+hours?(?:\s+and\s+(\d+)\s+minutes?)?"
                     r"|(\d+)\s+minutes?)\b")
_TIMES_RE = re.compile(r"\b(\d+)\s+times?\b")
_OF_DAYS_RE = re.compile(r"\bon (\d+) of the last \d+ days\b")
_DAYS_RE = re.compile(r"\b(\d+)\s+days?\b")
_YESNO_RE = re.compile(r"\b(yes|no)\b")
_WEEKDAY_RE = re.compile(
    r"\b(" + "|".join(n.lower() for n in WEEKDAY_NAMES) + r")\b")


def _first_vocab_phrase(text: str, vocab: LabelVocabulary | None) -> str | None:
    if vocab is None:
        return None
    from .decomposer import find_contexts
    found = find_contexts(text, vocab)
    return found[0] if found else None


def extract_short_answer(
    category: str, text: str, vocab: LabelVocabulary | None = None
) -> str:
    """Pull the short answer out of a free-form full answer. Falls back to
    the first three normalized tokens when nothing category-shaped is
    found."""
    norm = normalize_text(text)

    if category == "TimeQuery":
        m = _DUR_RE.search(norm)
        if m:
            if m.group(3) is not None:
                total = int(m.group(3))
            else:
                total = int(m.group(1)) * 60 + int(m.group(2) or 0)
            return format_minutes(total)
        if "no recorded time" in norm:
            return "0 minutes"

    elif category == "Existence":
        m = _YESNO_RE.search(norm)
        if m:
            return m.group(1).capitalize()

    elif category == "DayQuery":
        m = _WEEKDAY_RE.search(norm)
        if m:
            return m.group(1).capitalize()

    elif category == "Counting":
        m = _TIMES_RE.search(norm)
        if m:
            return f"{m.group(1)} times"
        m = _OF_DAYS_RE.search(norm) or _DAYS_RE.search(norm)
        if m:
            return f"{m.group(1)} days"

    elif category in ("TimeCompare", "ActionQuery"):
        if category == "ActionQuery" and "no confident activity" in norm:
            return "no confident activity"
        phrase = _first_vocab_phrase(text, vocab)
        if phrase is not None:
            return phrase

    return " ".join(norm.split()[:3])
