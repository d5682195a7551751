"""Question decomposition: natural language -> query specs.

Two paths produce the same structure:

* decompose_rules: keyword category rules plus a small grammar for context
  phrases (vocabulary + synonym table) and date scopes.
* build_prompt / parse_llm_decomposition: an in-context-learning prompt with
  two worked examples for the question's category, and a parser for the
  marked-up completion. Markers: <<QueryFunction>>, ((context phrase)),
  [[date scope]], {{time of day}}.

The two paths agree on the canonical template questions, so either can stand
in for the other; callers are expected to fall back to the rules when model
output fails to parse, and to the model path when the rules find no context.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, replace
from importlib import resources

from .errors import DecompositionError, MarkerParseError, ScopeError
from .queries import QUERY_FUNCTIONS, QuerySpec
from .schema import LabelVocabulary
from .timescope import (
    TimeScope,
    WEEKDAY_NAMES,
    parse_date_phrase,
    parse_time_of_day,
)

CATEGORIES = ("TimeCompare", "DayQuery", "TimeQuery",
              "Counting", "Existence", "ActionQuery")

COT_SENTENCE = "please generate step-by-step explanations"

_NON_ALNUM = re.compile(r"[^a-z0-9]+")


def normalize_tokens(text: str) -> list[str]:
    return [t for t in _NON_ALNUM.split(text.lower()) if t]


def classify_category(question: str) -> str:
    """Keyword rules, checked in a fixed priority order."""
    norm = " ".join(normalize_tokens(question))
    if re.search(r"\bmore\b.+\bor\b", norm):
        return "TimeCompare"
    if "which day" in norm or "what day" in norm:
        return "DayQuery"
    if "how long" in norm or "how much time" in norm:
        return "TimeQuery"
    if "how often" in norm or "how many times" in norm or "how many days" in norm:
        return "Counting"
    if norm.startswith(("did i ", "was i ", "have i ")):
        return "Existence"
    if "what did i do" in norm or "what was i doing" in norm:
        return "ActionQuery"
    return "TimeQuery"


# ===== synonym table =====


def load_synonyms(path=None) -> dict[str, str]:
    """TSV of question-phrase -> vocabulary-phrase rewrites."""
    if path is None:
        text = resources.files("loqa").joinpath("data/synonyms.tsv").read_text("utf-8")
    else:
        with open(path, encoding="utf-8") as f:
            text = f.read()
    table: dict[str, str] = {}
    for line_no, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 2:
            raise DecompositionError(
                f"synonyms line {line_no} must have two tab-separated fields")
        table[" ".join(normalize_tokens(parts[0]))] = " ".join(normalize_tokens(parts[1]))
    return table


def find_contexts(
    question: str, vocab: LabelVocabulary, synonyms: dict[str, str] | None = None
) -> list[str]:
    """Vocabulary phrases mentioned in the question, in question order.

    Longest token-sequence match wins at each position; the synonym table
    contributes extra surface forms that rewrite to vocabulary phrases.
    """
    synonyms = synonyms or {}
    entries: list[tuple[tuple[str, ...], str]] = []
    for phrase in vocab.phrases:
        entries.append((tuple(normalize_tokens(phrase)), phrase))
    by_norm = {" ".join(normalize_tokens(p)): p for p in vocab.phrases}
    for src, dst in synonyms.items():
        if dst in by_norm:
            entries.append((tuple(normalize_tokens(src)), by_norm[dst]))
    entries.sort(key=lambda e: -len(e[0]))

    tokens = normalize_tokens(question)
    out: list[str] = []
    i = 0
    while i < len(tokens):
        for toks, phrase in entries:
            if toks and tuple(tokens[i : i + len(toks)]) == toks:
                out.append(phrase)
                i += len(toks)
                break
        else:
            i += 1
    return out


# ===== date scope extraction from free text =====

_WEEKDAY_WORDS = "|".join(name.lower() for name in WEEKDAY_NAMES)
_DATE_PATTERNS = (
    ("last week", re.compile(r"\blast week\b")),
    ("yesterday", re.compile(r"\byesterday\b")),
    ("today", re.compile(r"\btoday\b")),
    ("on_day", re.compile(rf"\bon (?P<day>{_WEEKDAY_WORDS})\b")),
    ("last_day", re.compile(rf"\blast (?P<day>{_WEEKDAY_WORDS})\b")),
)
_TOD_RE = re.compile(r"\b(morning|afternoon|evening|night)\b")


def extract_scope(question: str) -> TimeScope:
    """Date + time-of-day scope from a question; span 'all' when absent."""
    norm = " ".join(normalize_tokens(question))
    scope = TimeScope(kind="relative_span", span="all")
    for kind, pattern in _DATE_PATTERNS:
        m = pattern.search(norm)
        if not m:
            continue
        if kind == "on_day":
            scope = parse_date_phrase(f"on {m.group('day')}")
        elif kind == "last_day":
            scope = parse_date_phrase(f"last {m.group('day')}")
        else:
            scope = parse_date_phrase(kind.replace("_", " "))
        break
    tod = _TOD_RE.search(norm)
    if tod:
        scope = TimeScope(
            kind=scope.kind, span=scope.span, start=scope.start, end=scope.end,
            day_of_week=scope.day_of_week, last=scope.last,
            result_ref=scope.result_ref, time_of_day=tod.group(1),
            per_day=scope.per_day)
    return scope


@dataclass
class DecompositionResult:
    category: str
    specs: list[QuerySpec]
    contexts: tuple[str, ...]
    marked: str
    source: str  # "rules" or "llm"


def _with(scope: TimeScope, **changes) -> TimeScope:
    return replace(scope, **changes)


def decompose_rules(
    question: str,
    vocab: LabelVocabulary,
    synonyms: dict[str, str] | None = None,
) -> DecompositionResult:
    """Grammar-based decomposition. Raises DecompositionError when the
    question mentions no usable vocabulary phrase (or too few for its
    category)."""
    if not question.strip():
        raise DecompositionError("empty question")
    category = classify_category(question)
    contexts = find_contexts(question, vocab, synonyms)
    scope = extract_scope(question)
    norm = " ".join(normalize_tokens(question))

    if category == "TimeCompare":
        if len(contexts) < 2:
            raise DecompositionError(
                f"comparison needs two known activities, found {contexts!r} "
                f"in {question!r}")
        specs = [QuerySpec(function="CalculateDuration",
                           contexts=(contexts[0], contexts[1]), scope=scope)]
    elif category == "DayQuery":
        if not contexts:
            raise DecompositionError(f"no known activity phrase in {question!r}")
        specs = [QuerySpec(function="CalculateDuration", contexts=(contexts[0],),
                           scope=_with(scope, per_day=True))]
    elif category == "TimeQuery":
        if not contexts:
            raise DecompositionError(f"no known activity phrase in {question!r}")
        specs = [QuerySpec(function="CalculateDuration",
                           contexts=tuple(contexts), scope=scope)]
    elif category == "Counting":
        if not contexts:
            raise DecompositionError(f"no known activity phrase in {question!r}")
        fn = "CountingDays" if "how many days" in norm else "CountingFrequency"
        specs = [QuerySpec(function=fn, contexts=(contexts[0],), scope=scope)]
    elif category == "Existence":
        if not contexts:
            raise DecompositionError(f"no known activity phrase in {question!r}")
        specs = [QuerySpec(function="CalculateDuration",
                           contexts=(contexts[0],), scope=scope)]
    else:  # ActionQuery
        after = re.search(r"\bafter i\b", norm)
        before = re.search(r"\bbefore i\b", norm)
        if after or before:
            if not contexts:
                raise DecompositionError(
                    f"no known reference activity in {question!r}")
            anchor_fn = "DetectLastTime" if after else "DetectFirstTime"
            chain_kind = "after_result" if after else "before_result"
            specs = [
                QuerySpec(function=anchor_fn, contexts=(contexts[0],), scope=scope),
                QuerySpec(function="DetectActivity", contexts=(),
                          scope=TimeScope(kind=chain_kind, result_ref=0,
                                          time_of_day="any")),
            ]
        else:
            specs = [QuerySpec(function="DetectActivity", contexts=(), scope=scope)]

    return DecompositionResult(
        category=category, specs=specs, contexts=tuple(contexts),
        marked=render_marked(specs), source="rules")


# ===== marker rendering and parsing =====


def scope_date_text(scope: TimeScope) -> str:
    """Inverse of parse_date_phrase for the scopes the grammar can emit."""
    if scope.kind == "named_day":
        word = WEEKDAY_NAMES[scope.day_of_week].lower()
        base = f"last {word}" if scope.last else f"on {word}"
    elif scope.kind == "relative_span":
        base = {"today": "today", "yesterday": "yesterday",
                "last_week": "last week", "all": "all time"}[scope.span]
    elif scope.kind == "after_result":
        base = "after previous"
    elif scope.kind == "before_result":
        base = "before previous"
    else:
        raise ScopeError(f"no textual form for scope kind {scope.kind!r}")
    return f"each day {base}" if scope.per_day else base


def render_marked(specs: list[QuerySpec]) -> str:
    """Canonical marked-up form of a decomposition."""
    parts: list[str] = []
    for spec in specs:
        parts.append(f"<<{spec.function}>>")
        for phrase in spec.contexts:
            parts.append(f"(({phrase}))")
        parts.append(f"[[{scope_date_text(spec.scope)}]]")
        if spec.scope.time_of_day != "any":
            parts.append(f"{{{{{spec.scope.time_of_day}}}}}")
    return " ".join(parts)


_MARKER_RE = re.compile(
    r"<<(?P<fn>[^<>]*)>>|\(\((?P<ctx>[^()]*)\)\)|"
    r"\[\[(?P<date>[^\[\]]*)\]\]|\{\{(?P<tod>[^{}]*)\}\}"
)
_DELIMS = ("<<", ">>", "((", "))", "[[", "]]", "{{", "}}")


def parse_llm_decomposition(
    text: str,
    vocab: LabelVocabulary,
    synonyms: dict[str, str] | None = None,
) -> tuple[list[QuerySpec], tuple[str, ...]]:
    """Parse marked-up model output into query specs.

    Tolerates any prose around the markers (explanations, reasoning); only
    the marker fields matter. Raises MarkerParseError on unbalanced
    markers, unknown functions, unknown context phrases, or unparseable
    date/time fields.
    """
    synonyms = synonyms or {}
    fields: list[tuple[str, str]] = []
    for m in _MARKER_RE.finditer(text):
        kind = next(k for k, v in m.groupdict().items() if v is not None)
        fields.append((kind, m.group(kind).strip()))
    remainder = _MARKER_RE.sub(" ", text)
    if any(d in remainder for d in _DELIMS):
        raise MarkerParseError("unbalanced or nested markers in model output")
    if not fields:
        raise MarkerParseError("no decomposition markers in model output")

    by_norm = {" ".join(normalize_tokens(p)): p for p in vocab.phrases}

    def resolve_context(raw: str) -> str:
        norm = " ".join(normalize_tokens(raw))
        norm = synonyms.get(norm, norm)
        if norm not in by_norm:
            raise MarkerParseError(f"context phrase {raw!r} is not in the vocabulary")
        return by_norm[norm]

    # group fields into one tuple per <<function>>
    groups: list[dict] = []
    for kind, raw in fields:
        if kind == "fn":
            if raw not in QUERY_FUNCTIONS:
                raise MarkerParseError(f"unknown query function {raw!r}")
            groups.append({"fn": raw, "ctx": [], "date": None, "tod": None})
            continue
        if not groups:
            raise MarkerParseError(f"marker field before any function: {raw!r}")
        g = groups[-1]
        if kind == "ctx":
            g["ctx"].append(resolve_context(raw))
        elif kind == "date":
            if g["date"] is not None:
                raise MarkerParseError("duplicate date marker in one function call")
            g["date"] = raw
        else:
            if g["tod"] is not None:
                raise MarkerParseError("duplicate time-of-day marker")
            g["tod"] = raw

    specs: list[QuerySpec] = []
    contexts: list[str] = []
    produced = 0  # SensorContexts earlier specs will emit; anchors references
    for g in groups:
        if g["date"] is None:
            scope = TimeScope(kind="relative_span", span="all")
        else:
            try:
                scope = parse_date_phrase(g["date"], previous_index=produced - 1)
            except ScopeError as e:
                raise MarkerParseError(str(e)) from None
        if g["tod"] is not None:
            try:
                band = parse_time_of_day(g["tod"])
            except ScopeError as e:
                raise MarkerParseError(str(e)) from None
            scope = _with(scope, time_of_day=band)
        try:
            spec = QuerySpec(function=g["fn"], contexts=tuple(g["ctx"]), scope=scope)
        except Exception as e:
            raise MarkerParseError(str(e)) from None
        specs.append(spec)
        contexts.extend(g["ctx"])
        produced += max(len(spec.contexts), 1)
    return specs, tuple(contexts)


# ===== solution template library and prompt builder =====


@dataclass(frozen=True)
class SolutionTemplate:
    category: str
    question: str
    explanation: str
    decomposition: str


def _parse_template_file(category: str, text: str) -> SolutionTemplate:
    fields = {}
    for line in text.strip().splitlines():
        for key in ("Question:", "Explanation:", "Decomposition:"):
            if line.startswith(key):
                fields[key[:-1].lower()] = line[len(key):].strip()
    missing = {"question", "explanation", "decomposition"} - fields.keys()
    if missing:
        raise DecompositionError(
            f"template for {category} is missing fields: {sorted(missing)}")
    return SolutionTemplate(category=category, **fields)


def load_templates(directory=None) -> dict[str, list[SolutionTemplate]]:
    """Two worked examples per category, from templates/<Category>_<n>.txt."""
    out: dict[str, list[SolutionTemplate]] = {}
    for category in CATEGORIES:
        items = []
        for n in (1, 2):
            name = f"{category}_{n}.txt"
            if directory is None:
                text = resources.files("loqa").joinpath(
                    f"data/templates/{name}").read_text("utf-8")
            else:
                with open(f"{directory}/{name}", encoding="utf-8") as f:
                    text = f.read()
            items.append(_parse_template_file(category, text))
        out[category] = items
    return out


PROMPT_HEADER = (
    "You translate questions about a user's recorded daily activities into "
    "sensor query function calls.\n"
    "Available query functions: " + ", ".join(QUERY_FUNCTIONS) + ".\n"
    "Mark each field exactly: the function as <<FunctionName>>, each activity "
    "context as ((context phrase)), the date scope as [[date scope]], and the "
    "time of day as {{time of day}}.\n"
)


def build_prompt(question: str, templates: list[SolutionTemplate]) -> str:
    """Deterministic in-context decomposition prompt for one question."""
    blocks = [PROMPT_HEADER]
    for t in templates:
        blocks.append(
            f"Question: {t.question}\n"
            f"Explanation: {t.explanation}\n"
            f"Decomposition: {t.decomposition}\n")
    blocks.append(COT_SENTENCE + "\n")
    blocks.append(f"Question: {question}\nDecomposition:")
    return "\n".join(blocks)
