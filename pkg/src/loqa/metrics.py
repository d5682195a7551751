"""Answer quality metrics: Rouge F1 scores, short-answer checks, and
multiple-choice scoring. All comparisons run on normalized text (lowercase,
punctuation stripped, whitespace collapsed)."""

from __future__ import annotations

import re
from collections import Counter
from typing import Sequence

_PUNCT = re.compile(r"[^a-z0-9]+")


def normalize_text(text: str) -> str:
    return " ".join(t for t in _PUNCT.split(text.lower()) if t)


def _tokens(text: str) -> list[str]:
    return normalize_text(text).split()


def _ngram_counts(tokens: list[str], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def rouge_n(candidate: str, reference: str, n: int = 1) -> float:
    """Clipped n-gram overlap F1."""
    if n < 1:
        raise ValueError("n must be >= 1")
    cand = _ngram_counts(_tokens(candidate), n)
    ref = _ngram_counts(_tokens(reference), n)
    total_cand = sum(cand.values())
    total_ref = sum(ref.values())
    if total_cand == 0 or total_ref == 0:
        return 0.0
    overlap = sum(min(count, ref[gram]) for gram, count in cand.items())
    if overlap == 0:
        return 0.0
    precision = overlap / total_cand
    recall = overlap / total_ref
    return 2.0 * precision * recall / (precision + recall)


def rouge_1(candidate: str, reference: str) -> float:
    return rouge_n(candidate, reference, 1)


def rouge_2(candidate: str, reference: str) -> float:
    return rouge_n(candidate, reference, 2)


def _lcs_length(a: list[str], b: list[str]) -> int:
    if not a or not b:
        return 0
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0] * (len(b) + 1)
        for j, y in enumerate(b, start=1):
            cur[j] = prev[j - 1] + 1 if x == y else max(prev[j], cur[j - 1])
        prev = cur
    return prev[-1]


def rouge_l(candidate: str, reference: str) -> float:
    """Longest-common-subsequence F1 over tokens."""
    cand = _tokens(candidate)
    ref = _tokens(reference)
    if not cand or not ref:
        return 0.0
    lcs = _lcs_length(cand, ref)
    if lcs == 0:
        return 0.0
    precision = lcs / len(cand)
    recall = lcs / len(ref)
    return 2.0 * precision * recall / (precision + recall)


def short_exact(prediction: str, gold: str) -> bool:
    return normalize_text(prediction) == normalize_text(gold)


def short_contains(prediction: str, gold: str) -> bool:
    """Gold tokens appear contiguously inside the prediction."""
    pred = _tokens(prediction)
    goal = _tokens(gold)
    if not goal:
        return False
    return any(pred[i : i + len(goal)] == goal
               for i in range(len(pred) - len(goal) + 1))


def mc_match(prediction: str, choices: dict[str, str], correct: str) -> bool:
    """Accept the bare letter, letter plus choice text, the choice text
    itself, or an answer that contains the correct text and no other
    choice's text."""
    if correct not in choices:
        raise ValueError(f"correct letter {correct!r} not among choices")
    pred = normalize_text(prediction)
    if not pred:
        return False
    letter = normalize_text(correct)
    text = normalize_text(choices[correct])
    if pred == letter or pred == text:
        return True
    if pred == f"{letter} {text}".strip():
        return True
    if text and short_contains(prediction, choices[correct]):
        others = [normalize_text(v) for k, v in choices.items() if k != correct]
        if not any(o and short_contains(prediction, o) for o in others):
            return True
    return False


def mc_accuracy(records: Sequence[tuple[str, dict[str, str], str]]) -> float:
    """Mean mc_match over (prediction, choices, correct letter) triples."""
    if not records:
        return 0.0
    hits = sum(1 for pred, choices, correct in records
               if mc_match(pred, choices, correct))
    return hits / len(records)
