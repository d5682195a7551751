"""Core data types for sensor timelines.

A timeline is a per-user sequence of fixed-span windows. Each window covers
WINDOW_SPAN_SECONDS of wall clock but only WINDOW_RECORD_SECONDS of it was
actually recorded by the device duty cycle; counting helpers therefore treat
one matched window as one minute of activity.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import VocabularyError

WINDOW_SPAN_SECONDS = 60
WINDOW_RECORD_SECONDS = 20


@dataclass(frozen=True)
class ModalitySchema:
    """Declared feature layout of one ingest source.

    names/dims are parallel: dims[i] feature columns belong to names[i].
    """

    names: tuple[str, ...]
    dims: tuple[int, ...]

    def __post_init__(self):
        if len(self.names) != len(self.dims):
            raise ValueError("names and dims must be parallel")
        if len(set(self.names)) != len(self.names):
            raise ValueError("duplicate modality name")
        if any(d <= 0 for d in self.dims):
            raise ValueError("modality dims must be positive")

    @property
    def total_dim(self) -> int:
        return int(sum(self.dims))

    def dim_of(self, name: str) -> int:
        return self.dims[self.names.index(name)]


@dataclass
class SensorWindow:
    """One recorded window: features per modality plus ground-truth labels.

    features[m] uses NaN as the not-yet-imputed sentinel for empty cells.
    missing[m] is True when the whole modality was absent from the row.
    """

    timestamp: int
    user_id: str
    features: dict[str, np.ndarray]
    missing: dict[str, bool]
    labels: frozenset[str] = frozenset()

    def feature_vector(self, schema: ModalitySchema) -> np.ndarray:
        return np.concatenate([self.features[m] for m in schema.names])


@dataclass
class Timeline:
    """All windows for one dataset, sorted by (user_id, timestamp)."""

    windows: list[SensorWindow]
    schema: ModalitySchema
    window_span_seconds: int = WINDOW_SPAN_SECONDS
    window_record_seconds: int = WINDOW_RECORD_SECONDS

    def __len__(self) -> int:
        return len(self.windows)

    @property
    def user_ids(self) -> list[str]:
        seen: dict[str, None] = {}
        for w in self.windows:
            seen.setdefault(w.user_id, None)
        return list(seen)

    def for_user(self, user_id: str) -> list[SensorWindow]:
        return [w for w in self.windows if w.user_id == user_id]

    def labeled(self) -> list[SensorWindow]:
        return [w for w in self.windows if w.labels]

    def bounds(self) -> tuple[int, int]:
        """(min timestamp, max timestamp + span) over all windows."""
        if not self.windows:
            raise ValueError("empty timeline has no bounds")
        ts = [w.timestamp for w in self.windows]
        return min(ts), max(ts) + self.window_span_seconds


@dataclass(frozen=True)
class LabelVocabulary:
    """Sorted, de-duplicated activity label phrases."""

    phrases: tuple[str, ...]

    def __post_init__(self):
        if len(self.phrases) < 2:
            raise VocabularyError(
                "vocabulary needs at least 2 phrases, got %d" % len(self.phrases)
            )
        if len(set(self.phrases)) != len(self.phrases):
            raise VocabularyError("vocabulary phrases must be distinct")
        if any(not p for p in self.phrases):
            raise VocabularyError("vocabulary phrases must be non-empty")

    def __len__(self) -> int:
        return len(self.phrases)

    def __iter__(self):
        return iter(self.phrases)

    def __contains__(self, phrase: str) -> bool:
        return phrase in self.phrases

    def index(self, phrase: str) -> int:
        try:
            return self.phrases.index(phrase)
        except ValueError:
            raise VocabularyError(f"phrase not in vocabulary: {phrase!r}") from None


@dataclass
class LabeledWindow:
    """Training sample: a window paired with its positive label set."""

    window: SensorWindow
    labels: tuple[str, ...] = field(default_factory=tuple)
