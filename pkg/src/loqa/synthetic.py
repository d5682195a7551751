"""Deterministic synthetic timelines for tests, demos, and benchmarks.

Every minute of each day gets exactly one activity label, drawn as a
schedule of contiguous segments (20-90 minutes each). Feature vectors are
Gaussian clusters: one center per label, small isotropic noise, so the
dataset is linearly separable and encoders can be trained to near-perfect
retrieval. All draws come from one seeded generator.
"""

from __future__ import annotations

import numpy as np

from .schema import LabelVocabulary, ModalitySchema, SensorWindow, Timeline

DEFAULT_LABELS = (
    "at home",
    "at school",
    "cooking",
    "doing computer work",
    "eating",
    "exercise",
    "grooming",
    "in a meeting",
    "sitting",
    "sleeping",
    "walking",
    "watching tv",
)

DEFAULT_SCHEMA = ModalitySchema(names=("accel", "audio"), dims=(3, 2))

# Monday 2015-09-21 00:00:00 UTC; ten days from here span "last week"
# (Mon 21st - Sun 27th) plus Mon-Wed of the current week.
DEFAULT_START = 1_442_793_600


def day_schedule(
    rng: np.random.Generator, labels: tuple[str, ...], minutes: int = 1440
) -> list[str]:
    """Label per minute: contiguous segments, no two adjacent segments equal."""
    out: list[str] = []
    prev = None
    while len(out) < minutes:
        label = str(rng.choice(labels))
        if label == prev:
            continue
        dur = int(rng.integers(20, 91))
        out.extend([label] * min(dur, minutes - len(out)))
        prev = label
    return out


def synthetic_timeline(
    days: int = 10,
    seed: int = 0,
    labels: tuple[str, ...] = DEFAULT_LABELS,
    schema: ModalitySchema = DEFAULT_SCHEMA,
    start: int = DEFAULT_START,
    user_id: str = "u1",
    noise: float = 0.05,
    minutes_per_day: int = 1440,
) -> Timeline:
    rng = np.random.default_rng(seed)
    centers = {
        label: {m: rng.normal(scale=2.0, size=d)
                for m, d in zip(schema.names, schema.dims)}
        for label in labels
    }
    windows: list[SensorWindow] = []
    for d in range(days):
        base = start + d * 86400
        for minute, label in enumerate(day_schedule(rng, labels, minutes_per_day)):
            feats = {
                m: centers[label][m] + rng.normal(scale=noise, size=schema.dim_of(m))
                for m in schema.names
            }
            windows.append(SensorWindow(
                timestamp=base + 60 * minute,
                user_id=user_id,
                features=feats,
                missing={m: False for m in schema.names},
                labels=frozenset({label}),
            ))
    return Timeline(windows=windows, schema=schema)


def synthetic_vocabulary(labels: tuple[str, ...] = DEFAULT_LABELS) -> LabelVocabulary:
    return LabelVocabulary(tuple(sorted(labels)))
