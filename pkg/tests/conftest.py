from __future__ import annotations

import numpy as np
import pytest

from loqa.encoders import EncoderConfig, init_parameters
from loqa.schema import LabelVocabulary, ModalitySchema, SensorWindow, Timeline


@pytest.fixture
def small_schema() -> ModalitySchema:
    return ModalitySchema(names=("accel", "audio"), dims=(3, 2))


@pytest.fixture
def small_vocab() -> LabelVocabulary:
    return LabelVocabulary(("at home", "sitting", "walking"))


@pytest.fixture
def small_params(small_schema, small_vocab):
    config = EncoderConfig(embed_dim=8, hidden=(4, 4), seed=7)
    return init_parameters(config, small_schema, small_vocab)


def make_window(
    ts: int,
    schema: ModalitySchema,
    labels: set[str] | frozenset[str] = frozenset(),
    user: str = "u1",
    rng: np.random.Generator | None = None,
    fill: float | None = None,
) -> SensorWindow:
    feats = {}
    for mod, dim in zip(schema.names, schema.dims):
        if rng is not None:
            feats[mod] = rng.normal(size=dim)
        else:
            feats[mod] = np.full(dim, 0.5 if fill is None else fill)
    return SensorWindow(
        timestamp=ts,
        user_id=user,
        features=feats,
        missing={m: False for m in schema.names},
        labels=frozenset(labels),
    )


def make_timeline(
    schema: ModalitySchema,
    n: int,
    labels_of: dict[int, set[str]] | None = None,
    start: int = 1_600_000_000,
    seed: int = 3,
) -> Timeline:
    rng = np.random.default_rng(seed)
    wins = []
    for i in range(n):
        labs = (labels_of or {}).get(i, set())
        wins.append(make_window(start + 60 * i, schema, labs, rng=rng))
    return Timeline(windows=wins, schema=schema)
