from __future__ import annotations

import numpy as np
import pytest

from loqa.encoders import EncoderConfig, init_parameters
from loqa.schema import LabelVocabulary, ModalitySchema, SensorWindow, Timeline
from loqa.training import TrainConfig, retrieval_accuracy, train


def clustered_timeline(
    schema: ModalitySchema,
    vocab: LabelVocabulary,
    n: int,
    seed: int = 0,
    sigma: float = 0.05,
) -> Timeline:
    """Windows drawn from one Gaussian cluster per label: linearly separable."""
    rng = np.random.default_rng(seed)
    centers = {
        p: {m: rng.normal(scale=2.0, size=d) for m, d in zip(schema.names, schema.dims)}
        for p in vocab.phrases
    }
    wins = []
    for i in range(n):
        label = vocab.phrases[i % len(vocab)]
        feats = {
            m: centers[label][m] + rng.normal(scale=sigma, size=schema.dim_of(m))
            for m in schema.names
        }
        wins.append(SensorWindow(
            timestamp=60 * i, user_id="u1", features=feats,
            missing={m: False for m in schema.names}, labels=frozenset({label})))
    return Timeline(windows=wins, schema=schema)


@pytest.fixture
def separable(small_schema):
    vocab = LabelVocabulary(("cooking", "sitting", "walking"))
    return clustered_timeline(small_schema, vocab, 120, seed=5), vocab


class TestTrain:
    def test_zero_learning_rate_is_a_no_op(self, small_schema, separable):
        timeline, vocab = separable
        params = init_parameters(EncoderConfig(embed_dim=8, hidden=4, seed=1),
                                 small_schema, vocab)
        cfg = TrainConfig(learning_rate=0.0, epochs=3, batch_size=32)
        trained, history = train(params, timeline, vocab, cfg)
        for (_, a), (_, b) in zip(params.tensor_items(), trained.tensor_items()):
            np.testing.assert_array_equal(a, b)
        assert history[0] == pytest.approx(history[-1], abs=1e-12)

    def test_loss_decreases_on_separable_data(self, small_schema, separable):
        timeline, vocab = separable
        params = init_parameters(EncoderConfig(embed_dim=8, hidden=8, seed=1),
                                 small_schema, vocab)
        cfg = TrainConfig(learning_rate=1e-3, epochs=30, batch_size=32, seed=4)
        trained, history = train(params, timeline, vocab, cfg)
        assert history[-1] < 0.5 * history[0]
        assert retrieval_accuracy(trained, timeline, vocab) >= 0.9

    def test_deterministic_given_seed(self, small_schema, separable):
        timeline, vocab = separable
        cfg = TrainConfig(learning_rate=1e-3, epochs=2, batch_size=16, seed=9)
        runs = []
        for _ in range(2):
            params = init_parameters(EncoderConfig(embed_dim=8, hidden=4, seed=1),
                                     small_schema, vocab)
            runs.append(train(params, timeline, vocab, cfg))
        (p1, h1), (p2, h2) = runs
        assert h1 == h2
        for (_, a), (_, b) in zip(p1.tensor_items(), p2.tensor_items()):
            np.testing.assert_array_equal(a, b)

    def test_input_params_untouched(self, small_schema, separable):
        timeline, vocab = separable
        params = init_parameters(EncoderConfig(embed_dim=8, hidden=4, seed=1),
                                 small_schema, vocab)
        before = {n: t.copy() for n, t in params.tensor_items()}
        train(params, timeline, vocab,
              TrainConfig(learning_rate=1e-3, epochs=1, batch_size=16))
        for name, t in params.tensor_items():
            np.testing.assert_array_equal(t, before[name])

    def test_history_length_matches_epochs(self, small_schema, separable):
        timeline, vocab = separable
        params = init_parameters(EncoderConfig(embed_dim=8, hidden=4, seed=1),
                                 small_schema, vocab)
        _, history = train(params, timeline, vocab,
                           TrainConfig(epochs=5, batch_size=16))
        assert len(history) == 5

    def test_unlabeled_timeline_rejected(self, small_schema, small_vocab):
        params = init_parameters(EncoderConfig(embed_dim=8, hidden=4),
                                 small_schema, small_vocab)
        empty = Timeline(windows=[], schema=small_schema)
        with pytest.raises(ValueError):
            train(params, empty, small_vocab, TrainConfig(epochs=1))
