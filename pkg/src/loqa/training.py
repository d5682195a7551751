"""Contrastive pretraining of the sensor and label encoders.

The objective treats each window's reported label set as partial context:
for window t with positive set w_t and full vocabulary A,

    loss = sum_t (-1/|w_t|) * sum_{w in w_t} log( exp(z_t . z_w / tau)
                                / sum_{a in D(w)} exp(z_t . z_a / tau) )

where D(w) = A \\ {w} in `exclude_positive` mode (the default; the loss can
go negative once the positive dot dominates) or D(w) = A in
`include_positive` mode (classic softmax cross-entropy, always >= 0).

Gradients differentiate the SUM over samples (LossReport.total); the
per-sample mean is reported as LossReport.value for readable curves. All
softmax terms are computed with max-subtracted log-sum-exp.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .encoders import (
    Parameters,
    backward_labels,
    backward_sensor,
    forward_labels,
    forward_sensor,
    modality_inputs,
    zero_gradients,
)
from .errors import VocabularyError
from .schema import LabelVocabulary, SensorWindow, Timeline

DENOMINATOR_MODES = ("exclude_positive", "include_positive")


@dataclass(frozen=True)
class TrainConfig:
    """Optimization hyperparameters."""

    tau: float = 0.1
    learning_rate: float = 1e-3
    epochs: int = 100
    batch_size: int = 64
    denominator: str = "exclude_positive"
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        if self.tau <= 0:
            raise ValueError("tau must be positive")
        if self.denominator not in DENOMINATOR_MODES:
            raise ValueError(f"unknown denominator mode {self.denominator!r}")
        if self.epochs < 0 or self.batch_size <= 0:
            raise ValueError("epochs must be >= 0 and batch_size positive")


@dataclass
class Batch:
    """Parallel windows and their positive label tuples."""

    windows: list[SensorWindow]
    labels: list[tuple[str, ...]]

    def __post_init__(self):
        if len(self.windows) != len(self.labels):
            raise ValueError("windows and labels must be parallel")
        if not self.windows:
            raise ValueError("batch must not be empty")
        for i, labs in enumerate(self.labels):
            if not labs:
                raise ValueError(f"sample {i} has an empty positive set")

    @staticmethod
    def from_windows(windows: list[SensorWindow]) -> "Batch":
        return Batch(
            windows=list(windows), labels=[tuple(sorted(w.labels)) for w in windows]
        )


@dataclass
class LossReport:
    """value = mean per-sample loss; total = the differentiated sum."""

    value: float
    total: float
    per_sample: list[float]
    grad_norm: float


def _positive_ids(batch: Batch, vocab: LabelVocabulary) -> list[np.ndarray]:
    index = {p: i for i, p in enumerate(vocab.phrases)}
    out = []
    for labs in batch.labels:
        try:
            out.append(np.array([index[p] for p in labs], dtype=np.int64))
        except KeyError as e:
            raise VocabularyError(f"batch label {e.args[0]!r} not in vocabulary") from None
    return out


def loss_and_gradient(
    params: Parameters,
    batch: Batch,
    config: TrainConfig,
    with_grad: bool = True,
) -> tuple[LossReport, dict[str, np.ndarray] | None]:
    """One fused forward/backward pass over a batch.

    Returns the loss report and (unless with_grad=False) the gradient of
    LossReport.total with respect to every tensor in params.tensor_items().
    """
    vocab = params.vocab
    pos_ids = _positive_ids(batch, vocab)
    n = len(batch.windows)
    n_vocab = len(vocab)

    sensor_cache = forward_sensor(params, modality_inputs(params, batch.windows))
    label_cache = forward_labels(params, vocab.phrases)
    z_s = sensor_cache.out                     # (n, E)
    z_a = label_cache.out                      # (|A|, E)
    scores = z_s @ z_a.T                       # (n, |A|)

    # One row per (sample, positive) pair.
    pair_t = np.concatenate([np.full(len(ids), t) for t, ids in enumerate(pos_ids)])
    pair_w = np.concatenate(pos_ids)
    weights = np.concatenate(
        [np.full(len(ids), 1.0 / len(ids)) for ids in pos_ids]
    )
    logits = scores[pair_t] / config.tau       # (P, |A|)
    if config.denominator == "exclude_positive":
        denom_logits = logits.copy()
        denom_logits[np.arange(len(pair_w)), pair_w] = -np.inf
    else:
        denom_logits = logits
    row_max = denom_logits.max(axis=1, keepdims=True)
    shifted = np.exp(denom_logits - row_max)
    sum_exp = shifted.sum(axis=1)
    lse = row_max[:, 0] + np.log(sum_exp)
    pair_terms = lse - logits[np.arange(len(pair_w)), pair_w]

    per_sample = np.zeros(n)
    np.add.at(per_sample, pair_t, weights * pair_terms)
    total = float(per_sample.sum())
    value = total / n

    if not with_grad:
        return LossReport(value=value, total=total,
                          per_sample=per_sample.tolist(), grad_norm=0.0), None

    # d(total)/d(scores): softmax of the denominator minus the positive one-hot,
    # scaled by 1/(|w_t| * tau) per pair.
    probs = shifted / sum_exp[:, None]         # rows sum to 1; positive col is 0
    d_pairs = probs                            # in exclude mode p_w is already 0
    d_pairs[np.arange(len(pair_w)), pair_w] -= 1.0
    d_pairs *= (weights / config.tau)[:, None]
    d_scores = np.zeros((n, n_vocab))
    np.add.at(d_scores, pair_t, d_pairs)

    grads = zero_gradients(params)
    d_zs = d_scores @ z_a
    d_za = d_scores.T @ z_s
    backward_sensor(params, sensor_cache, d_zs, grads)
    backward_labels(params, label_cache, d_za, grads)
    grad_norm = float(np.sqrt(sum(float((g * g).sum()) for g in grads.values())))
    return LossReport(value=value, total=total,
                      per_sample=per_sample.tolist(), grad_norm=grad_norm), grads


def partial_context_loss(params: Parameters, batch: Batch, config: TrainConfig) -> LossReport:
    report, _ = loss_and_gradient(params, batch, config, with_grad=True)
    return report


def loss_gradient(
    params: Parameters, batch: Batch, config: TrainConfig
) -> dict[str, np.ndarray]:
    _, grads = loss_and_gradient(params, batch, config, with_grad=True)
    assert grads is not None
    return grads


def finite_difference_gradient(
    params: Parameters, batch: Batch, config: TrainConfig, epsilon: float = 1e-5
) -> dict[str, np.ndarray]:
    """Central-difference gradient of LossReport.total, tensor by tensor.

    Perturbs parameters in place and restores them exactly; this is the
    oracle the analytic backward pass is checked against.
    """
    work = params.clone()
    grads = zero_gradients(work)

    def total() -> float:
        report, _ = loss_and_gradient(work, batch, config, with_grad=False)
        return report.total

    for name, tensor in work.tensor_items():
        flat = tensor.reshape(-1)
        out = grads[name].reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + epsilon
            plus = total()
            flat[i] = orig - epsilon
            minus = total()
            flat[i] = orig
            out[i] = (plus - minus) / (2.0 * epsilon)
    return grads


def gradient_relative_error(
    analytic: dict[str, np.ndarray], reference: dict[str, np.ndarray]
) -> float:
    """max over tensors of ||a - r||_inf / max(||a||_inf, ||r||_inf, 1e-8)."""
    worst = 0.0
    for name, a in analytic.items():
        r = reference[name]
        denom = max(float(np.abs(a).max(initial=0.0)),
                    float(np.abs(r).max(initial=0.0)), 1e-8)
        err = float(np.abs(a - r).max(initial=0.0)) / denom
        worst = max(worst, err)
    return worst


@dataclass(frozen=True)
class GradcheckCase:
    name: str
    encoder: "EncoderConfig"
    train: TrainConfig
    n_windows: int
    vocab_size: int
    max_labels: int


def gradcheck_cases(count: int = 20) -> list[GradcheckCase]:
    """Deterministic sweep over seeds, denominator modes, normalization,
    feature modes, temperatures, embed dims {4, 8}, vocab sizes {3, 10},
    and batch sizes up to 16."""
    from .encoders import EncoderConfig

    cases = []
    i = 0
    for seed in range((count + 3) // 4):
        for denominator in DENOMINATOR_MODES:
            for normalize in (True, False):
                if i >= count:
                    break
                feature_mode = "statistical" if i % 3 == 0 else "raw_window"
                tau = (0.07, 0.1, 0.25, 0.5)[i % 4]
                embed_dim = (4, 8)[i % 2]
                vocab_size = (3, 10)[(i // 2) % 2]
                n_windows = (4, 9, 16)[i % 3]
                enc = EncoderConfig(embed_dim=embed_dim, hidden=(5, 4),
                                    seed=seed, normalize=normalize,
                                    feature_mode=feature_mode)
                tr = TrainConfig(tau=tau, denominator=denominator, seed=seed)
                name = (f"seed={seed} denom={denominator} norm={normalize} "
                        f"features={feature_mode} tau={tau} dim={embed_dim} "
                        f"labels={vocab_size} batch={n_windows}")
                cases.append(GradcheckCase(name=name, encoder=enc, train=tr,
                                           n_windows=n_windows,
                                           vocab_size=vocab_size,
                                           max_labels=2))
                i += 1
    return cases


def run_gradcheck(
    count: int = 20, epsilon: float = 1e-5
) -> list[tuple[str, float]]:
    """Analytic vs central-difference gradients for every sweep case.

    Returns (case name, relative error) pairs; the error is the worst
    tensor-wise infinity-norm ratio.
    """
    from .encoders import init_parameters
    from .schema import ModalitySchema, SensorWindow

    schema = ModalitySchema(names=("accel", "audio"), dims=(3, 2))
    phrase_pool = ("at home", "sitting", "walking", "watching tv", "eating",
                   "cooking", "sleeping", "exercise", "grooming", "at school")

    results = []
    for case in gradcheck_cases(count):
        phrases = phrase_pool[:case.vocab_size]
        vocab = LabelVocabulary(phrases=phrases)
        params = init_parameters(case.encoder, schema, vocab)
        rng = np.random.default_rng(1000 + case.train.seed)
        windows = []
        for j in range(case.n_windows):
            n_labels = 1 + int(rng.integers(case.max_labels))
            labels = frozenset(
                rng.choice(len(phrases), size=n_labels, replace=False)
                .tolist())
            windows.append(SensorWindow(
                timestamp=60 * j, user_id="u1",
                features={m: rng.normal(size=d)
                          for m, d in zip(schema.names, schema.dims)},
                missing={m: False for m in schema.names},
                labels=frozenset(phrases[k] for k in labels)))
        batch = Batch.from_windows(windows)
        _, analytic = loss_and_gradient(params, batch, case.train)
        reference = finite_difference_gradient(params, batch, case.train,
                                               epsilon=epsilon)
        results.append((case.name, gradient_relative_error(analytic, reference)))
    return results


@dataclass
class AdamState:
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    step: int = 0


def adam_step(
    params: Parameters, grads: dict[str, np.ndarray], state: AdamState, config: TrainConfig
) -> None:
    """In-place Adam update with bias correction."""
    if not state.m:
        for name, t in params.tensor_items():
            state.m[name] = np.zeros_like(t)
            state.v[name] = np.zeros_like(t)
    state.step += 1
    b1, b2 = config.beta1, config.beta2
    bc1 = 1.0 - b1 ** state.step
    bc2 = 1.0 - b2 ** state.step
    for name, tensor in params.tensor_items():
        g = grads[name]
        m = state.m[name]
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        tensor -= config.learning_rate * (m / bc1) / (np.sqrt(v / bc2) + config.adam_eps)


def train(
    params: Parameters,
    timeline: Timeline,
    vocab: LabelVocabulary,
    config: TrainConfig,
) -> tuple[Parameters, list[float]]:
    """Adam over shuffled mini-batches of the labeled windows.

    Returns (trained copy of params, per-epoch mean loss history). The input
    params object is left untouched. Deterministic for a fixed seed.
    """
    if vocab.phrases != params.vocab.phrases:
        raise VocabularyError("vocabulary does not match the one params were built for")
    samples = timeline.labeled()
    if not samples:
        raise ValueError("timeline has no labeled windows to train on")
    work = params.clone()
    rng = np.random.default_rng(config.seed)
    state = AdamState()
    history: list[float] = []
    n = len(samples)
    for _epoch in range(config.epochs):
        order = rng.permutation(n)
        epoch_total = 0.0
        for start in range(0, n, config.batch_size):
            chunk = [samples[i] for i in order[start : start + config.batch_size]]
            batch = Batch.from_windows(chunk)
            report, grads = loss_and_gradient(work, batch, config)
            assert grads is not None
            epoch_total += report.total
            adam_step(work, grads, state, config)
        history.append(epoch_total / n)
    return work, history


def retrieval_accuracy(
    params: Parameters, timeline: Timeline, vocab: LabelVocabulary
) -> float:
    """Fraction of labeled windows whose top-scoring phrase is a true label.

    Ties break toward the lowest vocabulary index (np.argmax convention).
    """
    samples = timeline.labeled()
    if not samples:
        raise ValueError("timeline has no labeled windows to score")
    sensor = forward_sensor(params, modality_inputs(params, samples)).out
    labels = forward_labels(params, vocab.phrases).out
    best = np.argmax(sensor @ labels.T, axis=1)
    hits = sum(1 for w, b in zip(samples, best) if vocab.phrases[b] in w.labels)
    return hits / len(samples)
