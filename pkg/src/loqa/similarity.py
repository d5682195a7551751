"""Similarity model between sensor and label embeddings.

Two modes map a (sensor, label) embedding pair to a score in (0, 1):

* ``mlp``: concat(z_s, z_w) -> hidden ReLU layer -> sigmoid. Trained with
  binary cross-entropy on positive pairs from the labeled windows and a
  3:1 subsample of negative labels, encoders frozen.
* ``cosine_sigmoid``: sigmoid(c * z_s . z_w). The scale c is fit over the
  grid {1, 2, 5, 10, 20} by pair accuracy; since accuracy at threshold 0.5
  is the same for every positive scale, ties break toward the scale with
  the lowest cross-entropy (the best-calibrated one).

Scores are clamped to the open interval so downstream strict-threshold
comparisons stay well defined. Persisted as a little-endian binary with
magic SCFS.
"""

from __future__ import annotations

import io
import os
import struct
import tempfile
from dataclasses import dataclass, field

import numpy as np

from .encoders import Parameters, encode_label_batch, encode_sensor_batch
from .errors import FormatError, StoreError, VocabularyError
from .schema import LabelVocabulary, Timeline

SIM_MAGIC = b"SCFS"
SIM_VERSION = 1
COSINE_SCALE_GRID = (1.0, 2.0, 5.0, 10.0, 20.0)
_CLAMP_LO = 1e-15
_CLAMP_HI = 1.0 - 1e-16

_MODES = ("mlp", "cosine_sigmoid")


def sigmoid(x: np.ndarray) -> np.ndarray:
    """Numerically stable logistic, clamped into (0, 1)."""
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return np.clip(out, _CLAMP_LO, _CLAMP_HI)


@dataclass(frozen=True)
class SimilarityConfig:
    """Training knobs for the pair scorer."""

    mode: str = "mlp"
    hidden: int = 512
    learning_rate: float = 1e-3
    epochs: int = 20
    batch_size: int = 256
    negatives_per_positive: int = 3
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8

    def __post_init__(self):
        if self.mode not in _MODES:
            raise ValueError(f"unknown similarity mode {self.mode!r}")
        if self.hidden <= 0 or self.batch_size <= 0 or self.epochs < 0:
            raise ValueError("hidden, batch_size must be positive; epochs >= 0")
        if self.negatives_per_positive < 0:
            raise ValueError("negatives_per_positive must be >= 0")


@dataclass
class SimilarityModel:
    """Pair scorer; exactly one of (mlp tensors, scale) is populated."""

    mode: str
    embed_dim: int
    w1: np.ndarray | None = None     # (2E, H)
    b1: np.ndarray | None = None     # (H,)
    w2: np.ndarray | None = None     # (H,)
    b2: float = 0.0
    scale: float = 1.0
    config: SimilarityConfig = field(default_factory=SimilarityConfig)

    def _logits(self, sensor: np.ndarray, label: np.ndarray) -> np.ndarray:
        """Pairwise logits for parallel (n, E) sensor and label matrices."""
        if self.mode == "cosine_sigmoid":
            return self.scale * np.sum(sensor * label, axis=-1)
        x = np.concatenate([sensor, label], axis=-1)
        h = np.maximum(x @ self.w1 + self.b1, 0.0)
        return h @ self.w2 + self.b2

    def score_pairs(self, sensor: np.ndarray, label: np.ndarray) -> np.ndarray:
        return sigmoid(self._logits(np.atleast_2d(sensor), np.atleast_2d(label)))

    def score(self, sensor_vec: np.ndarray, label_vec: np.ndarray) -> float:
        return float(self.score_pairs(sensor_vec[None, :], label_vec[None, :])[0])

    def score_against(self, sensor_matrix: np.ndarray, label_vec: np.ndarray) -> np.ndarray:
        """Score many windows against one label."""
        label = np.broadcast_to(label_vec, sensor_matrix.shape)
        return self.score_pairs(sensor_matrix, label)

    def score_labels(self, sensor_vec: np.ndarray, label_matrix: np.ndarray) -> np.ndarray:
        """Score one window against many labels."""
        sensor = np.broadcast_to(sensor_vec, label_matrix.shape)
        return self.score_pairs(sensor, label_matrix)


def _training_pairs(
    params: Parameters,
    timeline: Timeline,
    vocab: LabelVocabulary,
    config: SimilarityConfig,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(sensor matrix, label matrix, targets) with a 3:1 negative subsample."""
    samples = timeline.labeled()
    if not samples:
        raise ValueError("timeline has no labeled windows")
    for w in samples:
        for p in w.labels:
            if p not in vocab:
                raise VocabularyError(f"window label {p!r} not in vocabulary")
    rng = np.random.default_rng(config.seed)
    z_s = encode_sensor_batch(params, samples)
    z_a = encode_label_batch(params, vocab.phrases)
    index = {p: i for i, p in enumerate(vocab.phrases)}
    s_rows, a_rows, targets = [], [], []
    all_ids = np.arange(len(vocab))
    for i, w in enumerate(samples):
        pos = np.array(sorted(index[p] for p in w.labels))
        for j in pos:
            s_rows.append(i)
            a_rows.append(j)
            targets.append(1.0)
        neg_pool = np.setdiff1d(all_ids, pos)
        n_neg = min(len(neg_pool), config.negatives_per_positive * len(pos))
        if n_neg > 0:
            for j in rng.choice(neg_pool, size=n_neg, replace=False):
                s_rows.append(i)
                a_rows.append(int(j))
                targets.append(0.0)
    return z_s[s_rows], z_a[a_rows], np.array(targets)


def train_similarity(
    params: Parameters,
    timeline: Timeline,
    vocab: LabelVocabulary,
    config: SimilarityConfig | None = None,
) -> SimilarityModel:
    """Fit the pair scorer on frozen encoder embeddings. Seed-deterministic."""
    config = config or SimilarityConfig()
    xs, xa, y = _training_pairs(params, timeline, vocab, config)
    if config.mode == "cosine_sigmoid":
        return _fit_cosine(params.embed_dim, xs, xa, y, config)
    return _fit_mlp(params.embed_dim, xs, xa, y, config)


def _bce(p: np.ndarray, y: np.ndarray) -> float:
    return float(-np.mean(y * np.log(p) + (1.0 - y) * np.log(1.0 - p)))


def _fit_cosine(
    embed_dim: int, xs: np.ndarray, xa: np.ndarray, y: np.ndarray, config: SimilarityConfig
) -> SimilarityModel:
    dots = np.sum(xs * xa, axis=-1)
    best = None
    for c in COSINE_SCALE_GRID:
        p = sigmoid(c * dots)
        acc = float(np.mean((p > 0.5) == (y > 0.5)))
        bce = _bce(p, y)
        key = (-acc, bce)
        if best is None or key < best[0]:
            best = (key, c)
    return SimilarityModel(mode="cosine_sigmoid", embed_dim=embed_dim,
                           scale=best[1], config=config)


def _fit_mlp(
    embed_dim: int, xs: np.ndarray, xa: np.ndarray, y: np.ndarray, config: SimilarityConfig
) -> SimilarityModel:
    rng = np.random.default_rng(config.seed)
    x = np.concatenate([xs, xa], axis=-1)
    n, d = x.shape
    h = config.hidden

    def glorot(fan_in, fan_out, shape):
        s = np.sqrt(6.0 / (fan_in + fan_out))
        return rng.uniform(-s, s, size=shape)

    w1 = glorot(d, h, (d, h))
    b1 = np.zeros(h)
    w2 = glorot(h, 1, (h,))
    b2 = 0.0
    m = {"w1": np.zeros_like(w1), "b1": np.zeros_like(b1),
         "w2": np.zeros_like(w2), "b2": 0.0}
    v = {"w1": np.zeros_like(w1), "b1": np.zeros_like(b1),
         "w2": np.zeros_like(w2), "b2": 0.0}
    step = 0
    lr, bb1, bb2, eps = (config.learning_rate, config.beta1,
                         config.beta2, config.adam_eps)
    for _epoch in range(config.epochs):
        order = rng.permutation(n)
        for start in range(0, n, config.batch_size):
            sel = order[start : start + config.batch_size]
            xb, yb = x[sel], y[sel]
            pre = xb @ w1 + b1
            hid = np.maximum(pre, 0.0)
            p = sigmoid(hid @ w2 + b2)
            d_logit = (p - yb) / len(sel)
            g_w2 = hid.T @ d_logit
            g_b2 = float(d_logit.sum())
            d_hid = np.outer(d_logit, w2) * (pre > 0.0)
            g_w1 = xb.T @ d_hid
            g_b1 = d_hid.sum(axis=0)
            step += 1
            c1 = 1.0 - bb1 ** step
            c2 = 1.0 - bb2 ** step
            for key, g in (("w1", g_w1), ("b1", g_b1), ("w2", g_w2), ("b2", g_b2)):
                m[key] = bb1 * m[key] + (1.0 - bb1) * g
                v[key] = bb2 * v[key] + (1.0 - bb2) * (g * g)
                upd = lr * (m[key] / c1) / (np.sqrt(v[key] / c2) + eps)
                if key == "w1":
                    w1 -= upd
                elif key == "b1":
                    b1 -= upd
                elif key == "w2":
                    w2 -= upd
                else:
                    b2 -= float(upd)
    return SimilarityModel(mode="mlp", embed_dim=embed_dim,
                           w1=w1, b1=b1, w2=w2, b2=b2, config=config)


def save_similarity(model: SimilarityModel, path: str | os.PathLike) -> None:
    """Write the SCFS binary atomically."""
    buf = io.BytesIO()
    buf.write(SIM_MAGIC)
    buf.write(struct.pack("<I", SIM_VERSION))
    buf.write(struct.pack("<B", _MODES.index(model.mode)))
    buf.write(struct.pack("<I", model.embed_dim))
    if model.mode == "cosine_sigmoid":
        buf.write(struct.pack("<f", model.scale))
    else:
        h = model.w1.shape[1]
        buf.write(struct.pack("<I", h))
        buf.write(np.ascontiguousarray(model.w1, dtype="<f4").tobytes())
        buf.write(np.ascontiguousarray(model.b1, dtype="<f4").tobytes())
        buf.write(np.ascontiguousarray(model.w2, dtype="<f4").tobytes())
        buf.write(struct.pack("<f", model.b2))
    path = os.fspath(path)
    fd, tmp = tempfile.mkstemp(dir=os.path.dirname(path) or ".", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(buf.getvalue())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def load_similarity(path: str | os.PathLike) -> SimilarityModel:
    with open(path, "rb") as f:
        magic = f.read(4)
        if magic != SIM_MAGIC:
            raise StoreError(f"bad similarity magic {magic!r}")
        head = f.read(9)
        if len(head) != 9:
            raise StoreError("truncated similarity header")
        version, mode_i, dim = struct.unpack("<IBI", head)
        if version != SIM_VERSION:
            raise StoreError(f"unsupported similarity version {version}")
        if mode_i >= len(_MODES):
            raise FormatError(f"unknown similarity mode byte {mode_i}")
        mode = _MODES[mode_i]
        if mode == "cosine_sigmoid":
            (scale,) = struct.unpack("<f", f.read(4))
            return SimilarityModel(mode=mode, embed_dim=dim, scale=float(scale))
        (h,) = struct.unpack("<I", f.read(4))

        def tensor(shape):
            n = int(np.prod(shape))
            raw = f.read(4 * n)
            if len(raw) != 4 * n:
                raise StoreError("truncated similarity tensors")
            return np.frombuffer(raw, dtype="<f4").astype(np.float64).reshape(shape)

        w1 = tensor((2 * dim, h))
        b1 = tensor((h,))
        w2 = tensor((h,))
        (b2,) = struct.unpack("<f", f.read(4))
        return SimilarityModel(mode=mode, embed_dim=dim, w1=w1, b1=b1,
                               w2=w2, b2=float(b2))


def oracle_store_and_similarity(
    timeline: Timeline, vocab: LabelVocabulary
) -> tuple["EmbeddingStore", SimilarityModel, np.ndarray]:
    """Ground-truth matching rig: ideal embeddings plus a cosine scorer.

    Window vectors are the normalized multi-hot of their true labels and
    label vectors are one-hot, so score > 0.5 holds exactly for true labels
    (dot 1/sqrt(|labels|) > 0) and never otherwise (dot 0 -> score 0.5,
    excluded by the strict threshold). Used by tests and demo tooling.
    """
    from .store import EmbeddingStore

    dim = len(vocab)
    index = {p: i for i, p in enumerate(vocab.phrases)}
    vecs = np.zeros((len(timeline.windows), dim))
    for i, w in enumerate(timeline.windows):
        ids = [index[p] for p in w.labels if p in index]
        if ids:
            vecs[i, ids] = 1.0 / np.sqrt(len(ids))
    store = EmbeddingStore(
        embed_dim=dim,
        timestamps=np.array([w.timestamp for w in timeline.windows], dtype=np.int64),
        user_ids=[w.user_id for w in timeline.windows],
        vectors=vecs.astype(np.float32).astype(np.float64),
    )
    model = SimilarityModel(mode="cosine_sigmoid", embed_dim=dim, scale=10.0)
    label_vectors = np.eye(dim)
    return store, model, label_vectors
