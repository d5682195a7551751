"""Embedding store: encoded windows, persistence, and thresholded matching.

A store is the queryable artifact produced after pretraining: one embedding
record per window, persisted in a little-endian binary with magic SCEM.
Vectors are quantized to float32 at build time so the in-memory store and
the file agree exactly.

Matching counts a window toward an activity when the similarity model's
score is strictly greater than the threshold h; each matched window counts
as one minute of activity.
"""

from __future__ import annotations

import io
import os
import struct
import tempfile
from dataclasses import dataclass

import numpy as np

from .encoders import Parameters, encode_label_batch, encode_sensor_batch
from .errors import FormatError, QueryError, StoreError
from .schema import LabelVocabulary, Timeline

STORE_MAGIC = b"SCEM"
STORE_VERSION = 1


@dataclass
class EmbeddingRecord:
    timestamp: int
    user_id: str
    vector: np.ndarray


@dataclass
class EmbeddingStore:
    """Columnar window embeddings, ordered by (user_id, timestamp)."""

    embed_dim: int
    timestamps: np.ndarray          # (n,) int64
    user_ids: list[str]
    vectors: np.ndarray             # (n, embed_dim) float64 with float32 values

    def __post_init__(self):
        n = len(self.timestamps)
        if len(self.user_ids) != n or self.vectors.shape != (n, self.embed_dim):
            raise StoreError("store columns are not parallel")

    def __len__(self) -> int:
        return len(self.timestamps)

    def record(self, i: int) -> EmbeddingRecord:
        return EmbeddingRecord(int(self.timestamps[i]), self.user_ids[i], self.vectors[i])

    def bounds(self) -> tuple[int, int]:
        if len(self) == 0:
            raise StoreError("empty store has no bounds")
        return int(self.timestamps.min()), int(self.timestamps.max()) + 60


def build_store(params: Parameters, timeline: Timeline) -> EmbeddingStore:
    """Encode every window of the (imputed) timeline, in timeline order."""
    wins = timeline.windows
    vectors = encode_sensor_batch(params, wins)
    vectors = vectors.astype(np.float32).astype(np.float64)
    return EmbeddingStore(
        embed_dim=params.embed_dim,
        timestamps=np.array([w.timestamp for w in wins], dtype=np.int64),
        user_ids=[w.user_id for w in wins],
        vectors=vectors,
    )


def merge_stores(*stores: EmbeddingStore) -> EmbeddingStore:
    """Combine stores into one, re-sorted by (user_id, timestamp).

    Duplicate (user_id, timestamp) pairs are an error: the same minute
    cannot have two embeddings.
    """
    stores = tuple(s for s in stores if len(s) > 0)
    if not stores:
        raise StoreError("nothing to merge")
    dim = stores[0].embed_dim
    if any(s.embed_dim != dim for s in stores):
        raise StoreError("stores have different embedding dimensions")
    timestamps = np.concatenate([s.timestamps for s in stores])
    user_ids = [u for s in stores for u in s.user_ids]
    vectors = np.vstack([s.vectors for s in stores])
    order = sorted(range(len(timestamps)),
                   key=lambda i: (user_ids[i], int(timestamps[i])))
    keys = [(user_ids[i], int(timestamps[i])) for i in order]
    for a, b in zip(keys, keys[1:]):
        if a == b:
            raise StoreError(
                f"duplicate window for user {a[0]!r} at timestamp {a[1]}")
    return EmbeddingStore(
        embed_dim=dim,
        timestamps=timestamps[order],
        user_ids=[user_ids[i] for i in order],
        vectors=vectors[order],
    )


def save_store(store: EmbeddingStore, path: str | os.PathLike) -> None:
    """Write the SCEM binary atomically (temp file + rename)."""
    buf = io.BytesIO()
    buf.write(STORE_MAGIC)
    buf.write(struct.pack("<I", STORE_VERSION))
    buf.write(struct.pack("<I", store.embed_dim))
    buf.write(struct.pack("<Q", len(store)))
    vec32 = np.ascontiguousarray(store.vectors, dtype="<f4")
    for i in range(len(store)):
        buf.write(struct.pack("<q", int(store.timestamps[i])))
        uid = store.user_ids[i].encode("utf-8")
        if len(uid) > 0xFFFF:
            raise FormatError("user_id too long to serialize")
        buf.write(struct.pack("<H", len(uid)))
        buf.write(uid)
        buf.write(vec32[i].tobytes())
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


def load_store(path: str | os.PathLike) -> EmbeddingStore:
    """Read an SCEM file; validates magic, version, and record framing."""
    with open(path, "rb") as f:
        magic = f.read(4)
        if magic != STORE_MAGIC:
            raise StoreError(f"bad store magic {magic!r}")
        header = f.read(16)
        if len(header) != 16:
            raise StoreError("truncated store header")
        version, dim = struct.unpack("<II", header[:8])
        (count,) = struct.unpack("<Q", header[8:])
        if version != STORE_VERSION:
            raise StoreError(f"unsupported store version {version}")
        timestamps = np.empty(count, dtype=np.int64)
        user_ids: list[str] = []
        vectors = np.empty((count, dim), dtype=np.float64)
        for i in range(count):
            head = f.read(10)
            if len(head) != 10:
                raise StoreError(f"truncated record {i}")
            ts, uid_len = struct.unpack("<qH", head)
            uid = f.read(uid_len)
            vec = f.read(4 * dim)
            if len(uid) != uid_len or len(vec) != 4 * dim:
                raise StoreError(f"truncated record {i}")
            timestamps[i] = ts
            user_ids.append(uid.decode("utf-8"))
            vectors[i] = np.frombuffer(vec, dtype="<f4").astype(np.float64)
        if f.read(1):
            raise StoreError("trailing bytes after store records")
    return EmbeddingStore(embed_dim=dim, timestamps=timestamps,
                          user_ids=user_ids, vectors=vectors)


@dataclass
class MatchResult:
    """Windows whose score beat the threshold, ascending by timestamp."""

    timestamps: np.ndarray   # (m,) int64, ascending
    scores: np.ndarray       # (m,) parallel to timestamps

    def __len__(self) -> int:
        return len(self.timestamps)

    @property
    def minutes(self) -> int:
        return len(self.timestamps)


def validate_intervals(intervals: list[tuple[int, int]]) -> None:
    """Intervals are half-open [start, end), sorted, non-overlapping."""
    prev_end = None
    for a, b in intervals:
        if b <= a:
            raise QueryError(f"empty or inverted interval ({a}, {b})")
        if prev_end is not None and a < prev_end:
            raise QueryError("intervals must be sorted and non-overlapping")
        prev_end = b


def interval_mask(timestamps: np.ndarray, intervals: list[tuple[int, int]]) -> np.ndarray:
    mask = np.zeros(len(timestamps), dtype=bool)
    for a, b in intervals:
        mask |= (timestamps >= a) & (timestamps < b)
    return mask


def match_windows(
    store: EmbeddingStore,
    similarity,
    label_vector: np.ndarray,
    intervals: list[tuple[int, int]],
    h: float = 0.5,
    user_id: str | None = None,
) -> MatchResult:
    """Score every stored window in the intervals; keep score > h.

    `similarity` is any object with score_against(matrix, vector) -> scores
    in (0, 1). Raising h can only shrink the matched set.
    """
    if not (0.0 < h < 1.0):
        raise QueryError(f"threshold h must be in (0, 1), got {h}")
    validate_intervals(intervals)
    mask = interval_mask(store.timestamps, intervals)
    if user_id is not None:
        mask &= np.array([u == user_id for u in store.user_ids], dtype=bool)
    idx = np.flatnonzero(mask)
    if idx.size == 0:
        return MatchResult(np.array([], dtype=np.int64), np.array([]))
    scores = similarity.score_against(store.vectors[idx], label_vector)
    keep = scores > h
    ts = store.timestamps[idx][keep]
    sc = scores[keep]
    order = np.argsort(ts, kind="stable")
    return MatchResult(timestamps=ts[order], scores=sc[order])


def predict_labels(
    store: EmbeddingStore,
    similarity,
    label_vectors: np.ndarray,
    vocab: LabelVocabulary,
    timestamp: int,
    k: int,
    user_id: str | None = None,
) -> list[tuple[str, float]]:
    """Top-k phrases for the record at `timestamp`, score-descending.

    Ties break toward the lower vocabulary index. k is clipped to |vocab|.
    """
    if k <= 0:
        raise QueryError("k must be positive")
    mask = store.timestamps == timestamp
    if user_id is not None:
        mask &= np.array([u == user_id for u in store.user_ids], dtype=bool)
    idx = np.flatnonzero(mask)
    if idx.size == 0:
        raise QueryError(f"no stored record at timestamp {timestamp}")
    vec = store.vectors[idx[0]]
    scores = similarity.score_labels(vec, label_vectors)
    order = np.lexsort((np.arange(len(vocab)), -scores))
    k = min(k, len(vocab))
    return [(vocab.phrases[i], float(scores[i])) for i in order[:k]]


def label_embedding_matrix(params: Parameters, vocab: LabelVocabulary) -> np.ndarray:
    """(|A|, E) matrix of label embeddings in vocabulary order."""
    return encode_label_batch(params, vocab.phrases)
