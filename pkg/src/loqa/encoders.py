"""Sensor and label encoders plus parameter (de)serialization.

Sensor path: each modality runs through its own two-layer feedforward net
(linear -> ReLU -> linear), the per-modality outputs are concatenated, a
single fusion linear maps to the shared embedding space, and the result is
optionally L2-normalized.

Label path: a phrase is lowercased, split on non-alphanumeric runs, each
token looked up in a learned embedding table, token vectors averaged, and
the mean optionally L2-normalized.

All math runs in float64; parameter files store float32 tensors.
"""

from __future__ import annotations

import io
import os
import re
import struct
import tempfile
from dataclasses import dataclass, field

import numpy as np

from .errors import EncodingError, FormatError, VocabularyError
from .schema import LabelVocabulary, ModalitySchema, SensorWindow

PARAMS_MAGIC = b"SCPM"
PARAMS_VERSION = 1
_NORM_EPS = 1e-12

_TOKEN_SPLIT = re.compile(r"[^a-z0-9]+")

_ACTIVATIONS = ("relu",)
_FEATURE_MODES = ("raw_window", "statistical")


@dataclass(frozen=True)
class EncoderConfig:
    """Architecture and initialization knobs for both encoders."""

    embed_dim: int = 512
    hidden: tuple[int, ...] | int = 64
    activation: str = "relu"
    seed: int = 0
    normalize: bool = True
    feature_mode: str = "raw_window"

    def __post_init__(self):
        if self.embed_dim <= 0:
            raise ValueError("embed_dim must be positive")
        if self.activation not in _ACTIVATIONS:
            raise ValueError(f"unsupported activation {self.activation!r}")
        if self.feature_mode not in _FEATURE_MODES:
            raise ValueError(f"unsupported feature_mode {self.feature_mode!r}")

    def hidden_widths(self, schema: ModalitySchema) -> tuple[int, ...]:
        if isinstance(self.hidden, int):
            return tuple(self.hidden for _ in schema.names)
        if len(self.hidden) != len(schema.names):
            raise ValueError(
                "hidden widths (%d) must match modality count (%d)"
                % (len(self.hidden), len(schema.names))
            )
        return tuple(self.hidden)

    def input_dim(self, schema: ModalitySchema, modality: str) -> int:
        if self.feature_mode == "statistical":
            return 4
        return schema.dim_of(modality)


def tokenize_label(phrase: str) -> tuple[str, ...]:
    """Lowercase and split on non-alphanumeric runs; drops empty tokens."""
    return tuple(t for t in _TOKEN_SPLIT.split(phrase.lower()) if t)


def statistical_features(window: SensorWindow, schema: ModalitySchema) -> np.ndarray:
    """Per-modality (mean, population std, min, max), concatenated."""
    parts = []
    for mod in schema.names:
        v = np.asarray(window.features[mod], dtype=np.float64)
        parts.append(np.array([v.mean(), v.std(), v.min(), v.max()]))
    return np.concatenate(parts)


@dataclass
class Parameters:
    """All learnable tensors plus the schema/config/vocab they were built for.

    Tensor shapes (row-vector convention, H = X @ W + b):
      per modality m: w1 (in_m, h_m), b1 (h_m,), w2 (h_m, h_m), b2 (h_m,)
      fusion: fusion_w (sum h_m, embed_dim), fusion_b (embed_dim,)
      token_table: (n_tokens, embed_dim)
    """

    config: EncoderConfig
    schema: ModalitySchema
    vocab: LabelVocabulary
    mod_w1: dict[str, np.ndarray]
    mod_b1: dict[str, np.ndarray]
    mod_w2: dict[str, np.ndarray]
    mod_b2: dict[str, np.ndarray]
    fusion_w: np.ndarray
    fusion_b: np.ndarray
    tokens: tuple[str, ...]
    token_table: np.ndarray
    token_index: dict[str, int] = field(default_factory=dict)

    def __post_init__(self):
        if not self.token_index:
            self.token_index = {t: i for i, t in enumerate(self.tokens)}

    @property
    def embed_dim(self) -> int:
        return self.config.embed_dim

    def tensor_items(self) -> list[tuple[str, np.ndarray]]:
        """Tensors in declaration order; the order fixes the file layout."""
        items: list[tuple[str, np.ndarray]] = []
        for mod in self.schema.names:
            items.append((f"{mod}.w1", self.mod_w1[mod]))
            items.append((f"{mod}.b1", self.mod_b1[mod]))
            items.append((f"{mod}.w2", self.mod_w2[mod]))
            items.append((f"{mod}.b2", self.mod_b2[mod]))
        items.append(("fusion.w", self.fusion_w))
        items.append(("fusion.b", self.fusion_b))
        items.append(("token_table", self.token_table))
        return items

    def clone(self) -> "Parameters":
        return Parameters(
            config=self.config,
            schema=self.schema,
            vocab=self.vocab,
            mod_w1={m: a.copy() for m, a in self.mod_w1.items()},
            mod_b1={m: a.copy() for m, a in self.mod_b1.items()},
            mod_w2={m: a.copy() for m, a in self.mod_w2.items()},
            mod_b2={m: a.copy() for m, a in self.mod_b2.items()},
            fusion_w=self.fusion_w.copy(),
            fusion_b=self.fusion_b.copy(),
            tokens=self.tokens,
            token_table=self.token_table.copy(),
            token_index=dict(self.token_index),
        )


def vocabulary_tokens(vocab: LabelVocabulary) -> tuple[str, ...]:
    """Distinct tokens over all phrases, in first-appearance order."""
    seen: dict[str, None] = {}
    for phrase in vocab:
        for tok in tokenize_label(phrase):
            seen.setdefault(tok, None)
    return tuple(seen)


def init_parameters(
    config: EncoderConfig, schema: ModalitySchema, vocab: LabelVocabulary
) -> Parameters:
    """Seed-deterministic Glorot-uniform init.

    Weights ~ uniform(-s, s) with s = sqrt(6 / (fan_in + fan_out)); biases
    start at zero. Draw order: per modality w1 then w2 (schema order), the
    fusion weight, then the token table. Same seed, bit-identical tensors.
    """
    for phrase in vocab:
        if not tokenize_label(phrase):
            raise VocabularyError(f"phrase {phrase!r} has no tokens")
    rng = np.random.default_rng(config.seed)

    def glorot(fan_in: int, fan_out: int, shape: tuple[int, ...]) -> np.ndarray:
        s = np.sqrt(6.0 / (fan_in + fan_out))
        return rng.uniform(-s, s, size=shape)

    hidden = config.hidden_widths(schema)
    mod_w1, mod_b1, mod_w2, mod_b2 = {}, {}, {}, {}
    for mod, h in zip(schema.names, hidden):
        d = config.input_dim(schema, mod)
        mod_w1[mod] = glorot(d, h, (d, h))
        mod_b1[mod] = np.zeros(h)
        mod_w2[mod] = glorot(h, h, (h, h))
        mod_b2[mod] = np.zeros(h)
    concat = int(sum(hidden))
    fusion_w = glorot(concat, config.embed_dim, (concat, config.embed_dim))
    fusion_b = np.zeros(config.embed_dim)
    tokens = vocabulary_tokens(vocab)
    token_table = glorot(len(tokens), config.embed_dim, (len(tokens), config.embed_dim))
    return Parameters(
        config=config,
        schema=schema,
        vocab=vocab,
        mod_w1=mod_w1,
        mod_b1=mod_b1,
        mod_w2=mod_w2,
        mod_b2=mod_b2,
        fusion_w=fusion_w,
        fusion_b=fusion_b,
        tokens=tokens,
        token_table=token_table,
    )


def normalize_rows(x: np.ndarray) -> np.ndarray:
    """Row-wise L2 normalization; rows with near-zero norm pass through."""
    norms = np.linalg.norm(x, axis=-1, keepdims=True)
    safe = np.where(norms < _NORM_EPS, 1.0, norms)
    return x / safe


# ===== forward passes (with caches the trainer backpropagates through) =====


@dataclass
class SensorForwardCache:
    inputs: dict[str, np.ndarray]      # (n, in_m)
    pre_act: dict[str, np.ndarray]     # (n, h_m) before ReLU
    hidden: dict[str, np.ndarray]      # (n, h_m) after ReLU
    concat: np.ndarray                 # (n, sum h_m)
    raw: np.ndarray                    # (n, E) before normalization
    out: np.ndarray                    # (n, E)


@dataclass
class LabelForwardCache:
    phrases: tuple[str, ...]
    token_ids: list[np.ndarray]        # per phrase, table row indices
    raw: np.ndarray                    # (n_phrases, E) token means
    out: np.ndarray                    # (n_phrases, E)


def modality_inputs(
    params: Parameters, windows: list[SensorWindow]
) -> dict[str, np.ndarray]:
    """Stack encoder inputs per modality for a batch of windows."""
    schema, config = params.schema, params.config
    out: dict[str, np.ndarray] = {}
    if config.feature_mode == "statistical":
        stats = np.array([statistical_features(w, schema) for w in windows])
        for i, mod in enumerate(schema.names):
            out[mod] = stats[:, 4 * i : 4 * (i + 1)]
    else:
        for mod, dim in zip(schema.names, schema.dims):
            rows = []
            for w in windows:
                v = np.asarray(w.features[mod], dtype=np.float64)
                if v.shape != (dim,):
                    raise EncodingError(
                        "window at %d: modality %r has shape %r, schema needs (%d,)"
                        % (w.timestamp, mod, v.shape, dim)
                    )
                rows.append(v)
            out[mod] = np.array(rows)
    for mod, mat in out.items():
        if np.isnan(mat).any():
            raise EncodingError(
                f"modality {mod!r} still has NaN cells; run imputation first"
            )
    return out


def forward_sensor(
    params: Parameters, inputs: dict[str, np.ndarray]
) -> SensorForwardCache:
    pre_act, hidden, outs = {}, {}, []
    for mod in params.schema.names:
        x = inputs[mod]
        p = x @ params.mod_w1[mod] + params.mod_b1[mod]
        h = np.maximum(p, 0.0)
        o = h @ params.mod_w2[mod] + params.mod_b2[mod]
        pre_act[mod] = p
        hidden[mod] = h
        outs.append(o)
    concat = np.concatenate(outs, axis=1)
    raw = concat @ params.fusion_w + params.fusion_b
    out = normalize_rows(raw) if params.config.normalize else raw
    return SensorForwardCache(
        inputs=inputs, pre_act=pre_act, hidden=hidden, concat=concat, raw=raw, out=out
    )


def forward_labels(params: Parameters, phrases: tuple[str, ...]) -> LabelForwardCache:
    token_ids: list[np.ndarray] = []
    raws = []
    for phrase in phrases:
        toks = tokenize_label(phrase)
        if not toks:
            raise VocabularyError(f"phrase {phrase!r} has no tokens")
        try:
            ids = np.array([params.token_index[t] for t in toks], dtype=np.int64)
        except KeyError as e:
            raise VocabularyError(
                f"token {e.args[0]!r} of phrase {phrase!r} is not in the table"
            ) from None
        token_ids.append(ids)
        raws.append(params.token_table[ids].mean(axis=0))
    raw = np.array(raws)
    out = normalize_rows(raw) if params.config.normalize else raw
    return LabelForwardCache(phrases=phrases, token_ids=token_ids, raw=raw, out=out)


# ===== public encoding API =====


def encode_sensor(params: Parameters, window: SensorWindow) -> np.ndarray:
    """Embed one imputed window; unit norm when config.normalize."""
    return encode_sensor_batch(params, [window])[0]


def encode_sensor_batch(params: Parameters, windows: list[SensorWindow]) -> np.ndarray:
    if not windows:
        return np.zeros((0, params.embed_dim))
    return forward_sensor(params, modality_inputs(params, windows)).out


def encode_label(params: Parameters, phrase: str) -> np.ndarray:
    """Embed a label phrase by mean token embedding."""
    return forward_labels(params, (phrase,)).out[0]


def encode_label_batch(params: Parameters, phrases: tuple[str, ...]) -> np.ndarray:
    if not phrases:
        return np.zeros((0, params.embed_dim))
    return forward_labels(params, phrases).out


def backward_normalize(raw: np.ndarray, out: np.ndarray, d_out: np.ndarray) -> np.ndarray:
    """Jacobian-vector product of row-wise L2 normalization.

    For y = x/||x||: dL/dx = (dL/dy - y * <y, dL/dy>) / ||x||. Rows that were
    passed through unchanged (near-zero norm) use the identity Jacobian.
    """
    norms = np.linalg.norm(raw, axis=-1, keepdims=True)
    small = norms < _NORM_EPS
    safe = np.where(small, 1.0, norms)
    inner = np.sum(out * d_out, axis=-1, keepdims=True)
    d_raw = (d_out - out * inner) / safe
    return np.where(small, d_out, d_raw)


def backward_sensor(
    params: Parameters, cache: SensorForwardCache, d_out: np.ndarray, grads: dict[str, np.ndarray]
) -> None:
    """Accumulate parameter gradients for the sensor path into `grads`."""
    if params.config.normalize:
        d_raw = backward_normalize(cache.raw, cache.out, d_out)
    else:
        d_raw = d_out
    grads["fusion.w"] += cache.concat.T @ d_raw
    grads["fusion.b"] += d_raw.sum(axis=0)
    d_concat = d_raw @ params.fusion_w.T
    offset = 0
    hidden = params.config.hidden_widths(params.schema)
    for mod, h in zip(params.schema.names, hidden):
        d_o = d_concat[:, offset : offset + h]
        offset += h
        grads[f"{mod}.w2"] += cache.hidden[mod].T @ d_o
        grads[f"{mod}.b2"] += d_o.sum(axis=0)
        d_h = d_o @ params.mod_w2[mod].T
        d_p = d_h * (cache.pre_act[mod] > 0.0)
        grads[f"{mod}.w1"] += cache.inputs[mod].T @ d_p
        grads[f"{mod}.b1"] += d_p.sum(axis=0)


def backward_labels(
    params: Parameters, cache: LabelForwardCache, d_out: np.ndarray, grads: dict[str, np.ndarray]
) -> None:
    """Accumulate token-table gradients for the label path into `grads`."""
    if params.config.normalize:
        d_raw = backward_normalize(cache.raw, cache.out, d_out)
    else:
        d_raw = d_out
    table = grads["token_table"]
    for i, ids in enumerate(cache.token_ids):
        np.add.at(table, ids, d_raw[i] / len(ids))


def zero_gradients(params: Parameters) -> dict[str, np.ndarray]:
    return {name: np.zeros_like(t) for name, t in params.tensor_items()}


# ===== SCPM parameter file format =====


def _pack_str(s: str) -> bytes:
    raw = s.encode("utf-8")
    if len(raw) > 0xFFFF:
        raise FormatError(f"string too long to serialize: {s[:32]!r}...")
    return struct.pack("<H", len(raw)) + raw


def _read_exact(f, n: int) -> bytes:
    data = f.read(n)
    if len(data) != n:
        raise FormatError("truncated parameters file")
    return data


def _unpack_str(f) -> str:
    (n,) = struct.unpack("<H", _read_exact(f, 2))
    return _read_exact(f, n).decode("utf-8")


def save_parameters(params: Parameters, path: str | os.PathLike) -> None:
    """Write the SCPM binary (little-endian, f32 tensors), atomically."""
    buf = io.BytesIO()
    buf.write(PARAMS_MAGIC)
    buf.write(struct.pack("<I", PARAMS_VERSION))
    buf.write(struct.pack("<I", len(params.schema.names)))
    for name, dim in zip(params.schema.names, params.schema.dims):
        buf.write(_pack_str(name))
        buf.write(struct.pack("<I", dim))
    cfg = params.config
    hidden = cfg.hidden_widths(params.schema)
    buf.write(struct.pack("<I", cfg.embed_dim))
    buf.write(struct.pack("<I", len(hidden)))
    for h in hidden:
        buf.write(struct.pack("<I", h))
    buf.write(struct.pack("<BBB", _ACTIVATIONS.index(cfg.activation),
                          int(cfg.normalize), _FEATURE_MODES.index(cfg.feature_mode)))
    buf.write(struct.pack("<q", cfg.seed))
    buf.write(struct.pack("<I", len(params.vocab)))
    for phrase in params.vocab:
        buf.write(_pack_str(phrase))
    buf.write(struct.pack("<I", len(params.tokens)))
    for tok in params.tokens:
        buf.write(_pack_str(tok))
    for _name, tensor in params.tensor_items():
        buf.write(np.ascontiguousarray(tensor, dtype="<f4").tobytes())

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


def load_parameters(path: str | os.PathLike) -> Parameters:
    """Read an SCPM file; validates magic and version."""
    with open(path, "rb") as f:
        magic = f.read(4)
        if magic != PARAMS_MAGIC:
            raise FormatError(f"bad parameters magic {magic!r}")
        (version,) = struct.unpack("<I", _read_exact(f, 4))
        if version != PARAMS_VERSION:
            raise FormatError(f"unsupported parameters version {version}")
        (n_mod,) = struct.unpack("<I", _read_exact(f, 4))
        names, dims = [], []
        for _ in range(n_mod):
            names.append(_unpack_str(f))
            dims.append(struct.unpack("<I", _read_exact(f, 4))[0])
        schema = ModalitySchema(names=tuple(names), dims=tuple(dims))
        (embed_dim,) = struct.unpack("<I", _read_exact(f, 4))
        (n_hidden,) = struct.unpack("<I", _read_exact(f, 4))
        hidden = tuple(
            struct.unpack("<I", _read_exact(f, 4))[0] for _ in range(n_hidden)
        )
        act_i, norm_i, mode_i = struct.unpack("<BBB", _read_exact(f, 3))
        (seed,) = struct.unpack("<q", _read_exact(f, 8))
        config = EncoderConfig(
            embed_dim=embed_dim,
            hidden=hidden,
            activation=_ACTIVATIONS[act_i],
            seed=seed,
            normalize=bool(norm_i),
            feature_mode=_FEATURE_MODES[mode_i],
        )
        (n_vocab,) = struct.unpack("<I", _read_exact(f, 4))
        vocab = LabelVocabulary(tuple(_unpack_str(f) for _ in range(n_vocab)))
        (n_tokens,) = struct.unpack("<I", _read_exact(f, 4))
        tokens = tuple(_unpack_str(f) for _ in range(n_tokens))

        def read_tensor(shape: tuple[int, ...]) -> np.ndarray:
            n = int(np.prod(shape)) if shape else 1
            data = np.frombuffer(_read_exact(f, 4 * n), dtype="<f4")
            return data.reshape(shape).astype(np.float64)

        mod_w1, mod_b1, mod_w2, mod_b2 = {}, {}, {}, {}
        for mod, h in zip(schema.names, hidden):
            d = config.input_dim(schema, mod)
            mod_w1[mod] = read_tensor((d, h))
            mod_b1[mod] = read_tensor((h,))
            mod_w2[mod] = read_tensor((h, h))
            mod_b2[mod] = read_tensor((h,))
        concat = int(sum(hidden))
        fusion_w = read_tensor((concat, embed_dim))
        fusion_b = read_tensor((embed_dim,))
        token_table = read_tensor((len(tokens), embed_dim))
        trailing = f.read(1)
        if trailing:
            raise FormatError("trailing bytes after parameter tensors")
    return Parameters(
        config=config,
        schema=schema,
        vocab=vocab,
        mod_w1=mod_w1,
        mod_b1=mod_b1,
        mod_w2=mod_w2,
        mod_b2=mod_b2,
        fusion_w=fusion_w,
        fusion_b=fusion_b,
        tokens=tokens,
        token_table=token_table,
    )
