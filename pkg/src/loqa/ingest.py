"""CSV timeline ingest, validation, and mean imputation.

Wire format (UTF-8 CSV): header row
    timestamp,user_id,f:<modality>:<k>,...,label:<phrase>,...
followed by one row per window. Feature cells hold floats or are empty;
label cells hold 1, 0, or empty (empty means unreported, treated as
not-positive). Per-user timestamps must be strictly increasing.

A modality with at least half of its cells empty in a row is treated as
missing for that whole row; otherwise only the empty cells are imputed.
Imputation fills each hole with the per-user feature mean, falling back to
the global feature mean when the user never observed that feature.
"""

from __future__ import annotations

import csv
import io
from typing import IO, Iterable

import numpy as np

from .errors import FormatError, ImputationError, OrderingError, SchemaError
from .schema import LabelVocabulary, ModalitySchema, SensorWindow, Timeline

MISSING_ROW_FRACTION = 0.5


def _parse_header(header: list[str]) -> tuple[ModalitySchema, list[str], list[tuple[str, int]]]:
    """Validate the header row.

    Returns (schema, label phrases, per-column (modality, feature index))
    for the feature columns in file order.
    """
    if len(header) < 2 or header[0] != "timestamp" or header[1] != "user_id":
        raise SchemaError(
            "header must start with 'timestamp,user_id', got %r" % header[:2]
        )
    feature_cols: list[tuple[str, int]] = []
    label_phrases: list[str] = []
    seen_label = False
    for col in header[2:]:
        if col.startswith("f:"):
            if seen_label:
                raise SchemaError("feature column %r appears after label columns" % col)
            parts = col.split(":")
            if len(parts) != 3 or not parts[1] or not parts[2].isdigit():
                raise FormatError("malformed feature column %r" % col)
            feature_cols.append((parts[1], int(parts[2])))
        elif col.startswith("label:"):
            phrase = col[len("label:") :]
            if not phrase:
                raise FormatError("empty label phrase in column %r" % col)
            if phrase in label_phrases:
                raise SchemaError("duplicate label column %r" % col)
            label_phrases.append(phrase)
            seen_label = True
        else:
            raise FormatError("unknown column prefix in column %r" % col)

    names: list[str] = []
    dims: dict[str, int] = {}
    for name, k in feature_cols:
        if name not in dims:
            names.append(name)
            dims[name] = 0
        if k != dims[name]:
            raise SchemaError(
                "feature indices for modality %r must be contiguous from 0; got %d"
                % (name, k)
            )
        dims[name] += 1
    if not names:
        raise SchemaError("header declares no feature columns")
    schema = ModalitySchema(names=tuple(names), dims=tuple(dims[n] for n in names))
    return schema, label_phrases, feature_cols


def parse_csv(stream: IO[str] | IO[bytes] | str, schema: ModalitySchema | None = None) -> Timeline:
    """Parse a timeline CSV.

    `schema`, when given, must match the header exactly; otherwise the schema
    is inferred from the header. Raises SchemaError / FormatError /
    OrderingError with the offending row number (1-based, header = row 1).
    """
    if isinstance(stream, str):
        stream = io.StringIO(stream)
    elif isinstance(stream, io.BufferedIOBase) or (
        hasattr(stream, "read") and isinstance(getattr(stream, "mode", ""), str) and "b" in getattr(stream, "mode", "")
    ):
        stream = io.TextIOWrapper(stream, encoding="utf-8")  # type: ignore[arg-type]

    reader = csv.reader(stream)
    try:
        header = next(reader)
    except StopIteration:
        raise SchemaError("empty input: no header row") from None
    file_schema, label_phrases, feature_cols = _parse_header(header)
    if schema is not None and (schema.names != file_schema.names or schema.dims != file_schema.dims):
        raise SchemaError(
            "header schema %r does not match expected %r"
            % ((file_schema.names, file_schema.dims), (schema.names, schema.dims))
        )
    schema = file_schema

    n_feat = len(feature_cols)
    expected_cells = 2 + n_feat + len(label_phrases)
    windows: list[SensorWindow] = []
    last_ts: dict[str, int] = {}
    for row_no, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != expected_cells:
            raise FormatError(
                "row %d has %d cells, expected %d" % (row_no, len(row), expected_cells)
            )
        try:
            ts = int(row[0])
        except ValueError:
            raise FormatError("row %d: malformed timestamp %r" % (row_no, row[0])) from None
        user = row[1]
        if not user:
            raise FormatError("row %d: empty user_id" % row_no)
        if user in last_ts:
            if ts == last_ts[user]:
                raise OrderingError(
                    "row %d: duplicate timestamp %d for user %r" % (row_no, ts, user)
                )
            if ts < last_ts[user]:
                raise OrderingError(
                    "row %d: timestamp %d for user %r is not increasing (previous %d)"
                    % (row_no, ts, user, last_ts[user])
                )
        last_ts[user] = ts

        per_mod: dict[str, list[float]] = {m: [] for m in schema.names}
        for (mod, _k), cell in zip(feature_cols, row[2 : 2 + n_feat]):
            if cell == "":
                per_mod[mod].append(np.nan)
            else:
                try:
                    per_mod[mod].append(float(cell))
                except ValueError:
                    raise FormatError(
                        "row %d: malformed feature cell %r in modality %r"
                        % (row_no, cell, mod)
                    ) from None
        features: dict[str, np.ndarray] = {}
        missing: dict[str, bool] = {}
        for mod in schema.names:
            vec = np.asarray(per_mod[mod], dtype=np.float64)
            n_empty = int(np.isnan(vec).sum())
            if n_empty / vec.size >= MISSING_ROW_FRACTION:
                vec = np.full(vec.size, np.nan)
                missing[mod] = True
            else:
                missing[mod] = False
            features[mod] = vec

        labels: set[str] = set()
        for phrase, cell in zip(label_phrases, row[2 + n_feat :]):
            if cell == "" or cell == "0":
                continue
            if cell == "1":
                labels.add(phrase)
            else:
                raise FormatError(
                    "row %d: label cell for %r must be 1, 0, or empty; got %r"
                    % (row_no, phrase, cell)
                )
        windows.append(
            SensorWindow(
                timestamp=ts,
                user_id=user,
                features=features,
                missing=missing,
                labels=frozenset(labels),
            )
        )

    windows.sort(key=lambda w: (w.user_id, w.timestamp))
    return Timeline(windows=windows, schema=schema)


def write_csv(timeline: Timeline, stream: IO[str], label_phrases: Iterable[str] | None = None) -> None:
    """Serialize a timeline back to the ingest CSV format.

    Empty cells are written for NaN features; labels are written as 1/0.
    parse_csv(write_csv(t)) reproduces t for well-formed timelines.
    """
    schema = timeline.schema
    if label_phrases is None:
        label_phrases = sorted({p for w in timeline.windows for p in w.labels})
    label_phrases = list(label_phrases)
    writer = csv.writer(stream, lineterminator="\n")
    header = ["timestamp", "user_id"]
    for name, dim in zip(schema.names, schema.dims):
        header.extend(f"f:{name}:{k}" for k in range(dim))
    header.extend(f"label:{p}" for p in label_phrases)
    writer.writerow(header)
    for w in sorted(timeline.windows, key=lambda w: (w.user_id, w.timestamp)):
        row: list[str] = [str(w.timestamp), w.user_id]
        for name in schema.names:
            for v in w.features[name]:
                row.append("" if np.isnan(v) else repr(float(v)))
        row.extend("1" if p in w.labels else "0" for p in label_phrases)
        writer.writerow(row)


def impute_missing(timeline: Timeline) -> Timeline:
    """Fill NaN feature cells with per-user means, then global means.

    Returns a new Timeline; observed cells are copied bit-identically.
    Raises ImputationError naming the modality when a feature column has no
    observed value anywhere. Idempotent: a second pass is a no-op.
    """
    schema = timeline.schema
    by_user: dict[str, list[SensorWindow]] = {}
    for w in timeline.windows:
        by_user.setdefault(w.user_id, []).append(w)

    global_mean: dict[str, np.ndarray] = {}
    for mod, dim in zip(schema.names, schema.dims):
        stack = np.array([w.features[mod] for w in timeline.windows], dtype=np.float64)
        if stack.size == 0:
            raise ImputationError(f"modality {mod!r} has no windows to impute from")
        observed = ~np.isnan(stack)
        if not observed.any(axis=0).all():
            raise ImputationError(
                f"modality {mod!r} has a feature with no observed values anywhere"
            )
        with np.errstate(invalid="ignore"):
            global_mean[mod] = np.nanmean(stack, axis=0)

    user_mean: dict[tuple[str, str], np.ndarray] = {}
    for user, wins in by_user.items():
        for mod in schema.names:
            stack = np.array([w.features[mod] for w in wins], dtype=np.float64)
            observed = ~np.isnan(stack)
            counts = observed.sum(axis=0)
            sums = np.where(observed, stack, 0.0).sum(axis=0)
            mean = np.divide(sums, counts, out=global_mean[mod].copy(),
                             where=counts > 0)
            user_mean[(user, mod)] = mean

    out: list[SensorWindow] = []
    for w in timeline.windows:
        feats: dict[str, np.ndarray] = {}
        for mod in schema.names:
            vec = w.features[mod].copy()
            holes = np.isnan(vec)
            if holes.any():
                vec[holes] = user_mean[(w.user_id, mod)][holes]
            feats[mod] = vec
        out.append(
            SensorWindow(
                timestamp=w.timestamp,
                user_id=w.user_id,
                features=feats,
                missing=dict(w.missing),
                labels=w.labels,
            )
        )
    return Timeline(
        windows=out,
        schema=schema,
        window_span_seconds=timeline.window_span_seconds,
        window_record_seconds=timeline.window_record_seconds,
    )


def build_vocabulary(timeline: Timeline) -> LabelVocabulary:
    """Distinct label phrases across the timeline, sorted."""
    phrases = sorted({p for w in timeline.windows for p in w.labels})
    return LabelVocabulary(phrases=tuple(phrases))
