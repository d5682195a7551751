"""HTTP service around the question-answering pipeline.

The app is built by a factory around an AppState, so tests and the CLI can
inject a fixed clock, a mock gateway, or an in-memory demo corpus. Chat
sessions are kept in memory, guarded by a lock (uvicorn may call handlers
from multiple threads).

Status codes: 409 when no store/parameters are loaded (the service is up
but cannot answer yet), 422 for questions neither decomposition path can
handle and for malformed ingest payloads, 400 for bad query ranges.
"""

from __future__ import annotations

import io
import threading
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from fastapi import FastAPI, HTTPException
from fastapi.middleware.cors import CORSMiddleware
from pydantic import BaseModel

from .encoders import Parameters
from .errors import (
    DecompositionError,
    FormatError,
    ImputationError,
    LoqaError,
    OrderingError,
    SchemaError,
    StoreError,
)
from .evalharness import QaRecord, evaluate
from .ingest import impute_missing, parse_csv
from .pipeline import Pipeline
from .store import build_store, merge_stores, predict_labels

SERVICE_VERSION = "0.1.0"


def _wall_clock() -> int:
    return int(time.time())


@dataclass
class AppState:
    pipeline: Pipeline | None = None
    params: Parameters | None = None  # needed only for /api/ingest
    now_fn: Callable[[], int] = _wall_clock
    sessions: dict[str, list[dict]] = field(default_factory=dict)
    lock: threading.Lock = field(default_factory=threading.Lock)


def demo_state(days: int = 10, seed: int = 11, now: int | None = None) -> AppState:
    """Self-contained in-memory state over synthetic data with the exact
    label matcher; used by `serve --demo` and the browser round-trip test."""
    from .similarity import oracle_store_and_similarity
    from .synthetic import DEFAULT_START, synthetic_timeline, synthetic_vocabulary

    timeline = synthetic_timeline(days=days, seed=seed)
    vocab = synthetic_vocabulary()
    store, similarity, label_vectors = oracle_store_and_similarity(timeline, vocab)
    pipeline = Pipeline(store=store, similarity=similarity,
                        label_vectors=label_vectors, vocab=vocab)
    if now is None:
        # default demo clock: 15:00 on the store's last covered day
        now = DEFAULT_START + days * 86400 - 9 * 3600
    return AppState(pipeline=pipeline, now_fn=lambda: now)


class ChatRequest(BaseModel):
    question: str
    session_id: str = "default"
    now: int | None = None
    user_id: str | None = None


class IngestRequest(BaseModel):
    csv: str


class EvalRequest(BaseModel):
    records: list[dict]
    now: int | None = None


def create_app(state: AppState) -> FastAPI:
    app = FastAPI(title="loqa", version=SERVICE_VERSION)
    app.add_middleware(CORSMiddleware, allow_origins=["*"],
                       allow_methods=["*"], allow_headers=["*"])
    app.state.loqa = state

    def ready_pipeline() -> Pipeline:
        p = state.pipeline
        if p is None or len(p.store) == 0:
            raise HTTPException(status_code=409,
                                detail="no embedding store loaded")
        return p

    @app.get("/api/health")
    def health():
        p = state.pipeline
        return {
            "status": "ok",
            "version": SERVICE_VERSION,
            "windows": 0 if p is None else len(p.store),
            "labels": 0 if p is None else len(p.vocab.phrases),
            "embed_dim": None if p is None else p.store.embed_dim,
        }

    @app.get("/api/labels")
    def labels():
        p = ready_pipeline()
        return {"labels": list(p.vocab.phrases)}

    @app.post("/api/chat")
    def chat(req: ChatRequest):
        p = ready_pipeline()
        if not req.question.strip():
            raise HTTPException(status_code=422, detail="question is empty")
        now = req.now if req.now is not None else state.now_fn()
        started = time.perf_counter()
        try:
            result = p.answer(req.question, now=now, user_id=req.user_id)
        except DecompositionError as e:
            raise HTTPException(status_code=422, detail=str(e)) from None
        latency_ms = (time.perf_counter() - started) * 1000.0
        payload = {
            "session_id": req.session_id,
            "question": result.question,
            "category": result.category,
            "answer": result.answer,
            "short": result.short,
            "decomposition": result.decomposition,
            "contexts": result.contexts,
            "trace": result.trace,
            "latency_ms": latency_ms,
            "error": result.error,
            "now": now,
        }
        with state.lock:
            state.sessions.setdefault(req.session_id, []).append(
                {"question": result.question, "answer": result.answer,
                 "short": result.short, "now": now})
        return payload

    @app.get("/api/session/{session_id}")
    def session(session_id: str):
        with state.lock:
            history = list(state.sessions.get(session_id, []))
        return {"session_id": session_id, "history": history}

    @app.get("/api/timeline")
    def timeline(start: int, end: int, user_id: str | None = None, k: int = 3):
        p = ready_pipeline()
        if start >= end:
            raise HTTPException(status_code=400,
                                detail="start must be before end")
        if k < 1:
            raise HTTPException(status_code=400, detail="k must be >= 1")
        store = p.store
        mask = (store.timestamps >= start) & (store.timestamps < end)
        entries = []
        for i in np.flatnonzero(mask):
            uid = store.user_ids[i]
            if user_id is not None and uid != user_id:
                continue
            ts = int(store.timestamps[i])
            ranked = predict_labels(store, p.similarity, p.label_vectors,
                                    p.vocab, ts, k=k, user_id=uid)
            entries.append({
                "timestamp": ts,
                "user_id": uid,
                "labels": [{"label": name, "score": score}
                           for name, score in ranked],
            })
        return {"entries": entries, "count": len(entries)}

    @app.post("/api/ingest")
    def ingest(req: IngestRequest):
        if state.params is None:
            raise HTTPException(status_code=409,
                                detail="no encoder parameters loaded")
        p = state.pipeline
        if p is None:
            raise HTTPException(status_code=409, detail="no pipeline configured")
        try:
            timeline_new = parse_csv(io.StringIO(req.csv),
                                     schema=state.params.schema)
            timeline_new = impute_missing(timeline_new)
            fresh = build_store(state.params, timeline_new)
        except (FormatError, SchemaError, OrderingError, ImputationError) as e:
            raise HTTPException(status_code=422, detail=str(e)) from None
        try:
            with state.lock:
                merged = (merge_stores(p.store, fresh)
                          if len(p.store) else fresh)
                p.store = merged
        except StoreError as e:
            raise HTTPException(status_code=409, detail=str(e)) from None
        return {"added": len(fresh), "total": len(merged)}

    @app.post("/api/eval")
    def run_eval(req: EvalRequest):
        p = ready_pipeline()
        fields = QaRecord.__dataclass_fields__
        records = []
        for i, doc in enumerate(req.records):
            if "question" not in doc:
                raise HTTPException(status_code=422,
                                    detail=f"record {i} needs a question")
            try:
                records.append(QaRecord(**{k: v for k, v in doc.items()
                                           if k in fields}))
            except ValueError as e:
                raise HTTPException(status_code=422,
                                    detail=f"record {i}: {e}") from None
        if not records:
            raise HTTPException(status_code=422, detail="no records to evaluate")
        now = req.now if req.now is not None else state.now_fn()
        try:
            report = evaluate(p, records, now=now)
        except LoqaError as e:
            raise HTTPException(status_code=422, detail=str(e)) from None
        from dataclasses import asdict
        return {"summary": report.summary,
                "results": [asdict(r) for r in report.results]}

    return app
