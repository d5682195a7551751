"""End-to-end question answering: decompose -> execute -> assemble.

The pipeline owns the fallback policy between the rule grammar and the
model-backed decomposer (each can stand in for the other) and between
template and model-backed answer assembly.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .assembler import AnswerBundle, GenConfig, assemble_llm, assemble_template
from .decomposer import (
    DecompositionResult,
    build_prompt,
    classify_category,
    decompose_rules,
    load_synonyms,
    load_templates,
    parse_llm_decomposition,
    render_marked,
)
from .errors import (
    AssemblyError,
    DecompositionError,
    GatewayError,
    MarkerParseError,
    QueryError,
)
from .gateway import ChatMessage
from .queries import ExecutionContext, execute
from .schema import LabelVocabulary
from .similarity import SimilarityModel
from .store import EmbeddingStore


@dataclass
class ChatResult:
    question: str
    category: str
    answer: str
    short: str
    decomposition: dict
    contexts: list[str]
    trace: list[str]
    error: str | None = None


@dataclass
class Pipeline:
    store: EmbeddingStore
    similarity: SimilarityModel
    label_vectors: np.ndarray  # one row per vocabulary phrase
    vocab: LabelVocabulary
    synonyms: dict[str, str] | None = None
    templates: dict | None = None
    gateway: object | None = None
    decompose_mode: str = "rules"  # "rules" or "llm" tried first
    answer_mode: str = "template"  # "template" or "llm"
    h: float = 0.5
    gap_minutes: int = 5
    top_k: int = 3
    gen: GenConfig = field(default_factory=GenConfig)

    def __post_init__(self):
        if self.synonyms is None:
            self.synonyms = load_synonyms()
        if self.templates is None:
            self.templates = load_templates()
        if self.decompose_mode not in ("rules", "llm"):
            raise ValueError(f"unknown decompose mode {self.decompose_mode!r}")
        if self.answer_mode not in ("template", "llm"):
            raise ValueError(f"unknown answer mode {self.answer_mode!r}")

    # ----- decomposition with mutual fallback -----

    def _decompose_llm(self, question: str, category: str) -> DecompositionResult:
        if self.gateway is None:
            raise DecompositionError("no gateway configured for model decomposition")
        prompt = build_prompt(question, self.templates[category])
        completion = self.gateway.complete(
            [ChatMessage(role="user", content=prompt)],
            temperature=self.gen.temperature, max_tokens=self.gen.max_tokens)
        specs, contexts = parse_llm_decomposition(completion, self.vocab,
                                                  self.synonyms)
        return DecompositionResult(category=category, specs=specs,
                                   contexts=contexts,
                                   marked=render_marked(specs), source="llm")

    def decompose(self, question: str, trace: list[str]) -> DecompositionResult:
        category = classify_category(question)
        trace.append(f"category: {category}")
        order = ("rules", "llm") if self.decompose_mode == "rules" else ("llm", "rules")
        first_error: Exception | None = None
        for path in order:
            try:
                if path == "rules":
                    result = decompose_rules(question, self.vocab, self.synonyms)
                else:
                    result = self._decompose_llm(question, category)
                trace.append(f"decomposed via {path}: {result.marked}")
                return result
            except (DecompositionError, MarkerParseError, GatewayError) as e:
                trace.append(f"{path} decomposition failed: {e}")
                if first_error is None:
                    first_error = e
        raise DecompositionError(
            f"could not decompose {question!r}: {first_error}")

    # ----- full pipeline -----

    def execution_context(self, now: int, user_id: str | None) -> ExecutionContext:
        return ExecutionContext(
            store=self.store, similarity=self.similarity,
            label_vectors=self.label_vectors, vocab=self.vocab,
            now=now, h=self.h, user_id=user_id,
            gap_minutes=self.gap_minutes, top_k=self.top_k)

    def answer(self, question: str, now: int | None = None,
               user_id: str | None = None) -> ChatResult:
        """Raises DecompositionError when neither decomposition path works;
        execution and assembly problems come back as an error result."""
        now = int(time.time()) if now is None else int(now)
        trace: list[str] = []
        decomp = self.decompose(question, trace)

        decomposition = {
            "source": decomp.source,
            "category": decomp.category,
            "marked": decomp.marked,
            "specs": [
                {"function": s.function, "contexts": list(s.contexts),
                 "scope": {k: v for k, v in vars(s.scope).items()
                           if v is not None and v is not False}}
                for s in decomp.specs
            ],
        }

        try:
            ctx = self.execution_context(now, user_id)
            contexts = execute(decomp.specs, ctx)
            for c in contexts:
                trace.append(f"{c.function}: {c.text}")
            if self.answer_mode == "llm" and self.gateway is not None:
                bundle = assemble_llm(question, decomp.category, contexts,
                                      self.gateway, self.vocab, self.gen)
            else:
                bundle = assemble_template(question, decomp.category, contexts,
                                           self.vocab)
            if bundle.error:
                trace.append(f"gateway assembly failed, used template: {bundle.error}")
            trace.append(f"answer mode: {bundle.mode}")
        except (QueryError, AssemblyError) as e:
            trace.append(f"execution failed: {e}")
            return ChatResult(
                question=question, category=decomp.category,
                answer=f"I could not complete that question: {e}",
                short="unknown", decomposition=decomposition,
                contexts=[], trace=trace, error=str(e))

        return ChatResult(
            question=question, category=decomp.category, answer=bundle.full,
            short=bundle.short, decomposition=decomposition,
            contexts=list(bundle.contexts), trace=trace, error=bundle.error)
