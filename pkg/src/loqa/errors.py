"""Exception hierarchy for the loqa package.

Every error raised on a documented failure path derives from LoqaError so
callers (CLI, HTTP service) can map them to exit codes / status codes in
one place.
"""

from __future__ import annotations


class LoqaError(Exception):
    """Base class for all package errors."""


class SchemaError(LoqaError):
    """Input header or schema does not match expectations."""


class FormatError(LoqaError):
    """A cell, column, or file payload is malformed."""


class OrderingError(LoqaError):
    """Timestamps out of order or duplicated for a user."""


class VocabularyError(LoqaError):
    """Label vocabulary is unusable (too small, unknown phrase, ...)."""


class ImputationError(LoqaError):
    """A modality has no observed values anywhere, so means are undefined."""


class EncodingError(LoqaError):
    """Encoder input does not match the configured schema."""


class StoreError(LoqaError):
    """Embedding store file is malformed or incompatible."""


class QueryError(LoqaError):
    """A query spec is invalid or cannot be resolved against the data."""


class ScopeError(QueryError):
    """A time scope cannot be resolved (bad reference, empty result chain)."""


class DecompositionError(LoqaError):
    """A question could not be decomposed into query specs."""


class MarkerParseError(DecompositionError):
    """Marked-up model output could not be parsed into query specs."""


class AssemblyError(LoqaError):
    """Answer assembly failed (no contexts, empty inputs)."""


class GatewayError(LoqaError):
    """Base class for chat-completion gateway failures."""


class ConfigurationError(GatewayError):
    """Gateway (or service) configuration is incomplete or invalid."""


class TransportError(GatewayError):
    """HTTP transport failed after the configured retry."""

    def __init__(self, message: str, status: int | None = None):
        super().__init__(message)
        self.status = status


class ProtocolError(GatewayError):
    """Gateway returned a payload that does not follow the wire contract."""
