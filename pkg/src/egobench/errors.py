"""Exception types shared across the toolkit.

Every error carries a machine-readable ``code`` so callers (CLI, bindings)
can map failures without parsing messages.
"""

from __future__ import annotations


class EgobenchError(Exception):
    """Base class; ``code`` is a stable machine-readable identifier."""

    code = "ERROR"

    def __init__(self, message: str, code: str | None = None):
        super().__init__(message)
        if code is not None:
            self.code = code


class ParseError(EgobenchError):
    """Malformed input file: bad JSON, missing/ill-typed fields."""

    code = "PARSE_ERROR"


class IntegrityError(EgobenchError):
    """Referential-integrity violation in otherwise well-formed data."""

    code = "INTEGRITY_ERROR"


class SplitError(EgobenchError):
    """Split construction cannot satisfy its structural constraints."""

    code = "SPLIT_ERROR"


class EvalError(EgobenchError):
    """Evaluation inputs violate the metric contracts."""

    code = "EVAL_ERROR"


class EmbeddingError(EgobenchError):
    """Embedding-index registration or matching failure."""

    code = "EMBEDDING_ERROR"


class StreamError(EgobenchError):
    """Experience stream violates its disjointness invariants."""

    code = "STREAM_ERROR"
