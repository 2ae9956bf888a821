"""Embedding-index baseline for instance matching.

Registration stores one unit-normalized embedding per target instance
(multiple references are normalized, averaged, then renormalized); a
proposal matches the index entry with the highest cosine similarity, and
its final score is the proposal's objectness score times the clamped
similarity.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Optional, Sequence

import numpy as np

from egobench.errors import EmbeddingError, ParseError
from egobench.geometry import Box
from egobench.schema import Prediction

DEFAULT_DIM = 512


@dataclass(frozen=True)
class Proposal:
    """Class-agnostic region proposal plus its embedding."""

    image_id: int
    bbox: Box
    rpn_score: float
    embedding: np.ndarray


def _unit(v: np.ndarray, what: str) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    if v.ndim != 1:
        raise EmbeddingError(f"{what} must be a vector, got shape {v.shape}", code="DIM_MISMATCH")
    if not np.all(np.isfinite(v)):
        raise EmbeddingError(f"{what} must be finite", code="BAD_VALUE")
    norm = float(np.linalg.norm(v))
    if norm == 0.0:
        raise EmbeddingError(f"{what} is a zero vector", code="ZERO_VECTOR")
    return v / norm


class EmbeddingIndex:
    """instance_id -> unit embedding, with cosine matching.

    Entries for already-registered ids are only changed by an explicit
    re-registration of that id; registering new targets never perturbs
    existing entries. Reads are thread-safe; writers must serialize.
    """

    def __init__(self, dim: Optional[int] = None, threshold: float = 0.5):
        if not 0.0 <= threshold <= 1.0:
            raise EmbeddingError(f"threshold must be in [0, 1], got {threshold}", code="BAD_VALUE")
        if dim is not None and dim < 1:
            raise EmbeddingError(f"dimension must be positive, got {dim}", code="BAD_VALUE")
        self.dim = dim
        self.threshold = threshold
        self._entries: dict[int, np.ndarray] = {}

    def __len__(self) -> int:
        return len(self._entries)

    def __contains__(self, instance_id: int) -> bool:
        return instance_id in self._entries

    def instance_ids(self) -> list[int]:
        return sorted(self._entries)

    def embedding(self, instance_id: int) -> np.ndarray:
        return self._entries[instance_id].copy()

    def _check_dim(self, v: np.ndarray, what: str) -> None:
        if self.dim is None:
            self.dim = v.shape[0]
        elif v.shape[0] != self.dim:
            raise EmbeddingError(
                f"{what} has dimension {v.shape[0]}, index uses {self.dim}", code="DIM_MISMATCH"
            )

    def register(self, instance_id: int, embeddings: Sequence) -> None:
        """Store normalize(mean(normalize(e_i))) for the instance.

        Re-registering an id replaces its entry. A zero mean (references
        cancel out) is an error.
        """
        if not embeddings:
            raise EmbeddingError(f"instance {instance_id}: no reference embeddings", code="EMPTY")
        units = []
        for k, e in enumerate(embeddings):
            v = _unit(e, f"instance {instance_id} reference {k}")
            self._check_dim(v, f"instance {instance_id} reference {k}")
            units.append(v)
        mean = np.mean(np.stack(units), axis=0)
        norm = float(np.linalg.norm(mean))
        if norm < 1e-12:
            raise EmbeddingError(
                f"instance {instance_id}: reference embeddings average to zero",
                code="DEGENERATE_MEAN",
            )
        self._entries[instance_id] = mean / norm

    def match(self, proposal_embedding, rpn_score: float) -> Optional[tuple[int, float]]:
        """Best entry by cosine similarity, or None below the threshold.

        Similarity is clamped to [0, 1] before both the threshold test and
        the product, so the final score is rpn_score * clamped similarity.
        """
        if not 0.0 <= rpn_score <= 1.0:
            raise EmbeddingError(f"rpn_score must be in [0, 1], got {rpn_score}", code="BAD_VALUE")
        if not self._entries:
            return None
        v = _unit(proposal_embedding, "proposal embedding")
        self._check_dim(v, "proposal embedding")
        best_id = None
        best_cos = -math.inf
        for instance_id in sorted(self._entries):
            cos = float(np.dot(self._entries[instance_id], v))
            if cos > best_cos:
                best_cos = cos
                best_id = instance_id
        clamped = min(max(best_cos, 0.0), 1.0)
        if clamped < self.threshold:
            return None
        return best_id, rpn_score * clamped


# --------------------------------------------------------------------------
# File formats
# --------------------------------------------------------------------------


def load_embedding_file(path) -> list[tuple[int, np.ndarray]]:
    """JSON array of {"instance_id", "embedding": [reals]} records."""
    path = Path(path)
    try:
        payload = json.loads(path.read_text())
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from exc
    if not isinstance(payload, list):
        raise ParseError(f"{path}: embedding file must be a JSON array")
    out = []
    for i, record in enumerate(payload):
        ctx = f"{path.name}[{i}]"
        if not isinstance(record, Mapping):
            raise ParseError(f"{ctx}: must be an object")
        if "instance_id" not in record or "embedding" not in record:
            raise ParseError(f"{ctx}: needs 'instance_id' and 'embedding'")
        iid = record["instance_id"]
        if isinstance(iid, bool) or not isinstance(iid, int):
            raise ParseError(f"{ctx}: instance_id must be an integer")
        emb = record["embedding"]
        if not isinstance(emb, list) or not emb:
            raise ParseError(f"{ctx}: embedding must be a non-empty array")
        try:
            vec = np.asarray(emb, dtype=np.float64)
        except (TypeError, ValueError) as exc:
            raise ParseError(f"{ctx}: embedding entries must be numbers") from exc
        if vec.ndim != 1 or not np.all(np.isfinite(vec)):
            raise ParseError(f"{ctx}: embedding must be a flat array of finite numbers")
        out.append((iid, vec))
    return out


def build_index(records: Sequence[tuple[int, np.ndarray]], threshold: float = 0.5) -> EmbeddingIndex:
    """Register embedding-file records; rows sharing an instance_id are
    averaged as multiple references."""
    grouped: dict[int, list[np.ndarray]] = {}
    for iid, vec in records:
        grouped.setdefault(iid, []).append(vec)
    index = EmbeddingIndex(threshold=threshold)
    for iid in sorted(grouped):
        index.register(iid, grouped[iid])
    return index


def load_proposal_file(path) -> list[Proposal]:
    """JSON array of {"image_id", "bbox", "score", "embedding"} records."""
    path = Path(path)
    try:
        payload = json.loads(path.read_text())
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from exc
    if not isinstance(payload, list):
        raise ParseError(f"{path}: proposal file must be a JSON array")
    out = []
    for i, record in enumerate(payload):
        ctx = f"{path.name}[{i}]"
        if not isinstance(record, Mapping):
            raise ParseError(f"{ctx}: must be an object")
        for key in ("image_id", "bbox", "score", "embedding"):
            if key not in record:
                raise ParseError(f"{ctx}: missing field '{key}'")
        iid = record["image_id"]
        if isinstance(iid, bool) or not isinstance(iid, int):
            raise ParseError(f"{ctx}: image_id must be an integer")
        bbox = record["bbox"]
        if not isinstance(bbox, list) or len(bbox) != 4:
            raise ParseError(f"{ctx}: bbox must be [x, y, w, h]")
        score = record["score"]
        if isinstance(score, bool) or not isinstance(score, (int, float)) or not 0.0 <= score <= 1.0:
            raise ParseError(f"{ctx}: score must be a number in [0, 1]")
        emb = np.asarray(record["embedding"], dtype=np.float64)
        if emb.ndim != 1 or not np.all(np.isfinite(emb)):
            raise ParseError(f"{ctx}: embedding must be a flat array of finite numbers")
        out.append(
            Proposal(image_id=iid, bbox=Box(*[float(v) for v in bbox]), rpn_score=float(score), embedding=emb)
        )
    return out


def match_proposals(index: EmbeddingIndex, proposals: Sequence[Proposal]) -> list[Prediction]:
    """Run every proposal through the index; misses are dropped."""
    out = []
    for p in proposals:
        hit = index.match(p.embedding, p.rpn_score)
        if hit is not None:
            instance_id, score = hit
            out.append(Prediction(image_id=p.image_id, label=instance_id, bbox=p.bbox, score=score))
    return out
