"""Exact cosine-similarity vector indexes, whole-corpus or per-topic.

Search is brute force on purpose: desk-scale corpora make exactness
affordable, and every ranking can be checked against an independent
re-implementation. Indexes persist to a small binary container.
"""

from __future__ import annotations

import json
import logging
import struct
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .chunking import Chunk
from .embeddings import EmbeddingProvider, EmbeddingVector
from .errors import DataError, ExternalServiceError, ParameterError

logger = logging.getLogger(__name__)

_MAGIC = b"LXVI"
_VERSION = 1

BATCH_SIZE = 128
MAX_RETRIES = 3


@dataclass
class VectorIndex:
    provider_id: str
    dim: int
    topic_id: str | None = None
    entries: list[tuple[Chunk, np.ndarray]] = field(default_factory=list)
    _unit_matrix: np.ndarray | None = None
    _centroid: np.ndarray | None = None
    _ids: set[str] = field(default_factory=set)

    def __len__(self) -> int:
        return len(self.entries)

    def add(self, chunk: Chunk, vector: np.ndarray) -> None:
        if vector.shape != (self.dim,):
            raise ParameterError(f"vector dim {vector.shape} != index dim {self.dim}")
        if not self._ids and self.entries:
            self._ids = {c.chunk_id for c, _ in self.entries}
        if chunk.chunk_id in self._ids:
            raise DataError(f"duplicate chunk id {chunk.chunk_id}")
        self._ids.add(chunk.chunk_id)
        self.entries.append((chunk, vector))
        self._unit_matrix = None
        self._centroid = None

    def unit_matrix(self) -> np.ndarray:
        """Rows are entry vectors scaled to unit norm (zero vectors stay zero)."""
        if self._unit_matrix is None:
            mat = np.vstack([v for _, v in self.entries]) if self.entries else np.zeros((0, self.dim))
            norms = np.linalg.norm(mat, axis=1, keepdims=True)
            self._unit_matrix = np.where(norms > 0, mat / np.where(norms == 0, 1, norms), 0.0)
        return self._unit_matrix

    def centroid(self) -> np.ndarray:
        if self._centroid is None:
            if not self.entries:
                self._centroid = np.zeros(self.dim)
            else:
                self._centroid = np.mean([v for _, v in self.entries], axis=0)
        return self._centroid

    def save(self, path: str | Path) -> None:
        path = Path(path)
        header = json.dumps(
            {"dim": self.dim, "provider_id": self.provider_id,
             "count": len(self.entries), "topic_id": self.topic_id},
            sort_keys=True,
        ).encode("utf-8")
        with path.open("wb") as fh:
            fh.write(_MAGIC)
            fh.write(struct.pack("<HI", _VERSION, len(header)))
            fh.write(header)
            for chunk, vec in self.entries:
                meta = json.dumps(chunk.to_json_dict(), sort_keys=True, ensure_ascii=True).encode("utf-8")
                fh.write(struct.pack("<I", len(meta)))
                fh.write(meta)
                fh.write(np.asarray(vec, dtype="<f8").tobytes())

    @classmethod
    def load(cls, path: str | Path) -> "VectorIndex":
        path = Path(path)
        with path.open("rb") as fh:
            if fh.read(4) != _MAGIC:
                raise DataError(f"{path} is not a vector index file")
            version, header_len = struct.unpack("<HI", fh.read(6))
            if version != _VERSION:
                raise DataError(f"unsupported index version {version}")
            header = json.loads(fh.read(header_len))
            idx = cls(provider_id=header["provider_id"], dim=header["dim"],
                      topic_id=header["topic_id"])
            for _ in range(header["count"]):
                (meta_len,) = struct.unpack("<I", fh.read(4))
                chunk = Chunk.from_json_dict(json.loads(fh.read(meta_len)))
                vec = np.frombuffer(fh.read(8 * idx.dim), dtype="<f8").copy()
                idx.entries.append((chunk, vec))
        return idx


def build_index(
    chunks: list[Chunk],
    provider: EmbeddingProvider,
    topic_id: str | None = None,
    batch_size: int = BATCH_SIZE,
    max_retries: int = MAX_RETRIES,
    retry_backoff: float = 0.5,
) -> VectorIndex:
    """Embed chunks in batches and assemble an index.

    A failing batch is retried up to `max_retries` times with exponential
    backoff before the build aborts with the batch's chunk ids. Entry order
    follows chunk order regardless of how batches complete.
    """
    if not chunks:
        raise ParameterError("chunks must be non-empty")
    index = VectorIndex(provider_id=provider.provider_id, dim=provider.dim, topic_id=topic_id)
    for lo in range(0, len(chunks), batch_size):
        batch = chunks[lo:lo + batch_size]
        texts = [c.text for c in batch]
        vectors: list[EmbeddingVector] | None = None
        for attempt in range(max_retries + 1):
            try:
                vectors = provider.embed(texts)
                break
            except Exception as exc:  # noqa: BLE001 - provider contract is opaque
                if attempt == max_retries:
                    ids = ", ".join(c.chunk_id for c in batch[:5])
                    raise ExternalServiceError(
                        f"embedding batch at offset {lo} failed after {max_retries} retries "
                        f"(chunks {ids}...)"
                    ) from exc
                logger.warning("embed batch at %d failed (attempt %d): %s", lo, attempt + 1, exc)
                time.sleep(retry_backoff * (2**attempt))
        assert vectors is not None
        for chunk, vec in zip(batch, vectors):
            index.add(chunk, vec.as_array())
    return index


def search(index: VectorIndex, query: EmbeddingVector | np.ndarray, top_k: int) -> list[tuple[Chunk, float]]:
    """Exact cosine ranking of the whole index; ties break by chunk id.

    Returns min(top_k, len(index)) results with scores in [-1, 1].
    """
    if top_k < 1:
        raise ParameterError("top_k must be >= 1")
    q = query.as_array() if isinstance(query, EmbeddingVector) else np.asarray(query, dtype=float)
    if q.shape != (index.dim,):
        raise ParameterError(f"query dim {q.shape} != index dim {index.dim}")
    if not index.entries:
        return []
    qn = np.linalg.norm(q)
    unit_q = q / qn if qn > 0 else q
    scores = index.unit_matrix() @ unit_q
    order = sorted(range(len(scores)), key=lambda i: (-scores[i], index.entries[i][0].sort_key))
    return [(index.entries[i][0], float(scores[i])) for i in order[:top_k]]


@dataclass
class RoutedSearch:
    topic_id: str
    hits: list[tuple[Chunk, float]]


def route_and_search(
    indexes: dict[str, VectorIndex],
    query: str,
    provider: EmbeddingProvider,
    router: str = "best_topic",
    top_k: int = 5,
    topic_id: str | None = None,
) -> RoutedSearch:
    """Search one topic index, chosen explicitly or by centroid similarity.

    known_topic takes the caller's topic id (the evaluation setting);
    best_topic embeds the query and picks the index whose centroid is most
    cosine-similar, ties toward the lexicographically smallest topic id.
    """
    if not indexes:
        raise ParameterError("indexes must be non-empty")
    query_vec = provider.embed([query])[0].as_array()
    if router == "known_topic":
        if topic_id is None or topic_id not in indexes:
            raise ParameterError(f"unknown topic id {topic_id!r}")
        chosen = topic_id
    elif router == "best_topic":
        qn = np.linalg.norm(query_vec)
        unit_q = query_vec / qn if qn > 0 else query_vec
        best: tuple[float, str] | None = None
        for tid in sorted(indexes):
            c = indexes[tid].centroid()
            cn = np.linalg.norm(c)
            score = float((c / cn) @ unit_q) if cn > 0 else 0.0
            if best is None or score > best[0]:
                best = (score, tid)
        assert best is not None
        chosen = best[1]
    else:
        raise ParameterError(f"unknown router {router!r}")
    return RoutedSearch(topic_id=chosen, hits=search(indexes[chosen], query_vec, top_k))
