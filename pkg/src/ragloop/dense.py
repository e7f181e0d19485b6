"""Embedding-based retrieval behind a pluggable provider.

Top-k is exact (brute-force cosine over candidates): at desk scale there is
no reason to pay the complexity of approximate structures, and exactness
makes oracle testing trivial. Indexes are immutable after build.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass
from typing import Protocol

import numpy as np
import requests

from .corpus import Chunk
from .errors import EmbeddingError, EmptyQuery, IndexBuildError, InvalidParameter, NotFound
from .sparse import tokenize

DENSE_SUBDIR = "dense"
_HEADER_FILE = "header.json"
_VECTORS_FILE = "vectors.npy"
_FORMAT_VERSION = 1


@dataclass(frozen=True)
class DenseHit:
    chunk_id: str
    cosine_score: float


class EmbeddingProvider(Protocol):
    provider_id: str
    dimension: int

    def embed_batch(self, texts: list[str]) -> np.ndarray: ...


class HashEmbedder:
    """Deterministic test embedder: hashed bag-of-tokens, L2-normalized.

    Each token lands in bucket sha256(token)[:8] mod dimension; the vector
    is the bucket count vector scaled to unit L2 norm. No external service,
    stable across runs and platforms.
    """

    def __init__(self, dimension: int = 64):
        self.dimension = dimension
        self.provider_id = f"hash-bag-v1-d{dimension}"

    @staticmethod
    def bucket(token: str, dimension: int) -> int:
        digest = hashlib.sha256(token.encode("utf-8")).digest()
        return int.from_bytes(digest[:8], "big") % dimension

    def embed_batch(self, texts: list[str]) -> np.ndarray:
        vectors = np.zeros((len(texts), self.dimension), dtype=np.float64)
        for row, text in enumerate(texts):
            tokens = tokenize(text)
            if not tokens:
                raise EmbeddingError(f"text {row} has no tokens", retryable=False)
            for token in tokens:
                vectors[row, self.bucket(token, self.dimension)] += 1.0
        return vectors


class HttpEmbeddingProvider:
    """Batch embedding over HTTP: POST {base_url}/embed with texts, vectors back."""

    def __init__(
        self,
        base_url: str,
        model: str,
        dimension: int,
        api_key: str | None = None,
        timeout: float = 30.0,
    ):
        self.base_url = base_url.rstrip("/")
        self.model = model
        self.dimension = dimension
        self.provider_id = f"http:{model}:d{dimension}"
        self._api_key = api_key
        self._timeout = timeout

    def embed_batch(self, texts: list[str]) -> np.ndarray:
        headers = {}
        if self._api_key:
            headers["Authorization"] = f"Bearer {self._api_key}"
        try:
            response = requests.post(
                f"{self.base_url}/embed",
                json={"model": self.model, "texts": texts},
                headers=headers,
                timeout=self._timeout,
            )
        except requests.RequestException as exc:
            raise EmbeddingError(f"embedding request failed: {exc}", retryable=True) from exc
        if response.status_code >= 500:
            raise EmbeddingError(f"embedding service error {response.status_code}", retryable=True)
        if response.status_code != 200:
            raise EmbeddingError(f"embedding request rejected {response.status_code}", retryable=False)
        vectors = np.asarray(response.json()["vectors"], dtype=np.float64)
        if vectors.ndim != 2 or vectors.shape != (len(texts), self.dimension):
            raise EmbeddingError(
                f"expected {(len(texts), self.dimension)} vectors, got {vectors.shape}",
                retryable=False,
            )
        return vectors


def embed(provider: EmbeddingProvider, text: str) -> np.ndarray:
    """Embed one text and L2-normalize the output."""
    if not text:
        raise EmptyQuery("cannot embed empty text")
    vector = provider.embed_batch([text])[0]
    return _normalize_rows(vector[np.newaxis, :])[0]


def _normalize_rows(matrix: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(matrix, axis=1)
    if np.any(norms == 0.0):
        raise EmbeddingError("zero-norm embedding cannot be normalized", retryable=False)
    return matrix / norms[:, np.newaxis]


class DenseIndex:
    """One unit vector per chunk, aligned with chunk_ids; exact top-k cosine."""

    def __init__(self, chunk_ids: list[str], vectors: np.ndarray, provider: EmbeddingProvider):
        if vectors.shape[0] != len(chunk_ids):
            raise IndexBuildError("vector count does not match chunk_ids")
        self.chunk_ids = chunk_ids
        self.vectors = vectors
        self.provider = provider
        self._row_of = {cid: i for i, cid in enumerate(chunk_ids)}

    @classmethod
    def build(
        cls, chunks: list[Chunk], provider: EmbeddingProvider, batch_size: int = 64
    ) -> "DenseIndex":
        if not chunks:
            raise IndexBuildError("cannot build a dense index from zero chunks")
        rows: list[np.ndarray] = []
        for start in range(0, len(chunks), batch_size):
            batch = chunks[start : start + batch_size]
            try:
                rows.append(provider.embed_batch([c.text for c in batch]))
            except EmbeddingError as exc:
                raise EmbeddingError(
                    f"index build aborted after {start} of {len(chunks)} chunks: {exc}",
                    retryable=exc.retryable,
                ) from exc
        matrix = _normalize_rows(np.vstack(rows))
        return cls([c.chunk_id for c in chunks], matrix, provider)

    def semantic_search(
        self, query: str, k: int, candidate_filter: set[str] | None = None
    ) -> list[DenseHit]:
        """Exact top-k by cosine similarity; ties broken by ascending chunk_id."""
        if k < 1:
            raise InvalidParameter(f"k must be >= 1, got {k}")
        if not query.strip():
            raise EmptyQuery("query is empty")
        query_vector = embed(self.provider, query)
        scores = self.vectors @ query_vector
        pairs = [
            (float(scores[i]), cid)
            for i, cid in enumerate(self.chunk_ids)
            if candidate_filter is None or cid in candidate_filter
        ]
        pairs.sort(key=lambda item: (-item[0], item[1]))
        return [DenseHit(chunk_id=cid, cosine_score=s) for s, cid in pairs[:k]]

    def save(self, index_dir: str) -> None:
        out_dir = os.path.join(index_dir, DENSE_SUBDIR)
        os.makedirs(out_dir, exist_ok=True)
        header = {
            "version": _FORMAT_VERSION,
            "provider_id": self.provider.provider_id,
            "dimension": int(self.vectors.shape[1]),
            "chunk_ids": self.chunk_ids,
        }
        with open(os.path.join(out_dir, _HEADER_FILE), "w", encoding="utf-8") as f:
            json.dump(header, f, ensure_ascii=False, sort_keys=True)
        np.save(os.path.join(out_dir, _VECTORS_FILE), self.vectors)

    @classmethod
    def load(cls, index_dir: str, provider: EmbeddingProvider) -> "DenseIndex":
        header_path = os.path.join(index_dir, DENSE_SUBDIR, _HEADER_FILE)
        if not os.path.exists(header_path):
            raise NotFound(f"no dense index under {index_dir!r}")
        with open(header_path, encoding="utf-8") as f:
            header = json.load(f)
        if header.get("version") != _FORMAT_VERSION:
            raise IndexBuildError(f"unsupported dense index version {header.get('version')!r}")
        if header["provider_id"] != provider.provider_id:
            raise IndexBuildError(
                f"index built with provider {header['provider_id']!r}, "
                f"cannot query with {provider.provider_id!r}"
            )
        vectors = np.load(os.path.join(index_dir, DENSE_SUBDIR, _VECTORS_FILE))
        return cls(header["chunk_ids"], vectors, provider)


def build_dense_index(chunks: list[Chunk], provider: EmbeddingProvider) -> DenseIndex:
    return DenseIndex.build(chunks, provider)
