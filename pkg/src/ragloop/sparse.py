"""Tokenization, inverted index, BM25 ranking, and entity-anchored matching.

Index build is single-threaded; the built index is immutable and safe for
concurrent readers. No stemming, no stopword removal.
"""

from __future__ import annotations

import json
import math
import os
import re
from dataclasses import dataclass

from .corpus import Chunk, split_sentences
from .errors import EmptyQuery, IndexBuildError, InvalidParameter, NotFound

BM25_K1 = 1.2
BM25_B = 0.75

SPARSE_SUBDIR = "sparse"
_INDEX_FILE = "index.json"
_FORMAT_VERSION = 1

# Alphanumeric runs; underscore counts as a separator.
_TOKEN = re.compile(r"[^\W_]+", re.UNICODE)


def tokenize(text: str) -> list[str]:
    """Lowercase, split on any non-alphanumeric character, drop empty pieces."""
    return _TOKEN.findall(text.lower())


@dataclass(frozen=True)
class SparseHit:
    chunk_id: str
    bm25_score: float


class InvertedIndex:
    """Exact postings over a chunk list, scored with BM25 (k1=1.2, b=0.75).

    IDF uses the +1-smoothed form ln((N - n_t + 0.5) / (n_t + 0.5) + 1),
    which is strictly positive, so a chunk scores > 0 iff it contains at
    least one query token.
    """

    def __init__(
        self,
        postings: dict[str, dict[str, int]],
        doc_lengths: dict[str, int],
        texts: dict[str, str],
    ):
        self.postings = postings
        self.doc_lengths = doc_lengths
        self.num_chunks = len(doc_lengths)
        self.avg_doc_length = (
            sum(doc_lengths.values()) / self.num_chunks if self.num_chunks else 0.0
        )
        self._texts = texts

    @classmethod
    def build(cls, chunks: list[Chunk]) -> "InvertedIndex":
        postings: dict[str, dict[str, int]] = {}
        doc_lengths: dict[str, int] = {}
        texts: dict[str, str] = {}
        for chunk in chunks:
            if chunk.chunk_id in doc_lengths:
                raise IndexBuildError(f"duplicate chunk_id {chunk.chunk_id!r}")
            tokens = tokenize(chunk.text)
            doc_lengths[chunk.chunk_id] = len(tokens)
            texts[chunk.chunk_id] = chunk.text
            for token in tokens:
                postings.setdefault(token, {})
                postings[token][chunk.chunk_id] = postings[token].get(chunk.chunk_id, 0) + 1
        return cls(postings, doc_lengths, texts)

    def idf(self, token: str) -> float:
        n_t = len(self.postings.get(token, ()))
        if n_t == 0:
            return 0.0
        return math.log((self.num_chunks - n_t + 0.5) / (n_t + 0.5) + 1.0)

    def _length_norm(self, chunk_id: str) -> float:
        avg = self.avg_doc_length or 1.0
        return BM25_K1 * (1.0 - BM25_B + BM25_B * self.doc_lengths[chunk_id] / avg)

    def bm25_score(self, query_tokens: list[str], chunk_id: str) -> float:
        """Sum of per-token BM25 contributions; absent tokens contribute 0."""
        if chunk_id not in self.doc_lengths:
            raise NotFound(f"chunk {chunk_id!r} not in index")
        norm = self._length_norm(chunk_id)
        score = 0.0
        for token in query_tokens:
            tf = self.postings.get(token, {}).get(chunk_id, 0)
            if tf == 0:
                continue
            score += self.idf(token) * (tf * (BM25_K1 + 1.0)) / (tf + norm)
        return score

    def _score_candidates(
        self, query_tokens: list[str], candidate_filter: set[str] | None
    ) -> dict[str, float]:
        scores: dict[str, float] = {}
        for token in query_tokens:
            token_postings = self.postings.get(token)
            if not token_postings:
                continue
            token_idf = self.idf(token)
            for chunk_id, tf in token_postings.items():
                if candidate_filter is not None and chunk_id not in candidate_filter:
                    continue
                contribution = token_idf * (tf * (BM25_K1 + 1.0)) / (tf + self._length_norm(chunk_id))
                scores[chunk_id] = scores.get(chunk_id, 0.0) + contribution
        return scores

    def exact_search(
        self, keywords: str, k: int, candidate_filter: set[str] | None = None
    ) -> list[SparseHit]:
        """Top-k chunks by BM25 against the tokenized keywords.

        Only chunks containing at least one keyword token are returned.
        Ties broken by ascending chunk_id.
        """
        if k < 1:
            raise InvalidParameter(f"k must be >= 1, got {k}")
        tokens = tokenize(keywords)
        if not tokens:
            raise EmptyQuery("keywords tokenize to nothing")
        scores = self._score_candidates(tokens, candidate_filter)
        ranked = sorted(scores.items(), key=lambda item: (-item[1], item[0]))
        return [SparseHit(chunk_id=cid, bm25_score=s) for cid, s in ranked[:k]]

    def _contains_phrase(self, chunk_id: str, phrase_tokens: list[str]) -> bool:
        tokens = tokenize(self._texts[chunk_id])
        n = len(phrase_tokens)
        return any(tokens[i : i + n] == phrase_tokens for i in range(len(tokens) - n + 1))

    def _rank_snippets(self, chunk_id: str, ranking_tokens: list[str], limit: int = 3) -> list[str]:
        # Each sentence becomes a micro-document and is BM25-scored on its own.
        sentences = split_sentences(self._texts[chunk_id])
        micro = InvertedIndex.build(
            [
                Chunk(chunk_id=str(i), doc_id="", position=i, text=s, word_count=len(s.split()))
                for i, s in enumerate(sentences)
            ]
        )
        order = sorted(
            range(len(sentences)),
            key=lambda i: (-micro.bm25_score(ranking_tokens, str(i)), i),
        )
        return [sentences[i] for i in order[:limit]]

    def entity_match(
        self, entity: str, query: str = "", candidate_filter: set[str] | None = None
    ) -> list[tuple[SparseHit, list[str]]]:
        """Chunks containing the entity's token sequence contiguously.

        Matches are ranked by BM25 against the query tokens (entity tokens
        when the query is empty), each with up to 3 sentence snippets ranked
        the same way. No match is an empty list, not an error.
        """
        entity_tokens = tokenize(entity)
        if not entity_tokens:
            raise EmptyQuery("entity tokenizes to nothing")
        ranking_tokens = tokenize(query) or entity_tokens

        # Postings intersection prefilters to chunks holding every entity token,
        # then each survivor is checked for contiguity.
        candidates: set[str] | None = None
        for token in entity_tokens:
            holders = set(self.postings.get(token, ()))
            candidates = holders if candidates is None else candidates & holders
            if not candidates:
                return []
        assert candidates is not None
        if candidate_filter is not None:
            candidates &= candidate_filter
        matches = [cid for cid in candidates if self._contains_phrase(cid, entity_tokens)]
        if not matches:
            return []

        scored = [(cid, self.bm25_score(ranking_tokens, cid)) for cid in matches]
        scored.sort(key=lambda item: (-item[1], item[0]))
        return [
            (SparseHit(chunk_id=cid, bm25_score=s), self._rank_snippets(cid, ranking_tokens))
            for cid, s in scored
        ]

    def save(self, index_dir: str) -> None:
        out_dir = os.path.join(index_dir, SPARSE_SUBDIR)
        os.makedirs(out_dir, exist_ok=True)
        payload = {
            "version": _FORMAT_VERSION,
            "postings": {t: list(p.items()) for t, p in self.postings.items()},
            "doc_lengths": self.doc_lengths,
            "texts": self._texts,
        }
        with open(os.path.join(out_dir, _INDEX_FILE), "w", encoding="utf-8") as f:
            json.dump(payload, f, ensure_ascii=False, sort_keys=True)

    @classmethod
    def load(cls, index_dir: str) -> "InvertedIndex":
        path = os.path.join(index_dir, SPARSE_SUBDIR, _INDEX_FILE)
        if not os.path.exists(path):
            raise NotFound(f"no sparse index under {index_dir!r}")
        with open(path, encoding="utf-8") as f:
            payload = json.load(f)
        if payload.get("version") != _FORMAT_VERSION:
            raise IndexBuildError(f"unsupported sparse index version {payload.get('version')!r}")
        postings = {t: {cid: tf for cid, tf in pairs} for t, pairs in payload["postings"].items()}
        return cls(postings, payload["doc_lengths"], payload["texts"])


def build_sparse_index(chunks: list[Chunk]) -> InvertedIndex:
    return InvertedIndex.build(chunks)
