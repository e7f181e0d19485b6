"""Corpus ingestion, chunking, and the document/chunk store.

The store is the single source of truth that every index is built from.
Ingestion is single-writer; once written the store is immutable and safe
for any number of concurrent readers.
"""

from __future__ import annotations

import hashlib
import json
import os
import re
from dataclasses import dataclass
from datetime import datetime, timezone

from .errors import DuplicateDocument, EmptyDocument, IngestError, NotFound

# Sentence boundary: ., ? or ! followed by whitespace. No abbreviation handling.
_SENTENCE_END = re.compile(r"(?<=[.?!])\s+")

MANIFEST_FILE = "manifest"
CHUNKS_FILE = "chunks"
DOCUMENTS_FILE = "documents"

DEFAULT_CHUNK_WORDS = 100


@dataclass(frozen=True)
class Document:
    doc_id: str
    title: str
    text: str


@dataclass(frozen=True)
class Chunk:
    chunk_id: str
    doc_id: str
    position: int
    text: str
    word_count: int


@dataclass(frozen=True)
class CorpusManifest:
    corpus_id: str
    num_documents: int
    num_chunks: int
    chunk_target_words: int
    created_at: str
    checksum: str


def normalize_whitespace(text: str) -> str:
    return " ".join(text.split())


def split_sentences(text: str) -> list[str]:
    """Split whitespace-normalized text into sentences, keeping terminal punctuation."""
    return [s for s in _SENTENCE_END.split(text) if s]


def _hard_split(words: list[str], target_words: int) -> list[list[str]]:
    return [words[i : i + target_words] for i in range(0, len(words), target_words)]


def chunk_document(doc: Document, target_words: int = DEFAULT_CHUNK_WORDS) -> list[Chunk]:
    """Greedy sentence-boundary chunking.

    Sentences are appended to the current chunk until it reaches at least
    ``target_words``, at which point the chunk closes. A single sentence
    longer than twice the target is hard-split on word boundaries into
    target-sized pieces before accumulation. Pure function of
    (doc.text, target_words).
    """
    if target_words < 1:
        raise ValueError("target_words must be >= 1")
    text = normalize_whitespace(doc.text)
    if not text:
        raise EmptyDocument(f"document {doc.doc_id!r} has no content")

    pieces: list[list[str]] = []
    for sentence in split_sentences(text):
        words = sentence.split()
        if len(words) > 2 * target_words:
            pieces.extend(_hard_split(words, target_words))
        else:
            pieces.append(words)

    chunks: list[Chunk] = []
    current: list[str] = []

    def close():
        if current:
            chunks.append(
                Chunk(
                    chunk_id=f"{doc.doc_id}#{len(chunks)}",
                    doc_id=doc.doc_id,
                    position=len(chunks),
                    text=" ".join(current),
                    word_count=len(current),
                )
            )
            current.clear()

    for words in pieces:
        current.extend(words)
        if len(current) >= target_words:
            close()
    close()
    return chunks


def _parse_record(line_no: int, raw: str) -> Document:
    try:
        record = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise IngestError(line_no, f"invalid JSON ({exc.msg})") from exc
    if not isinstance(record, dict):
        raise IngestError(line_no, "record is not an object")
    for field in ("doc_id", "title", "text"):
        if field not in record:
            raise IngestError(line_no, f"missing field {field!r}")
        if not isinstance(record[field], str):
            raise IngestError(line_no, f"field {field!r} is not a string")
    if not record["doc_id"]:
        raise IngestError(line_no, "empty doc_id")
    if not record["text"].strip():
        raise IngestError(line_no, "empty text")
    return Document(doc_id=record["doc_id"], title=record["title"], text=record["text"])


def _corpus_checksum(chunks: list[Chunk]) -> str:
    h = hashlib.sha256()
    for chunk in chunks:
        h.update(chunk.chunk_id.encode("utf-8"))
        h.update(b"\x00")
        h.update(chunk.text.encode("utf-8"))
        h.update(b"\n")
    return h.hexdigest()


class CorpusStore:
    """Immutable lookup over ingested documents and chunks."""

    def __init__(self, manifest: CorpusManifest, documents: list[Document], chunks: list[Chunk]):
        self.manifest = manifest
        self._documents = {d.doc_id: d for d in documents}
        self._chunks = {c.chunk_id: c for c in chunks}
        self._chunk_order = [c.chunk_id for c in chunks]
        self._by_doc: dict[str, list[Chunk]] = {}
        for c in chunks:
            self._by_doc.setdefault(c.doc_id, []).append(c)

    @classmethod
    def from_documents(
        cls, documents: list[Document], target_words: int = DEFAULT_CHUNK_WORDS
    ) -> "CorpusStore":
        """Build an in-memory store without touching disk. Used heavily in tests."""
        seen: set[str] = set()
        chunks: list[Chunk] = []
        for doc in documents:
            if doc.doc_id in seen:
                raise DuplicateDocument(doc.doc_id)
            seen.add(doc.doc_id)
            chunks.extend(chunk_document(doc, target_words))
        checksum = _corpus_checksum(chunks)
        manifest = CorpusManifest(
            corpus_id=checksum[:12],
            num_documents=len(documents),
            num_chunks=len(chunks),
            chunk_target_words=target_words,
            created_at=datetime.now(timezone.utc).isoformat(),
            checksum=checksum,
        )
        return cls(manifest, documents, chunks)

    @classmethod
    def load(cls, index_dir: str) -> "CorpusStore":
        manifest_path = os.path.join(index_dir, MANIFEST_FILE)
        if not os.path.exists(manifest_path):
            raise NotFound(f"no manifest under {index_dir!r}")
        with open(manifest_path, encoding="utf-8") as f:
            manifest = CorpusManifest(**json.load(f))
        documents = []
        with open(os.path.join(index_dir, DOCUMENTS_FILE), encoding="utf-8") as f:
            for line in f:
                documents.append(Document(**json.loads(line)))
        chunks = []
        with open(os.path.join(index_dir, CHUNKS_FILE), encoding="utf-8") as f:
            for line in f:
                chunks.append(Chunk(**json.loads(line)))
        return cls(manifest, documents, chunks)

    def get_document(self, doc_id: str) -> Document:
        try:
            return self._documents[doc_id]
        except KeyError:
            raise NotFound(f"document {doc_id!r}") from None

    def get_chunk(self, chunk_id: str) -> Chunk:
        try:
            return self._chunks[chunk_id]
        except KeyError:
            raise NotFound(f"chunk {chunk_id!r}") from None

    def has_document(self, doc_id: str) -> bool:
        return doc_id in self._documents

    def chunks(self) -> list[Chunk]:
        return [self._chunks[cid] for cid in self._chunk_order]

    def chunk_ids(self) -> list[str]:
        return list(self._chunk_order)

    def doc_ids(self) -> list[str]:
        return list(self._documents)

    def chunks_for_doc(self, doc_id: str) -> list[Chunk]:
        return list(self._by_doc.get(doc_id, []))


def ingest_corpus(
    source_path: str, out_dir: str, target_words: int = DEFAULT_CHUNK_WORDS
) -> CorpusManifest:
    """Read line-delimited doc_id/title/text records, chunk, and persist.

    Idempotent: re-ingesting identical input reproduces chunk_ids and the
    manifest checksum exactly.
    """
    documents: list[Document] = []
    seen: set[str] = set()
    with open(source_path, encoding="utf-8") as f:
        for line_no, raw in enumerate(f, start=1):
            if not raw.strip():
                continue
            doc = _parse_record(line_no, raw)
            if doc.doc_id in seen:
                raise DuplicateDocument(f"doc_id {doc.doc_id!r} (line {line_no})")
            seen.add(doc.doc_id)
            documents.append(doc)

    chunks: list[Chunk] = []
    for doc in documents:
        try:
            chunks.extend(chunk_document(doc, target_words))
        except EmptyDocument as exc:
            raise IngestError(0, str(exc)) from exc

    checksum = _corpus_checksum(chunks)
    manifest = CorpusManifest(
        corpus_id=checksum[:12],
        num_documents=len(documents),
        num_chunks=len(chunks),
        chunk_target_words=target_words,
        created_at=datetime.now(timezone.utc).isoformat(),
        checksum=checksum,
    )

    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, DOCUMENTS_FILE), "w", encoding="utf-8") as f:
        for doc in documents:
            f.write(json.dumps(doc.__dict__, ensure_ascii=False) + "\n")
    with open(os.path.join(out_dir, CHUNKS_FILE), "w", encoding="utf-8") as f:
        for chunk in chunks:
            f.write(json.dumps(chunk.__dict__, ensure_ascii=False) + "\n")
    with open(os.path.join(out_dir, MANIFEST_FILE), "w", encoding="utf-8") as f:
        json.dump(manifest.__dict__, f, ensure_ascii=False, indent=2, sort_keys=True)
        f.write("\n")
    return manifest
