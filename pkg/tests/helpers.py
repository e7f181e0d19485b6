"""Shared test machinery: deterministic word-soup corpora, an independent
BM25 oracle, and random action-suite generation for round-trip checks.

The oracle reimplements scoring from the written formula on purpose; it
must not call into ragloop.sparse.
"""

from __future__ import annotations

import math
import re
import string

from ragloop.corpus import CorpusStore, Document
from ragloop.protocol import (
    AdjustScale,
    EntityMatch,
    ExactSearch,
    ExcludeDocs,
    IncludeDocs,
    SemanticSearch,
    WeightedFusion,
)

# Small closed vocabulary so generated corpora get real term-frequency
# structure: repeats, shared terms, and terms absent from most chunks.
VOCAB = [
    "amber", "basin", "cedar", "delta", "ember", "fjord", "gable", "harbor",
    "inlet", "jetty", "kayak", "ledge", "marsh", "north", "otter", "pine",
    "quarry", "ridge", "shoal", "trail", "upland", "vale", "willow", "yarrow",
    "zephyr", "creek", "stone", "moss", "fern", "drift", "tide", "cliff",
    "grove", "heron", "lark", "mill", "oak", "path", "reed", "spring",
]


def soup_sentence(rng, lo=4, hi=14) -> str:
    words = [rng.choice(VOCAB) for _ in range(rng.randint(lo, hi))]
    return " ".join(words) + "."


def soup_corpus(rng, num_docs: int, sentences_per_doc=(1, 4), target_words: int = 20) -> CorpusStore:
    """Random documents over VOCAB; docs long enough to span several chunks."""
    docs = []
    for i in range(num_docs):
        n = rng.randint(*sentences_per_doc)
        text = " ".join(soup_sentence(rng) for _ in range(n))
        docs.append(Document(doc_id=f"doc{i:04d}", title=f"doc {i}", text=text))
    return CorpusStore.from_documents(docs, target_words=target_words)


def soup_query(rng, lo=1, hi=6) -> str:
    return " ".join(rng.choice(VOCAB) for _ in range(rng.randint(lo, hi)))


# -- independent BM25 oracle -------------------------------------------------

ORACLE_K1 = 1.2
ORACLE_B = 0.75


def oracle_tokenize(text: str) -> list[str]:
    return re.findall(r"[a-z0-9]+", text.lower())


def bm25_oracle_topk(chunk_texts: dict[str, str], keywords: str, k: int) -> list[tuple[str, float]]:
    """Brute-force top-k: every chunk scored in full, no postings lists.

    Scores every chunk containing at least one query token, ranked by
    (-score, chunk_id). Chunk iteration follows insertion order so float
    accumulation matches a per-token walk of the same texts.
    """
    tokens = {cid: oracle_tokenize(t) for cid, t in chunk_texts.items()}
    n = len(tokens)
    avg = (sum(len(v) for v in tokens.values()) / n) if n else 0.0

    df_cache: dict[str, int] = {}

    def idf(term: str) -> float:
        if term not in df_cache:
            df_cache[term] = sum(1 for v in tokens.values() if term in v)
        df = df_cache[term]
        if df == 0:
            return 0.0
        return math.log((n - df + 0.5) / (df + 0.5) + 1.0)

    query = oracle_tokenize(keywords)
    scored: dict[str, float] = {}
    for cid, chunk_tokens in tokens.items():
        norm = ORACLE_K1 * (1.0 - ORACLE_B + ORACLE_B * len(chunk_tokens) / (avg or 1.0))
        score = 0.0
        for term in query:
            tf = chunk_tokens.count(term)
            if tf == 0:
                continue
            score += idf(term) * (tf * (ORACLE_K1 + 1.0)) / (tf + norm)
        if score > 0.0:
            scored[cid] = score
    ranked = sorted(scored.items(), key=lambda item: (-item[1], item[0]))
    return ranked[:k]


# -- random actions for protocol round-trips ---------------------------------

# No angle brackets: a literal </tool_call> inside an argument string would
# terminate the enclosing block early, which the wire format cannot express.
SAFE_CHARS = string.ascii_letters + string.digits + " \t.,;:!?'\"()[]{}-_/\\&%$#@+=*|~^`éüøλ中"


def safe_text(rng, lo=1, hi=40) -> str:
    return "".join(rng.choice(SAFE_CHARS) for _ in range(rng.randint(lo, hi)))


def random_action(rng):
    roll = rng.randrange(7)
    if roll == 0:
        return SemanticSearch(query=safe_text(rng))
    if roll == 1:
        return ExactSearch(keywords=safe_text(rng))
    if roll == 2:
        return WeightedFusion(w_s=round(rng.random() * 3, 6), w_e=round(rng.random() * 3, 6))
    if roll == 3:
        return EntityMatch(entity=safe_text(rng))
    if roll == 4:
        return IncludeDocs(doc_ids=tuple(safe_text(rng, 1, 12) for _ in range(rng.randint(1, 3))))
    if roll == 5:
        return ExcludeDocs(doc_ids=tuple(safe_text(rng, 1, 12) for _ in range(rng.randint(1, 3))))
    return AdjustScale(n=rng.randint(1, 50))


def random_suite(rng) -> list:
    return [random_action(rng) for _ in range(rng.randint(1, 4))]


def mutate_payload(rng, text: str) -> str:
    """One random corruption of a rendered tool-call payload."""
    op = rng.randrange(7)
    if op == 0 and text:  # delete a span
        i = rng.randrange(len(text))
        j = min(len(text), i + rng.randint(1, 12))
        return text[:i] + text[j:]
    if op == 1:  # insert noise
        i = rng.randrange(len(text) + 1)
        noise = "".join(rng.choice(SAFE_CHARS + "<>{}") for _ in range(rng.randint(1, 6)))
        return text[:i] + noise + text[i:]
    if op == 2 and text:  # swap one character
        i = rng.randrange(len(text))
        return text[:i] + rng.choice(SAFE_CHARS + "<>") + text[i + 1:]
    if op == 3:  # truncate
        return text[: rng.randrange(len(text) + 1)]
    if op == 4:  # duplicate the whole thing
        return text + text
    if op == 5:  # break the field names
        return text.replace("name", rng.choice(["nome", "nm", '"]'])).replace(
            "arguments", rng.choice(["args", "argument", "{{"])
        )
    return text.replace("</tool_call>", rng.choice(["</tool_call", "</toolcall>", ""]), 1)
