"""Session state, the action algebra, and score fusion over a corpus.

A session carries fusion weights, a result-count scale, and per-document
include/exclude sets. Actions arrive in suites; state changes apply before
any retrieval in the same suite so "set weights then search" works inside
one turn.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field, replace

from .corpus import CorpusStore
from .dense import DenseHit, DenseIndex, EmbeddingProvider, HashEmbedder, build_dense_index
from .errors import InvalidParameter, ProtocolError, RagloopError
from .protocol import (
    Action,
    ActionStatus,
    AdjustScale,
    Answer,
    EntityHit,
    EntityMatch,
    ExactSearch,
    ExcludeDocs,
    IncludeDocs,
    ScoredChunk,
    SemanticSearch,
    ToolResponse,
    WeightedFusion,
    round_score,
)
from .sparse import InvertedIndex, SparseHit, build_sparse_index

DEFAULT_W_S = 0.7
DEFAULT_W_E = 0.3
DEFAULT_SCALE_N = 3

# Each strategy contributes at most this many hits to fusion.
FUSION_POOL = 20

MUTATION_TYPES = (WeightedFusion, IncludeDocs, ExcludeDocs, AdjustScale)
RETRIEVAL_TYPES = (SemanticSearch, ExactSearch, EntityMatch)


@dataclass(frozen=True)
class SessionState:
    w_s: float = DEFAULT_W_S
    w_e: float = DEFAULT_W_E
    scale_n: int = DEFAULT_SCALE_N
    included: tuple[str, ...] = ()
    excluded: frozenset[str] = frozenset()
    closed: bool = False

    def echo(self) -> dict:
        return {
            "w_s": self.w_s,
            "w_e": self.w_e,
            "scale_n": self.scale_n,
            "included": list(self.included),
            "excluded": sorted(self.excluded),
        }


@dataclass(frozen=True)
class ActionResult:
    action_name: str
    status: str
    message: str = ""
    results: tuple = ()

    def to_status(self) -> ActionStatus:
        return ActionStatus(action_name=self.action_name, status=self.status, message=self.message)


def _doc_of(chunk_id: str) -> str:
    return chunk_id.rsplit("#", 1)[0]


def resolve_candidates(state: SessionState, universe) -> set[str]:
    """Chunk ids visible to retrieval: everything minus excluded documents."""
    return {cid for cid in universe if _doc_of(cid) not in state.excluded}


def _minmax(hits: list[tuple[str, float]]) -> dict[str, float]:
    # Degenerate all-equal list maps to 1.0 so a unique hit is not zeroed out.
    if not hits:
        return {}
    values = [score for _, score in hits]
    low, high = min(values), max(values)
    if high == low:
        return {cid: 1.0 for cid, _ in hits}
    span = high - low
    return {cid: (score - low) / span for cid, score in hits}


def apply_fusion(
    semantic_hits: list[DenseHit],
    exact_hits: list[SparseHit],
    w_s: float,
    w_e: float,
    n: int,
    lookup=None,
) -> list[ScoredChunk]:
    """Weighted score fusion over the top-20 of each strategy.

    Scores are min-max normalized per strategy; a chunk absent from one
    list takes 0 for that strategy. Ties break by ascending chunk_id.
    `lookup` maps chunk_id -> (doc_id, text) for the returned chunks.
    """
    if w_s < 0 or w_e < 0 or w_s + w_e <= 0:
        raise InvalidParameter("fusion weights must be >= 0 and not both zero")
    if n < 1:
        raise InvalidParameter(f"n must be >= 1, got {n}")

    sem = [(h.chunk_id, h.cosine_score) for h in semantic_hits[:FUSION_POOL]]
    exa = [(h.chunk_id, h.bm25_score) for h in exact_hits[:FUSION_POOL]]
    sem_raw, exa_raw = dict(sem), dict(exa)
    sem_norm, exa_norm = _minmax(sem), _minmax(exa)

    fused: list[tuple[float, str]] = []
    for cid in {*sem_raw, *exa_raw}:
        score = w_s * sem_norm.get(cid, 0.0) + w_e * exa_norm.get(cid, 0.0)
        fused.append((score, cid))
    fused.sort(key=lambda item: (-item[0], item[1]))

    out = []
    for score, cid in fused[:n]:
        doc_id, text = lookup(cid) if lookup is not None else ("", "")
        provenance = tuple(
            name for name, raw in (("semantic", sem_raw), ("exact", exa_raw)) if cid in raw
        )
        out.append(
            ScoredChunk(
                chunk_id=cid,
                doc_id=doc_id,
                text=text,
                semantic_score=round_score(sem_raw[cid]) if cid in sem_raw else None,
                exact_score=round_score(exa_raw[cid]) if cid in exa_raw else None,
                fused_score=round_score(score),
                provenance=provenance,
            )
        )
    return out


class CorpusEngine:
    """Dispatches action suites against a chunked corpus and its indexes."""

    def __init__(self, corpus: CorpusStore, sparse: InvertedIndex, dense: DenseIndex):
        self.corpus = corpus
        self.sparse = sparse
        self.dense = dense
        self._universe = corpus.chunk_ids()

    @classmethod
    def build(cls, corpus: CorpusStore, provider: EmbeddingProvider | None = None) -> "CorpusEngine":
        provider = provider or HashEmbedder()
        chunks = corpus.chunks()
        return cls(corpus, build_sparse_index(chunks), DenseIndex.build(chunks, provider))

    @classmethod
    def load(cls, index_dir: str, provider: EmbeddingProvider | None = None) -> "CorpusEngine":
        provider = provider or HashEmbedder()
        return cls(
            CorpusStore.load(index_dir),
            InvertedIndex.load(index_dir),
            DenseIndex.load(index_dir, provider),
        )

    def save_indexes(self, index_dir: str) -> None:
        os.makedirs(index_dir, exist_ok=True)
        self.sparse.save(index_dir)
        self.dense.save(index_dir)

    def new_session(self) -> SessionState:
        return SessionState()

    # -- retrieval ---------------------------------------------------------

    def _lookup(self, chunk_id: str) -> tuple[str, str]:
        chunk = self.corpus.get_chunk(chunk_id)
        return chunk.doc_id, chunk.text

    def _candidates(self, state: SessionState) -> set[str] | None:
        if not state.excluded:
            return None
        return resolve_candidates(state, self._universe)

    def _fused_search(
        self,
        state: SessionState,
        query: str | None,
        keywords: str | None,
        n: int,
        candidates: set[str] | None,
    ) -> list[ScoredChunk]:
        sem_hits = (
            self.dense.semantic_search(query, FUSION_POOL, candidates) if query is not None else []
        )
        exact_hits = (
            self.sparse.exact_search(keywords, FUSION_POOL, candidates)
            if keywords is not None
            else []
        )
        return apply_fusion(sem_hits, exact_hits, state.w_s, state.w_e, n, lookup=self._lookup)


    def _doc_best_chunk(
        self, state: SessionState, doc_id: str, query: str | None, keywords: str | None
    ) -> ScoredChunk | None:
        chunks = self.corpus.chunks_for_doc(doc_id)
        if not chunks:
            return None
        local = {c.chunk_id for c in chunks}
        best = self._fused_search(state, query, keywords, 1, local)
        if best:
            top = best[0]
            return replace(top, provenance=top.provenance + ("included",))
        # No strategy scored the document (keyword miss): fall back to its
        # first chunk so the inclusion guarantee still holds.
        first = chunks[0]
        return ScoredChunk(
            chunk_id=first.chunk_id,
            doc_id=doc_id,
            text=first.text,
            semantic_score=None,
            exact_score=0.0 if keywords is not None else None,
            fused_score=0.0,
            provenance=("included",),
        )

    def guaranteed_chunks(
        self, state: SessionState, query: str | None, keywords: str | None = None
    ) -> list[ScoredChunk]:
        """Best chunk of each included document against the current request."""
        out = []
        for doc_id in state.included:
            best = self._doc_best_chunk(state, doc_id, query, keywords)
            if best is not None:
                out.append(best)
        return out

    def _retrieve(
        self, state: SessionState, query: str | None, keywords: str | None
    ) -> list[ScoredChunk]:
        candidates = self._candidates(state)
        results = self._fused_search(state, query, keywords, state.scale_n, candidates)
        present = {c.chunk_id for c in results}
        prepend = [
            g
            for g in self.guaranteed_chunks(state, query, keywords)
            if g.chunk_id not in present
        ]
        return prepend + results

    def _entity(self, state: SessionState, entity: str) -> list[EntityHit]:
        candidates = self._candidates(state)
        hits = self.sparse.entity_match(entity, candidate_filter=candidates)
        out = []
        for hit, snippets in hits:
            doc_id, text = self._lookup(hit.chunk_id)
            out.append(
                EntityHit(
                    chunk_id=hit.chunk_id,
                    doc_id=doc_id,
                    text=text,
                    score=round_score(hit.bm25_score),
                    snippets=tuple(snippets),
                )
            )
        return out

    # -- actions -----------------------------------------------------------

    def execute_action(self, state: SessionState, action: Action) -> tuple[SessionState, ActionResult]:
        if isinstance(action, WeightedFusion):
            if action.w_s < 0 or action.w_e < 0 or action.w_s + action.w_e <= 0:
                raise InvalidParameter("fusion weights must be >= 0 and not both zero")
            state = replace(state, w_s=action.w_s, w_e=action.w_e)
            message = f"fusion weights set to w_s={action.w_s}, w_e={action.w_e}"
            return state, ActionResult("weighted_fusion", "ok", message)

        if isinstance(action, AdjustScale):
            if action.n < 1:
                raise InvalidParameter(f"scale must be >= 1, got {action.n}")
            state = replace(state, scale_n=action.n)
            return state, ActionResult("adjust_scale", "ok", f"retrieval scale set to {action.n}")

        if isinstance(action, IncludeDocs):
            known = [d for d in action.doc_ids if self.corpus.has_document(d)]
            unknown = [d for d in action.doc_ids if not self.corpus.has_document(d)]
            included = list(state.included)
            for d in known:
                if d not in included:
                    included.append(d)
            state = replace(
                state,
                included=tuple(included),
                excluded=state.excluded - set(known),
            )
            message = f"included: {', '.join(known) if known else 'nothing'}"
            if unknown:
                message += f"; unknown doc ids ignored: {', '.join(unknown)}"
            return state, ActionResult("include_docs", "ok", message)

        if isinstance(action, ExcludeDocs):
            known = [d for d in action.doc_ids if self.corpus.has_document(d)]
            unknown = [d for d in action.doc_ids if not self.corpus.has_document(d)]
            state = replace(
                state,
                included=tuple(d for d in state.included if d not in known),
                excluded=state.excluded | set(known),
            )
            message = f"excluded: {', '.join(known) if known else 'nothing'}"
            if unknown:
                message += f"; unknown doc ids ignored: {', '.join(unknown)}"
            return state, ActionResult("exclude_docs", "ok", message)

        if isinstance(action, SemanticSearch):
            results = self._retrieve(state, action.query, None)
            return state, ActionResult("semantic_search", "ok", results=tuple(results))

        if isinstance(action, ExactSearch):
            results = self._retrieve(state, None, action.keywords)
            return state, ActionResult("exact_search", "ok", results=tuple(results))

        if isinstance(action, EntityMatch):
            results = self._entity(state, action.entity)
            return state, ActionResult("entity_match", "ok", results=tuple(results))

        if isinstance(action, Answer):
            state = replace(state, closed=True)
            return state, ActionResult("answer", "ok", "session closed")

        raise ProtocolError(f"not an action: {action!r}")

    # -- suites ------------------------------------------------------------

    def execute_suite(
        self, state: SessionState, actions: list[Action]
    ) -> tuple[SessionState, ToolResponse]:
        """Run one turn's suite: mutations first, then retrievals, one reply.

        Per-action failures become error statuses, never exceptions; the
        rest of the suite still runs.
        """
        if not actions:
            raise ProtocolError("empty action suite")
        if any(isinstance(a, Answer) for a in actions) and len(actions) > 1:
            raise ProtocolError("answer cannot be combined with other actions")
        if state.closed:
            raise ProtocolError("session is closed")

        statuses: list[ActionStatus | None] = [None] * len(actions)
        ordered = sorted(
            range(len(actions)), key=lambda i: 0 if isinstance(actions[i], MUTATION_TYPES) else 1
        )

        scored: list[ScoredChunk] = []
        scored_index: dict[str, int] = {}
        entities: list[EntityHit] = []
        entity_index: dict[str, int] = {}

        for i in ordered:
            try:
                state, result = self.execute_action(state, actions[i])
            except RagloopError as exc:
                statuses[i] = ActionStatus(_wire_name(actions[i]), "error", str(exc))
                continue
            statuses[i] = result.to_status()
            for item in result.results:
                if isinstance(item, ScoredChunk):
                    seen = scored_index.get(item.chunk_id)
                    if seen is None:
                        scored_index[item.chunk_id] = len(scored)
                        scored.append(item)
                    elif item.fused_score > scored[seen].fused_score:
                        scored[seen] = item
                else:
                    seen = entity_index.get(item.chunk_id)
                    if seen is None:
                        entity_index[item.chunk_id] = len(entities)
                        entities.append(item)
                    elif item.score > entities[seen].score:
                        entities[seen] = item

        response = ToolResponse(
            results=tuple(scored) + tuple(entities),
            statuses=tuple(s for s in statuses if s is not None),
            session_echo=state.echo(),
        )
        return state, response


def _wire_name(action: Action) -> str:
    names = {
        SemanticSearch: "semantic_search",
        ExactSearch: "exact_search",
        WeightedFusion: "weighted_fusion",
        EntityMatch: "entity_match",
        IncludeDocs: "include_docs",
        ExcludeDocs: "exclude_docs",
        AdjustScale: "adjust_scale",
        Answer: "answer",
    }
    return names[type(action)]
