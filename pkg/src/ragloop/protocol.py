"""Wire types for the tool-calling protocol.

Assistant turns carry actions as JSON objects inside <tool_call> tags; the
engine replies inside <tool_response> tags. Parsing is defensive: a bad
block becomes a ParseFailure value for the caller to report back to the
model, never an exception.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from importlib import resources

from .errors import ProtocolError

TOOL_CALL_RE = re.compile(r"<tool_call>(.*?)</tool_call>", re.DOTALL)
TOOL_RESPONSE_RE = re.compile(r"<tool_response>(.*?)</tool_response>", re.DOTALL)

SCORE_DECIMALS = 4


@dataclass(frozen=True)
class SemanticSearch:
    query: str


@dataclass(frozen=True)
class ExactSearch:
    keywords: str


@dataclass(frozen=True)
class WeightedFusion:
    w_s: float
    w_e: float


@dataclass(frozen=True)
class EntityMatch:
    entity: str


@dataclass(frozen=True)
class IncludeDocs:
    doc_ids: tuple[str, ...]


@dataclass(frozen=True)
class ExcludeDocs:
    doc_ids: tuple[str, ...]


@dataclass(frozen=True)
class AdjustScale:
    n: int


@dataclass(frozen=True)
class Answer:
    text: str


Action = (
    SemanticSearch
    | ExactSearch
    | WeightedFusion
    | EntityMatch
    | IncludeDocs
    | ExcludeDocs
    | AdjustScale
    | Answer
)

PRIMITIVE_NAMES = (
    "semantic_search",
    "exact_search",
    "weighted_fusion",
    "entity_match",
    "include_docs",
    "exclude_docs",
    "adjust_scale",
)


@dataclass(frozen=True)
class ParseFailure:
    block_index: int
    reason: str
    raw: str

    def to_dict(self) -> dict:
        return {"block_index": self.block_index, "reason": self.reason, "raw": self.raw}


def _is_number(value) -> bool:
    return isinstance(value, (int, float)) and not isinstance(value, bool)


def _as_doc_ids(value) -> tuple[str, ...]:
    if isinstance(value, str):
        return (value,)
    if isinstance(value, list) and all(isinstance(v, str) for v in value):
        return tuple(value)
    raise ValueError("doc_ids must be a list of strings")


def action_to_wire(action: Action) -> dict:
    if isinstance(action, SemanticSearch):
        return {"name": "semantic_search", "arguments": {"query": action.query}}
    if isinstance(action, ExactSearch):
        return {"name": "exact_search", "arguments": {"keywords": action.keywords}}
    if isinstance(action, WeightedFusion):
        return {"name": "weighted_fusion", "arguments": {"w_s": action.w_s, "w_e": action.w_e}}
    if isinstance(action, EntityMatch):
        return {"name": "entity_match", "arguments": {"entity": action.entity}}
    if isinstance(action, IncludeDocs):
        return {"name": "include_docs", "arguments": {"doc_ids": list(action.doc_ids)}}
    if isinstance(action, ExcludeDocs):
        return {"name": "exclude_docs", "arguments": {"doc_ids": list(action.doc_ids)}}
    if isinstance(action, AdjustScale):
        return {"name": "adjust_scale", "arguments": {"n": action.n}}
    if isinstance(action, Answer):
        raise ProtocolError("answers are plain assistant text, not tool calls")
    raise ProtocolError(f"not an action: {action!r}")


def wire_to_action(obj) -> Action:
    """Convert one parsed tool-call object into an Action; raises ValueError."""
    if not isinstance(obj, dict):
        raise ValueError("tool call is not an object")
    name = obj.get("name")
    if not isinstance(name, str):
        raise ValueError("missing tool name")
    args = obj.get("arguments", {})
    if isinstance(args, str):
        # Some models double-encode arguments.
        try:
            args = json.loads(args)
        except json.JSONDecodeError:
            raise ValueError("arguments is not valid JSON") from None
    if not isinstance(args, dict):
        raise ValueError("arguments is not an object")

    if name == "semantic_search":
        query = args.get("query")
        if not isinstance(query, str):
            raise ValueError("semantic_search requires a string 'query'")
        return SemanticSearch(query=query)
    if name == "exact_search":
        keywords = args.get("keywords")
        if not isinstance(keywords, str):
            raise ValueError("exact_search requires a string 'keywords'")
        return ExactSearch(keywords=keywords)
    if name == "weighted_fusion":
        w_s, w_e = args.get("w_s"), args.get("w_e")
        if not (_is_number(w_s) and _is_number(w_e)):
            raise ValueError("weighted_fusion requires numeric 'w_s' and 'w_e'")
        return WeightedFusion(w_s=float(w_s), w_e=float(w_e))
    if name == "entity_match":
        entity = args.get("entity")
        if not isinstance(entity, str):
            raise ValueError("entity_match requires a string 'entity'")
        return EntityMatch(entity=entity)
    if name == "include_docs":
        return IncludeDocs(doc_ids=_as_doc_ids(args.get("doc_ids")))
    if name == "exclude_docs":
        return ExcludeDocs(doc_ids=_as_doc_ids(args.get("doc_ids")))
    if name == "adjust_scale":
        n = args.get("n")
        if _is_number(n) and float(n).is_integer():
            return AdjustScale(n=int(n))
        raise ValueError("adjust_scale requires an integer 'n'")
    raise ValueError(f"unknown tool {name!r}")


def render_tool_calls(actions: list[Action]) -> str:
    blocks = []
    for action in actions:
        payload = json.dumps(action_to_wire(action), ensure_ascii=False)
        blocks.append(f"<tool_call>\n{payload}\n</tool_call>")
    return "\n".join(blocks)


def parse_tool_calls(assistant_text: str) -> tuple[list[Action], list[ParseFailure]]:
    """Extract every <tool_call> block in document order.

    Returns (actions, failures); a malformed block lands in failures with
    its block index so the two streams can be re-interleaved.
    """
    actions: list[Action] = []
    failures: list[ParseFailure] = []
    for index, match in enumerate(TOOL_CALL_RE.finditer(assistant_text)):
        raw = match.group(1).strip()
        try:
            obj = json.loads(raw)
        except json.JSONDecodeError as exc:
            failures.append(ParseFailure(index, f"invalid JSON: {exc.msg}", raw))
            continue
        try:
            actions.append(wire_to_action(obj))
        except ValueError as exc:
            failures.append(ParseFailure(index, str(exc), raw))
    return actions, failures


def round_score(value: float) -> float:
    return round(value, SCORE_DECIMALS)


@dataclass(frozen=True)
class ScoredChunk:
    chunk_id: str
    doc_id: str
    text: str
    semantic_score: float | None
    exact_score: float | None
    fused_score: float
    provenance: tuple[str, ...]

    def to_dict(self) -> dict:
        return {
            "kind": "scored",
            "chunk_id": self.chunk_id,
            "doc_id": self.doc_id,
            "text": self.text,
            "semantic_score": self.semantic_score,
            "exact_score": self.exact_score,
            "fused_score": self.fused_score,
            "provenance": list(self.provenance),
        }


@dataclass(frozen=True)
class EntityHit:
    chunk_id: str
    doc_id: str
    text: str
    score: float
    snippets: tuple[str, ...]

    def to_dict(self) -> dict:
        return {
            "kind": "entity",
            "chunk_id": self.chunk_id,
            "doc_id": self.doc_id,
            "text": self.text,
            "score": self.score,
            "snippets": list(self.snippets),
        }


def _result_from_dict(obj: dict) -> ScoredChunk | EntityHit:
    kind = obj.get("kind")
    if kind == "scored":
        return ScoredChunk(
            chunk_id=obj["chunk_id"],
            doc_id=obj["doc_id"],
            text=obj["text"],
            semantic_score=obj["semantic_score"],
            exact_score=obj["exact_score"],
            fused_score=obj["fused_score"],
            provenance=tuple(obj["provenance"]),
        )
    if kind == "entity":
        return EntityHit(
            chunk_id=obj["chunk_id"],
            doc_id=obj["doc_id"],
            text=obj["text"],
            score=obj["score"],
            snippets=tuple(obj["snippets"]),
        )
    raise ProtocolError(f"unknown result kind {kind!r}")


@dataclass(frozen=True)
class ActionStatus:
    action_name: str
    status: str  # "ok" or "error"
    message: str = ""

    def to_dict(self) -> dict:
        return {"action": self.action_name, "status": self.status, "message": self.message}

    @classmethod
    def from_dict(cls, obj: dict) -> "ActionStatus":
        return cls(action_name=obj["action"], status=obj["status"], message=obj.get("message", ""))


@dataclass(frozen=True)
class ToolResponse:
    """One consolidated reply per suite: merged results plus per-action status."""

    results: tuple = ()
    statuses: tuple[ActionStatus, ...] = ()
    session_echo: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        payload = {
            "results": [r.to_dict() for r in self.results],
            "statuses": [s.to_dict() for s in self.statuses],
            "session": self.session_echo,
        }
        if not self.results:
            payload["note"] = "no results"
        return payload

    @classmethod
    def from_dict(cls, obj: dict) -> "ToolResponse":
        return cls(
            results=tuple(_result_from_dict(r) for r in obj["results"]),
            statuses=tuple(ActionStatus.from_dict(s) for s in obj["statuses"]),
            session_echo=obj["session"],
        )


def render_tool_response(response: ToolResponse) -> str:
    payload = json.dumps(response.to_dict(), ensure_ascii=False, sort_keys=True)
    return f"<tool_response>\n{payload}\n</tool_response>"


def parse_tool_response(text: str) -> ToolResponse:
    match = TOOL_RESPONSE_RE.search(text)
    if match is None:
        raise ProtocolError("no <tool_response> block found")
    try:
        obj = json.loads(match.group(1).strip())
    except json.JSONDecodeError as exc:
        raise ProtocolError(f"tool response is not valid JSON: {exc.msg}") from exc
    try:
        return ToolResponse.from_dict(obj)
    except (KeyError, TypeError) as exc:
        raise ProtocolError(f"malformed tool response: {exc}") from exc


_schema_text_cache: str | None = None


def get_tool_schema_text() -> str:
    """The versioned tool schema document, verbatim, for chat clients."""
    global _schema_text_cache
    if _schema_text_cache is None:
        _schema_text_cache = (
            resources.files("ragloop").joinpath("assets/tool_schema.json").read_text("utf-8")
        )
    return _schema_text_cache


def get_tool_schema() -> dict:
    return json.loads(get_tool_schema_text())
