"""The end-to-end agent loop.

History grows append-only: each turn the full history is rendered to chat
messages, the client produces assistant text, tool calls are parsed and
executed as one suite, and the response is appended. The loop ends when
the model answers in plain text or the turn cap forces a final answer.
"""

from __future__ import annotations

import json
import re
import time
from dataclasses import dataclass, field, replace

from .engine import CorpusEngine, SessionState
from .errors import ClientError, ProtocolError, TrajectoryAborted
from .prompts import load_prompt
from .protocol import (
    TOOL_CALL_RE,
    Action,
    ActionStatus,
    Answer,
    ParseFailure,
    ToolResponse,
    action_to_wire,
    get_tool_schema_text,
    parse_tool_calls,
    render_tool_response,
    wire_to_action,
)

THINK_RE = re.compile(r"<think>(.*?)</think>", re.DOTALL)

DEFAULT_MAX_TURNS = 7

FINALIZE_PROMPT = (
    "You are out of interaction turns. Give your final answer now as plain text. "
    "Do not call any tools."
)


@dataclass(frozen=True)
class AgentConfig:
    max_turns: int = DEFAULT_MAX_TURNS
    system_prompt_id: str = "agent_system"
    temperature: float | None = None
    top_p: float | None = None


@dataclass
class Step:
    thought: str
    action_suite: list[Action]
    info: ToolResponse | None
    assistant_text: str
    parse_failures: list[ParseFailure] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "thought": self.thought,
            "actions": [_action_record(a) for a in self.action_suite],
            "info": self.info.to_dict() if self.info is not None else None,
            "assistant_text": self.assistant_text,
            "parse_failures": [f.to_dict() for f in self.parse_failures],
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "Step":
        return cls(
            thought=obj["thought"],
            action_suite=[_record_action(a) for a in obj["actions"]],
            info=ToolResponse.from_dict(obj["info"]) if obj["info"] is not None else None,
            assistant_text=obj["assistant_text"],
            parse_failures=[
                ParseFailure(f["block_index"], f["reason"], f["raw"])
                for f in obj["parse_failures"]
            ],
        )


@dataclass
class Trajectory:
    question: str
    steps: list[Step] = field(default_factory=list)
    final_answer: str | None = None
    step_limit: int = DEFAULT_MAX_TURNS

    def to_dict(self) -> dict:
        return {
            "question": self.question,
            "steps": [s.to_dict() for s in self.steps],
            "final_answer": self.final_answer,
            "step_limit": self.step_limit,
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "Trajectory":
        return cls(
            question=obj["question"],
            steps=[Step.from_dict(s) for s in obj["steps"]],
            final_answer=obj["final_answer"],
            step_limit=obj["step_limit"],
        )

    def to_json(self) -> str:
        # Canonical form: sorted keys, no whitespace, ASCII only. Logs built
        # from this compare byte for byte across runs.
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))


def _action_record(action: Action) -> dict:
    if isinstance(action, Answer):
        return {"name": "answer", "arguments": {"text": action.text}}
    return action_to_wire(action)


def _record_action(obj: dict) -> Action:
    if obj.get("name") == "answer":
        return Answer(text=obj["arguments"]["text"])
    return wire_to_action(obj)


def write_trajectory_log(trajectories: list[Trajectory], path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for t in trajectories:
            fh.write(t.to_json() + "\n")


def read_trajectory_log(path: str) -> list[Trajectory]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                out.append(Trajectory.from_dict(json.loads(line)))
    return out


def extract_thought(assistant_text: str) -> str:
    """<think> content when present, else the text before the first tool call."""
    match = THINK_RE.search(assistant_text)
    if match:
        return match.group(1).strip()
    call = TOOL_CALL_RE.search(assistant_text)
    if call:
        return assistant_text[: call.start()].strip()
    return assistant_text.strip()


def extract_answer(assistant_text: str) -> str | None:
    """Plain-text answer, or None if the turn contains tool calls."""
    if TOOL_CALL_RE.search(assistant_text):
        return None
    answer = THINK_RE.sub("", assistant_text).strip()
    return answer or None


def render_messages(
    history: Trajectory, tool_schema_text: str | None = None, system_prompt: str | None = None
) -> list[dict]:
    """Serialize history for a chat client: system, question, then one
    assistant/tool message pair per step (answer steps have no tool reply)."""
    if tool_schema_text is None:
        tool_schema_text = get_tool_schema_text()
    if system_prompt is None:
        system_prompt = load_prompt("agent_system")
    messages = [
        {"role": "system", "content": f"{system_prompt}\n# Tools\n{tool_schema_text}"},
        {"role": "user", "content": history.question},
    ]
    for step in history.steps:
        messages.append({"role": "assistant", "content": step.assistant_text})
        if step.info is not None:
            messages.append({"role": "tool", "content": render_tool_response(step.info)})
    return messages


class ScriptedClient:
    """Deterministic stand-in for a chat model, keyed by call index.

    Each entry is either the reply text or (expected_substring, reply);
    the expectation is asserted against the serialized request so tests
    can pin what the model would have seen.
    """

    deterministic = True

    def __init__(self, replies: list):
        self.replies = list(replies)
        self.requests: list[list[dict]] = []

    def complete(self, messages: list[dict], tools: str | None = None) -> str:
        turn = len(self.requests)
        self.requests.append(messages)
        if turn >= len(self.replies):
            raise ClientError(f"script exhausted after {len(self.replies)} replies")
        entry = self.replies[turn]
        if isinstance(entry, tuple):
            expected, reply = entry
            serialized = json.dumps(messages, ensure_ascii=False)
            if expected not in serialized:
                raise AssertionError(
                    f"turn {turn}: expected {expected!r} in the rendered request"
                )
            return reply
        return entry


class HttpChatClient:
    """OpenAI-compatible chat-completions client with simple backoff."""

    deterministic = False

    def __init__(
        self,
        base_url: str,
        model: str,
        api_key: str | None = None,
        temperature: float | None = None,
        top_p: float | None = None,
        timeout: float = 60.0,
        max_retries: int = 3,
        log_path: str | None = None,
    ):
        self.base_url = base_url.rstrip("/")
        self.model = model
        self.api_key = api_key
        self.temperature = temperature
        self.top_p = top_p
        self.timeout = timeout
        self.max_retries = max_retries
        self.log_path = log_path

    def complete(self, messages: list[dict], tools: str | None = None) -> str:
        import requests

        payload: dict = {"model": self.model, "messages": messages}
        if self.temperature is not None:
            payload["temperature"] = self.temperature
        if self.top_p is not None:
            payload["top_p"] = self.top_p
        headers = {}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"

        last_error: Exception | None = None
        for attempt in range(self.max_retries):
            try:
                resp = requests.post(
                    f"{self.base_url}/chat/completions",
                    json=payload,
                    headers=headers,
                    timeout=self.timeout,
                )
            except requests.RequestException as exc:
                last_error = exc
                time.sleep(2**attempt * 0.5)
                continue
            if resp.status_code >= 500:
                last_error = ClientError(f"server error {resp.status_code}")
                time.sleep(2**attempt * 0.5)
                continue
            if resp.status_code >= 400:
                raise ClientError(f"chat endpoint rejected the request: {resp.status_code}")
            try:
                text = resp.json()["choices"][0]["message"]["content"]
            except (ValueError, KeyError, IndexError) as exc:
                raise ClientError(f"malformed chat response: {exc}") from exc
            self._log(messages, text)
            return text
        raise ClientError(f"chat endpoint unreachable after {self.max_retries} tries: {last_error}")

    def _log(self, messages: list[dict], text: str) -> None:
        if self.log_path is None:
            return
        record = {"request_messages": len(messages), "response": text}
        with open(self.log_path, "a", encoding="utf-8") as fh:
            fh.write(json.dumps(record, ensure_ascii=False) + "\n")


def run_agent(
    question: str,
    client,
    engine: CorpusEngine,
    config: AgentConfig | None = None,
    session: SessionState | None = None,
) -> Trajectory:
    """Drive one episode to an answer.

    Turn cap exceeded without an answer triggers one extra completion with
    tools disabled, so the trajectory never ends answerless by default.
    Two consecutive empty turns (no tool call, no answer) abort.
    """
    config = config or AgentConfig()
    state = session or engine.new_session()
    schema_text = get_tool_schema_text()
    system_prompt = load_prompt(config.system_prompt_id)
    trajectory = Trajectory(question=question, step_limit=config.max_turns)
    no_action_streak = 0

    for _ in range(config.max_turns):
        messages = render_messages(trajectory, schema_text, system_prompt)
        try:
            text = client.complete(messages, schema_text)
        except ClientError as exc:
            raise TrajectoryAborted(f"client failure: {exc}", trajectory=trajectory) from exc
        thought = extract_thought(text)
        actions, failures = parse_tool_calls(text)
        answer = extract_answer(text)

        if not actions and not failures:
            if answer is not None:
                trajectory.steps.append(Step(thought, [Answer(answer)], None, text))
                trajectory.final_answer = answer
                return trajectory
            no_action_streak += 1
            if no_action_streak >= 2:
                trajectory.steps.append(Step(thought, [], None, text))
                raise TrajectoryAborted(
                    "no action and no answer twice in a row", trajectory=trajectory
                )
            info = ToolResponse(
                statuses=(
                    ActionStatus(
                        "none", "error", "no tool call and no answer; call a tool or answer"
                    ),
                ),
                session_echo=state.echo(),
            )
            trajectory.steps.append(Step(thought, [], info, text))
            continue

        no_action_streak = 0
        if actions:
            try:
                state, info = engine.execute_suite(state, actions)
            except ProtocolError as exc:
                info = ToolResponse(
                    statuses=(ActionStatus("suite", "error", str(exc)),),
                    session_echo=state.echo(),
                )
        else:
            info = ToolResponse(session_echo=state.echo())
        if failures:
            failure_statuses = tuple(
                ActionStatus("tool_call", "error", f"block {f.block_index}: {f.reason}")
                for f in failures
            )
            info = replace(info, statuses=info.statuses + failure_statuses)
        trajectory.steps.append(Step(thought, list(actions), info, text, list(failures)))

    # Forced finalization: one last completion, tools off.
    messages = render_messages(trajectory, schema_text, system_prompt)
    messages.append({"role": "user", "content": FINALIZE_PROMPT})
    try:
        text = client.complete(messages, None)
    except ClientError as exc:
        raise TrajectoryAborted(f"client failure: {exc}", trajectory=trajectory) from exc
    cleaned = TOOL_CALL_RE.sub("", text)
    answer = extract_answer(cleaned)
    suite: list[Action] = [Answer(answer)] if answer is not None else []
    trajectory.steps.append(Step(extract_thought(text), suite, None, text))
    trajectory.final_answer = answer
    return trajectory
