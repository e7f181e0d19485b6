"""Training-free planner / reasoner / executor decomposition.

One planning call fixes a numbered sub-task list; a control loop then
alternates reasoner directives (proceed, refine, conclude) with executor
tool calls. Output is the same Trajectory type the end-to-end agent
produces, so reward and export tooling is shared.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from .agent import Step, Trajectory, extract_answer, extract_thought
from .engine import CorpusEngine, SessionState
from .errors import ClientError, PlanningError, ProtocolError, TrajectoryAborted
from .prompts import load_prompt
from .protocol import (
    ActionStatus,
    Answer,
    ToolResponse,
    get_tool_schema_text,
    parse_tool_calls,
    render_tool_response,
)

DEFAULT_MAX_ITERATIONS = 12

# Executor hard limit: calls beyond this are dropped with a warning.
EXECUTOR_CALL_LIMIT = 2

# Refines allowed on one sub-task before the loop moves on regardless.
ATTEMPT_CAP = 3

NUMBERED_LINE_RE = re.compile(r"^\s*(\d+)[.)]\s*(.+?)\s*$")
PARALLEL_MARK = "[parallel]"
REVISED_PLAN_MARK = "REVISED PLAN:"


@dataclass(frozen=True)
class PrimaryPlan:
    analysis: str
    steps: tuple[str, ...]
    parallel_groups: tuple[tuple[int, ...], ...] = ()


@dataclass(frozen=True)
class Proceed:
    objective: str
    analysis: str = ""


@dataclass(frozen=True)
class Conclude:
    summary: str
    analysis: str = ""


@dataclass(frozen=True)
class ReflectRefine:
    diagnosis: str
    refined_strategy: str
    analysis: str = ""


Directive = Proceed | Conclude | ReflectRefine


@dataclass
class WorkflowState:
    plan: PrimaryPlan
    current_step_index: int = 0
    attempts_on_current_step: int = 0
    step_attempted: bool = False
    history: Trajectory = field(default_factory=lambda: Trajectory(question=""))


@dataclass(frozen=True)
class WorkflowConfig:
    max_iterations: int = DEFAULT_MAX_ITERATIONS


@dataclass(frozen=True)
class StepOutcome:
    failed: bool = False
    answer: str | None = None


def _parse_numbered_list(text: str) -> list[str]:
    return [m.group(2) for line in text.splitlines() if (m := NUMBERED_LINE_RE.match(line))]


def _parse_plan(text: str) -> PrimaryPlan | None:
    lower = text.lower()
    marker = lower.find("primary plan:")
    if marker < 0:
        return None
    head, tail = text[:marker], text[marker + len("primary plan:") :]
    raw_steps = _parse_numbered_list(tail)
    if not raw_steps:
        return None

    steps: list[str] = []
    parallel_flags: list[bool] = []
    for raw in raw_steps:
        flagged = PARALLEL_MARK in raw
        steps.append(raw.replace(PARALLEL_MARK, "").strip())
        parallel_flags.append(flagged)

    # Adjacent [parallel]-marked steps form one group.
    groups: list[tuple[int, ...]] = []
    run: list[int] = []
    for i, flagged in enumerate(parallel_flags):
        if flagged:
            run.append(i)
        elif run:
            groups.append(tuple(run))
            run = []
    if run:
        groups.append(tuple(run))
    groups = [g for g in groups if len(g) > 1]

    analysis = head
    match = re.search(r"analysis:\s*", head, re.IGNORECASE)
    if match:
        analysis = head[match.end() :]
    return PrimaryPlan(
        analysis=analysis.strip(), steps=tuple(steps), parallel_groups=tuple(groups)
    )


def plan(question: str, client) -> PrimaryPlan:
    """One planning completion; unparseable output is retried once."""
    messages = [
        {"role": "system", "content": load_prompt("planner")},
        {"role": "user", "content": f"Question: {question}"},
    ]
    last = ""
    for _ in range(2):
        last = client.complete(messages, None)
        parsed = _parse_plan(last)
        if parsed is not None:
            return parsed
    raise PlanningError(f"planner output has no numbered plan: {last[:200]!r}")


def _group_for(plan_: PrimaryPlan, index: int) -> tuple[int, ...]:
    for group in plan_.parallel_groups:
        if index in group:
            return group
    return (index,)


def _render_state(question: str, state: WorkflowState) -> str:
    lines = [f"Question: {question}", "Plan:"]
    for i, step in enumerate(state.plan.steps):
        if i < state.current_step_index:
            tag = "done"
        elif i == state.current_step_index:
            tag = "focus"
        else:
            tag = "pending"
        lines.append(f"{i + 1}. [{tag}] {step}")
    lines.append(f"Attempts on focused sub-task: {state.attempts_on_current_step}")
    lines.append("History:")
    if not state.history.steps:
        lines.append("(nothing retrieved yet)")
    for i, step in enumerate(state.history.steps):
        lines.append(f"--- turn {i + 1} ---")
        if step.thought:
            lines.append(f"thought: {step.thought}")
        if step.info is not None:
            lines.append(render_tool_response(step.info))
    return "\n".join(lines)


def _apply_revision(state: WorkflowState, text: str) -> None:
    marker = text.find(REVISED_PLAN_MARK)
    if marker < 0:
        return
    revised = _parse_numbered_list(text[marker + len(REVISED_PLAN_MARK) :])
    if not revised:
        return
    # Revision replaces the steps after the one in focus; done work stays.
    keep = state.plan.steps[: state.current_step_index + 1]
    state.plan = PrimaryPlan(
        analysis=state.plan.analysis, steps=keep + tuple(revised), parallel_groups=()
    )


def _advance(state: WorkflowState) -> None:
    group = _group_for(state.plan, state.current_step_index)
    state.current_step_index = max(group) + 1
    state.attempts_on_current_step = 0
    state.step_attempted = False


def reason_step(question: str, state: WorkflowState, client) -> Directive:
    """One reasoner completion, classified by its leading directive keyword."""
    messages = [
        {"role": "system", "content": load_prompt("reasoner")},
        {"role": "user", "content": _render_state(question, state)},
    ]
    text = client.complete(messages, None)
    _apply_revision(state, text)

    first = next((line.strip() for line in text.splitlines() if line.strip()), "")
    upper = first.upper()
    rest = first.split(":", 1)[1].strip() if ":" in first else ""
    body = text.strip()

    if upper.startswith("PROCEED"):
        return Proceed(objective=rest or _focus_text(state), analysis=body)
    if upper.startswith("CONCLUDE"):
        return Conclude(summary=rest or body, analysis=body)
    if upper.startswith("REFINE"):
        directive = ReflectRefine(diagnosis=rest or "unstated", refined_strategy=body, analysis=body)
    else:
        directive = ReflectRefine(diagnosis="unparseable", refined_strategy=body, analysis=body)

    if state.attempts_on_current_step >= ATTEMPT_CAP:
        # Cap reached: the refine becomes an advance.
        _advance(state)
        if state.current_step_index >= len(state.plan.steps):
            return Conclude(summary="attempt budget exhausted; answer from gathered evidence")
        return Proceed(objective=_focus_text(state), analysis=directive.analysis)
    state.attempts_on_current_step += 1
    return directive


def _focus_text(state: WorkflowState) -> str:
    group = _group_for(state.plan, state.current_step_index)
    if len(group) > 1:
        joined = "; ".join(state.plan.steps[i] for i in group)
        return f"In parallel: {joined}"
    if state.current_step_index < len(state.plan.steps):
        return state.plan.steps[state.current_step_index]
    return "Verify the gathered evidence answers the question."


def _conclude_answer(question: str, directive: Conclude, client) -> str | None:
    messages = [
        {"role": "system", "content": load_prompt("workflow_answer")},
        {
            "role": "user",
            "content": f"Question: {question}\nResearch summary: {directive.summary}",
        },
    ]
    text = client.complete(messages, None)
    return extract_answer(text)


def execute_directive(
    question: str,
    directive: Directive,
    state: WorkflowState,
    client,
    engine: CorpusEngine,
    session: SessionState,
) -> tuple[SessionState, StepOutcome]:
    """Turn a directive into trajectory progress.

    Conclude produces the final answer; Proceed / ReflectRefine produce one
    executor turn of at most 2 tool calls run as a suite.
    """
    if isinstance(directive, Conclude):
        answer = _conclude_answer(question, directive, client)
        suite = [Answer(answer)] if answer is not None else []
        thought = directive.summary or directive.analysis or "concluding"
        state.history.steps.append(Step(thought, suite, None, answer or ""))
        state.history.final_answer = answer
        return session, StepOutcome(answer=answer)

    objective = (
        directive.objective if isinstance(directive, Proceed) else directive.refined_strategy
    )
    if isinstance(directive, Proceed) and state.step_attempted:
        _advance(state)
        objective = directive.objective or _focus_text(state)
    schema_text = get_tool_schema_text()
    messages = [
        {"role": "system", "content": f"{load_prompt('executor')}\n# Tools\n{schema_text}"},
        {"role": "user", "content": f"Question: {question}\nObjective: {objective}"},
    ]
    text = client.complete(messages, schema_text)
    actions, failures = parse_tool_calls(text)

    dropped = len(actions) - EXECUTOR_CALL_LIMIT
    actions = actions[:EXECUTOR_CALL_LIMIT]
    extra_statuses: list[ActionStatus] = []
    if dropped > 0:
        extra_statuses.append(
            ActionStatus("suite", "error", f"call limit: dropped {dropped} extra call(s)")
        )
    for f in failures:
        extra_statuses.append(
            ActionStatus("tool_call", "error", f"block {f.block_index}: {f.reason}")
        )

    failed = not actions
    if actions:
        try:
            session, info = engine.execute_suite(session, actions)
        except ProtocolError as exc:
            info = ToolResponse(
                statuses=(ActionStatus("suite", "error", str(exc)),),
                session_echo=session.echo(),
            )
            failed = True
    else:
        info = ToolResponse(session_echo=session.echo())
    if extra_statuses:
        info = ToolResponse(
            results=info.results,
            statuses=info.statuses + tuple(extra_statuses),
            session_echo=info.session_echo,
        )

    thought = extract_thought(text) or objective
    state.history.steps.append(Step(thought, list(actions), info, text, list(failures)))
    state.step_attempted = True
    if failed:
        state.attempts_on_current_step += 1
    return session, StepOutcome(failed=failed)


def run_workflow(
    question: str,
    client,
    engine: CorpusEngine,
    config: WorkflowConfig | None = None,
    session: SessionState | None = None,
) -> Trajectory:
    """Plan once, then loop reason -> execute until conclude or the cap."""
    config = config or WorkflowConfig()
    session = session or engine.new_session()

    try:
        primary = plan(question, client)
    except ClientError as exc:
        raise TrajectoryAborted(
            f"client failure during planning: {exc}", trajectory=Trajectory(question=question)
        ) from exc

    state = WorkflowState(
        plan=primary,
        history=Trajectory(question=question, step_limit=config.max_iterations + 1),
    )

    try:
        for _ in range(config.max_iterations):
            directive = reason_step(question, state, client)
            session, outcome = execute_directive(
                question, directive, state, client, engine, session
            )
            if isinstance(directive, Conclude):
                return state.history
        # Cap exhausted: force a conclusion from whatever was gathered.
        forced = Conclude(summary="iteration budget exhausted; answer from gathered evidence")
        execute_directive(question, forced, state, client, engine, session)
        return state.history
    except ClientError as exc:
        raise TrajectoryAborted(f"client failure: {exc}", trajectory=state.history) from exc
