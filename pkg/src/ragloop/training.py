"""Trajectory post-processing: validity, reward, filtering, SFT export,
and group-relative advantage. Everything here is a pure function."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

from .agent import Trajectory, render_messages
from .errors import ExportError, GroupTooSmall, InvalidParameter
from .evalqa import exact_match
from .protocol import Answer

ADVANTAGE_EPS = 1e-8


@dataclass(frozen=True)
class TrajectoryVerdict:
    valid: bool
    violations: tuple[tuple[int, str, str], ...]  # (step_index, rule_id, description)


@dataclass(frozen=True)
class RewardBreakdown:
    base: int
    validity_bonus: int
    answer_bonus: int
    total: int


@dataclass(frozen=True)
class SftRecord:
    messages: tuple[dict, ...]
    loss_mask: tuple[bool, ...]  # True = train on this message

    def to_dict(self) -> dict:
        return {"messages": list(self.messages), "loss_mask": list(self.loss_mask)}


def validate_trajectory(trajectory: Trajectory) -> TrajectoryVerdict:
    """Syntactic validity of a whole episode.

    Checks: non-empty thoughts, clean tool syntax on every non-final step,
    a final answer step, no answer mixed into a suite, and the turn cap.
    """
    violations: list[tuple[int, str, str]] = []
    steps = trajectory.steps
    last = len(steps) - 1

    for i, step in enumerate(steps):
        if not step.thought.strip():
            violations.append((i, "empty-thought", "step has no reasoning text"))
        answers = [a for a in step.action_suite if isinstance(a, Answer)]
        others = [a for a in step.action_suite if not isinstance(a, Answer)]
        if answers and others:
            violations.append((i, "answer-mixed", "answer combined with other actions"))
        if i < last:
            if step.parse_failures:
                violations.append((i, "bad-tool-syntax", step.parse_failures[0].reason))
            if not step.action_suite:
                violations.append((i, "no-action", "non-final step has no actions"))
            if answers:
                violations.append((i, "answer-before-final", "answer on a non-final step"))

    if not steps:
        violations.append((0, "no-final-answer", "trajectory has no steps"))
    else:
        final = steps[last]
        final_answers = [a for a in final.action_suite if isinstance(a, Answer)]
        if not final_answers or trajectory.final_answer is None:
            violations.append((last, "no-final-answer", "final step is not an answer"))

    if len(steps) > trajectory.step_limit + 1:
        violations.append(
            (
                last if steps else 0,
                "turn-cap",
                f"{len(steps)} steps exceed cap {trajectory.step_limit} + 1",
            )
        )

    return TrajectoryVerdict(valid=not violations, violations=tuple(violations))


def reward(trajectory: Trajectory, gold_answers: list[str]) -> RewardBreakdown:
    """-1 base, +1 for a valid trajectory, +1 for a correct answer -- the
    answer bonus is gated on validity, so totals land in {-1, 0, 1}."""
    if not gold_answers:
        raise InvalidParameter("gold_answers must be non-empty")
    verdict = validate_trajectory(trajectory)
    validity_bonus = 1 if verdict.valid else 0
    answer_bonus = 0
    if verdict.valid and trajectory.final_answer is not None:
        answer_bonus = exact_match(trajectory.final_answer, gold_answers)
    return RewardBreakdown(
        base=-1,
        validity_bonus=validity_bonus,
        answer_bonus=answer_bonus,
        total=-1 + validity_bonus + answer_bonus,
    )


def filter_trajectories(pairs: list[tuple[Trajectory, list[str]]]) -> list[Trajectory]:
    """Keep only fully successful episodes (reward total 1), order preserved."""
    return [t for t, gold in pairs if reward(t, gold).total == 1]


def export_sft(trajectory: Trajectory) -> SftRecord:
    """Render a valid trajectory to chat messages with a per-message mask:
    assistant turns are trained, everything else (including every
    tool_response) is masked out."""
    verdict = validate_trajectory(trajectory)
    if not verdict.valid:
        first = verdict.violations[0]
        raise ExportError(f"trajectory invalid at step {first[0]}: {first[1]}")
    messages = render_messages(trajectory)
    mask = tuple(m["role"] == "assistant" for m in messages)
    return SftRecord(messages=tuple(messages), loss_mask=mask)


def export_sft_file(trajectories: list[Trajectory], path: str) -> int:
    count = 0
    with open(path, "w", encoding="utf-8") as fh:
        for t in trajectories:
            record = export_sft(t)
            fh.write(json.dumps(record.to_dict(), ensure_ascii=False) + "\n")
            count += 1
    return count


def group_advantage(rewards: list[float]) -> list[float]:
    """Standardize rewards within one sampled group: (r - mean) / (std + eps)
    with population std. All-equal groups map to all zeros."""
    if len(rewards) < 2:
        raise GroupTooSmall(f"need at least 2 rewards, got {len(rewards)}")
    n = len(rewards)
    mean = sum(rewards) / n
    std = math.sqrt(sum((r - mean) ** 2 for r in rewards) / n)
    return [(r - mean) / (std + ADVANTAGE_EPS) for r in rewards]


def make_reward_report(pairs: list[tuple[Trajectory, list[str]]]) -> str:
    """Per-trajectory breakdown table plus totals."""
    lines = ["idx  valid  answer_ok  total  final_answer"]
    totals = {-1: 0, 0: 0, 1: 0}
    for i, (t, gold) in enumerate(pairs):
        b = reward(t, gold)
        totals[b.total] += 1
        answer = (t.final_answer or "")[:50]
        lines.append(
            f"{i:<4d} {b.validity_bonus:<6d} {b.answer_bonus:<10d} {b.total:<6d} {answer}"
        )
    lines.append(f"totals: reward 1: {totals[1]}, reward 0: {totals[0]}, reward -1: {totals[-1]}")
    return "\n".join(lines)
