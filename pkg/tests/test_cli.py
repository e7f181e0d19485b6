import json
from pathlib import Path

import pytest

from ragloop.agent import read_trajectory_log
from ragloop.cli import main

DATA_DIR = Path(__file__).parent / "data"

ENTITY_CALL = (
    "<think>pin the film</think>\n"
    '<tool_call>\n{"name": "entity_match", "arguments": {"entity": "The Jaws of Death"}}\n'
    "</tool_call>"
)


@pytest.fixture(scope="module")
def index_dir(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    corpus = str(root / "corpus")
    assert main(
        [
            "ingest",
            "--source",
            str(DATA_DIR / "toy_corpus.jsonl"),
            "--out",
            corpus,
            "--target-words",
            "25",
        ]
    ) == 0
    assert main(["build-index", "--corpus", corpus]) == 0
    return corpus


def test_ingest_reports_counts(tmp_path, capsys):
    out = str(tmp_path / "corpus")
    code = main(
        [
            "ingest",
            "--source",
            str(DATA_DIR / "toy_corpus.jsonl"),
            "--out",
            out,
            "--target-words",
            "25",
        ]
    )
    assert code == 0
    printed = capsys.readouterr().out
    assert "10 documents" in printed
    assert "12 chunks" in printed


def test_search_exact(index_dir, capsys):
    code = main(
        [
            "search",
            "--index",
            index_dir,
            "--mode",
            "exact",
            "--query",
            "white sharks seals",
            "-k",
            "3",
        ]
    )
    assert code == 0
    out = capsys.readouterr().out
    assert out.splitlines()[0].startswith("white_sharks#0")


def test_search_no_results(index_dir, capsys):
    code = main(
        ["search", "--index", index_dir, "--mode", "exact", "--query", "zzzqqq"]
    )
    assert code == 0
    assert "(no results)" in capsys.readouterr().out


def test_search_fused_mode(index_dir, capsys):
    code = main(
        ["search", "--index", index_dir, "--query", "The Jaws of Death 1976 film"]
    )
    assert code == 0
    assert "fused=" in capsys.readouterr().out


def test_run_agent_scripted(index_dir, tmp_path, capsys):
    script = tmp_path / "script.json"
    script.write_text(json.dumps([["Jaws of Death", ENTITY_CALL], "1976"]))
    log = tmp_path / "trajectory.jsonl"
    code = main(
        [
            "run-agent",
            "--question",
            "When was The Jaws of Death released?",
            "--index",
            index_dir,
            "--script",
            str(script),
            "--out",
            str(log),
        ]
    )
    assert code == 0
    out = capsys.readouterr().out
    assert "step 1: EntityMatch" in out
    assert "final answer: '1976'" in out

    trajectories = read_trajectory_log(str(log))
    assert len(trajectories) == 1
    assert trajectories[0].final_answer == "1976"


def test_run_workflow_scripted(index_dir, tmp_path, capsys):
    script = tmp_path / "script.json"
    replies = [
        "Analysis: find the year.\nPrimary Plan:\n1. Locate the film's release year",
        "PROCEED: look up the film",
        ENTITY_CALL,
        "CONCLUDE: the film is from 1976",
        "1976",
    ]
    script.write_text(json.dumps(replies))
    code = main(
        [
            "run-workflow",
            "--question",
            "When was The Jaws of Death released?",
            "--index",
            index_dir,
            "--script",
            str(script),
        ]
    )
    assert code == 0
    assert "final answer: '1976'" in capsys.readouterr().out


def test_reward_command(index_dir, tmp_path, capsys):
    question = "When was The Jaws of Death released?"
    script = tmp_path / "script.json"
    script.write_text(json.dumps([ENTITY_CALL, "1976"]))
    log = tmp_path / "trajectory.jsonl"
    assert main(
        [
            "run-agent",
            "--question",
            question,
            "--index",
            index_dir,
            "--script",
            str(script),
            "--out",
            str(log),
        ]
    ) == 0
    capsys.readouterr()

    gold = tmp_path / "gold.jsonl"
    gold.write_text(json.dumps({"question": question, "answers": ["1976"]}) + "\n")
    assert main(["reward", "--trajectories", str(log), "--gold", str(gold)]) == 0
    out = capsys.readouterr().out
    assert "totals: reward 1: 1" in out


def test_evaluate_command_scripted(index_dir, tmp_path, capsys):
    dataset = tmp_path / "qa.jsonl"
    dataset.write_text(
        json.dumps(
            {"question": "When was The Jaws of Death released?", "answers": ["1976"]}
        )
        + "\n"
    )
    script = tmp_path / "script.json"
    script.write_text(json.dumps([ENTITY_CALL, "1976"]))
    code = main(
        [
            "evaluate",
            "--dataset",
            str(dataset),
            "--index",
            index_dir,
            "--script",
            str(script),
            "--format",
            "csv",
        ]
    )
    assert code == 0
    out = capsys.readouterr().out
    assert out.startswith("dataset,")
    assert "100.0" in out


def test_missing_index_is_an_error(tmp_path, capsys):
    code = main(
        ["search", "--index", str(tmp_path / "nowhere"), "--query", "anything"]
    )
    assert code == 2
    assert capsys.readouterr().err.startswith("error:")


def test_bad_config_is_an_error(index_dir, tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"no_such_key": 1}))
    code = main(
        ["--config", str(cfg), "search", "--index", index_dir, "--query", "x"]
    )
    assert code == 2
    assert "unknown config keys: no_such_key" in capsys.readouterr().err


def test_no_client_configured(index_dir, capsys):
    code = main(["run-agent", "--question", "q", "--index", index_dir])
    assert code == 2
    assert "no chat client configured" in capsys.readouterr().err
