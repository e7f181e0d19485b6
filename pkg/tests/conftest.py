import json
import re
from pathlib import Path

import pytest

from ragloop.corpus import CorpusStore, Document
from ragloop.engine import CorpusEngine

DATA_DIR = Path(__file__).parent / "data"

# Toy corpus chunk target. The document texts are written against this
# value; changing it changes chunk boundaries and breaks the frozen logs.
TOY_TARGET_WORDS = 25


def load_toy_documents() -> list[Document]:
    lines = (DATA_DIR / "toy_corpus.jsonl").read_text(encoding="utf-8").splitlines()
    return [Document(**json.loads(line)) for line in lines if line.strip()]


@pytest.fixture(scope="session")
def toy_corpus() -> CorpusStore:
    return CorpusStore.from_documents(load_toy_documents(), target_words=TOY_TARGET_WORDS)


@pytest.fixture(scope="session")
def toy_engine(toy_corpus) -> CorpusEngine:
    # Shared across tests; sessions are immutable values so this is safe
    # as long as nobody monkeypatches the engine itself.
    return CorpusEngine.build(toy_corpus)


# -- acceptance summary ------------------------------------------------------
# Tests named test_criterion_NN_label roll up into one PASS/FAIL line each,
# printed after the run.

_CRITERION_RE = re.compile(r"test_criterion_(\d+)_(\w+)")
_criteria: dict[int, dict] = {}


def _record(item, passed: bool) -> None:
    match = _CRITERION_RE.match(item.name)
    if not match:
        return
    num = int(match.group(1))
    entry = _criteria.setdefault(num, {"label": match.group(2), "passed": True})
    entry["passed"] = entry["passed"] and passed


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    if report.when == "call" or (report.when == "setup" and report.failed):
        _record(item, report.passed)


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(_criteria):
        entry = _criteria[num]
        verdict = "PASS" if entry["passed"] else "FAIL"
        label = entry["label"].replace("_", " ")
        terminalreporter.write_line(f"criterion {num:2d}: {verdict} - {label}")
