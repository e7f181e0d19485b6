"""Acceptance suite. Each test carries a criterion number; the conftest
hook rolls them up into one PASS/FAIL line per criterion after the run.

Everything here is hermetic: deterministic embedder, scripted chat
clients, seeded random corpora, and a frozen expected trajectory log.
"""

import json
import random
import time
from pathlib import Path

import pytest
from helpers import bm25_oracle_topk, mutate_payload, random_suite, soup_corpus, soup_query

from ragloop.agent import ScriptedClient, run_agent, write_trajectory_log
from ragloop.dense import DenseHit, HashEmbedder
from ragloop.engine import CorpusEngine, SessionState, apply_fusion
from ragloop.errors import RagloopError
from ragloop.evalqa import exact_match, f1, load_qa_dataset, run_benchmark
from ragloop.protocol import (
    AdjustScale,
    EntityMatch,
    ExactSearch,
    SemanticSearch,
    parse_tool_calls,
    render_tool_calls,
)
from ragloop.sparse import InvertedIndex, SparseHit
from ragloop.training import export_sft, filter_trajectories, group_advantage, reward

DATA_DIR = Path(__file__).parent / "data"

SEARCH_CALL = render_tool_calls([SemanticSearch(query="anything at all")])


# -- 1. sparse retrieval against a brute-force oracle -------------------------


def test_criterion_01_sparse_matches_oracle():
    started = time.monotonic()
    rng = random.Random(1001)
    for num_docs in (30, 80, 150, 220, 300):
        corpus = soup_corpus(rng, num_docs, sentences_per_doc=(1, 4))
        chunks = corpus.chunks()
        assert len(chunks) <= 1000
        index = InvertedIndex.build(chunks)
        texts = {c.chunk_id: c.text for c in chunks}
        for _ in range(10):
            keywords = soup_query(rng, lo=1, hi=6)
            expected = bm25_oracle_topk(texts, keywords, k=7)
            got = index.exact_search(keywords, k=7)
            assert [h.chunk_id for h in got] == [cid for cid, _ in expected]
            for hit, (_, score) in zip(got, expected):
                assert hit.bm25_score == pytest.approx(score, abs=1e-9)
    assert time.monotonic() - started < 10.0


# -- 2. dense retrieval against an exhaustive cosine scan ---------------------


def _cosine_oracle(chunks, embedder, query, k):
    import numpy as np

    rows = embedder.embed_batch([c.text for c in chunks])
    q_raw = embedder.embed_batch([query])[0]
    q = q_raw / np.linalg.norm(q_raw)
    scored = []
    for chunk, row in zip(chunks, rows):
        unit = row / np.linalg.norm(row)
        scored.append((chunk.chunk_id, float(np.dot(unit, q))))
    scored.sort(key=lambda item: (-item[1], item[0]))
    return scored[:k]


def test_criterion_02_dense_matches_exhaustive_scan():
    started = time.monotonic()
    rng = random.Random(2002)
    embedder = HashEmbedder(64)
    for seed_docs in (75, 85):
        corpus = soup_corpus(rng, seed_docs, sentences_per_doc=(4, 7))
        chunks = corpus.chunks()
        assert 150 <= len(chunks) <= 300  # the 200-chunk scale
        engine = CorpusEngine.build(corpus, HashEmbedder(64))
        for _ in range(5):
            query = soup_query(rng, lo=2, hi=6)
            for k in (1, 3, 10):
                expected = _cosine_oracle(chunks, embedder, query, k)
                got = engine.dense.semantic_search(query, k=k)
                assert [h.chunk_id for h in got] == [cid for cid, _ in expected]
                for hit, (_, score) in zip(got, expected):
                    assert hit.cosine_score == pytest.approx(score, abs=1e-9)
    assert time.monotonic() - started < 5.0


# -- 3. fusion contract --------------------------------------------------------


def test_criterion_03_fusion_worked_example():
    results = apply_fusion(
        [DenseHit("c1", 0.9), DenseHit("c2", 0.5)],
        [SparseHit("c2", 3.0), SparseHit("c3", 1.0)],
        w_s=0.5,
        w_e=0.5,
        n=3,
    )
    assert [r.chunk_id for r in results] == ["c1", "c2", "c3"]
    assert [r.fused_score for r in results] == pytest.approx([0.5, 0.5, 0.0], abs=1e-12)


def test_criterion_03_fusion_scale_invariance():
    rng = random.Random(3003)
    for _ in range(100):
        ids = [f"c{i:02d}" for i in range(rng.randint(2, 12))]
        sem_ids = rng.sample(ids, rng.randint(1, len(ids)))
        exa_ids = rng.sample(ids, rng.randint(1, len(ids)))
        sem = [DenseHit(cid, round(rng.random(), 6)) for cid in sem_ids]
        exa = [SparseHit(cid, round(rng.random() * 10, 6)) for cid in exa_ids]
        w_s, w_e = rng.uniform(0.05, 2.0), rng.uniform(0.05, 2.0)
        lam = rng.choice([0.5, 2.0, 7.3])
        base = apply_fusion(sem, exa, w_s, w_e, n=len(ids))
        scaled = apply_fusion(sem, exa, lam * w_s, lam * w_e, n=len(ids))
        assert [r.chunk_id for r in base] == [r.chunk_id for r in scaled]


# -- 4. context shaping soundness ----------------------------------------------


def test_criterion_04_context_shaping_soundness():
    rng = random.Random(4004)
    corpus = soup_corpus(rng, 15, sentences_per_doc=(2, 5))
    engine = CorpusEngine.build(corpus, HashEmbedder(64))
    doc_ids = corpus.doc_ids()

    for _ in range(1000):
        excluded = set(rng.sample(doc_ids, rng.randint(0, 4)))
        remaining = [d for d in doc_ids if d not in excluded]
        included = tuple(rng.sample(remaining, rng.randint(0, 3)))
        scale = rng.randint(1, 6)
        state = SessionState(
            scale_n=scale, included=included, excluded=frozenset(excluded)
        )
        if rng.random() < 0.5:
            action = SemanticSearch(query=soup_query(rng))
        else:
            action = ExactSearch(keywords=soup_query(rng))
        _, response = engine.execute_suite(state, [action])
        scored = [r for r in response.results if r.to_dict()["kind"] == "scored"]

        surfaced = {r.doc_id for r in scored}
        assert not surfaced & excluded, "an excluded document surfaced"
        for doc in included:
            assert doc in surfaced, "an included document failed to surface"
        assert len(scored) <= scale + len(included)


# -- 5. the motivating retrieval failure and its interactive fix ---------------


def test_criterion_05_semantic_search_prefers_distractor(toy_engine):
    suite = render_tool_calls(
        [AdjustScale(n=12), SemanticSearch(query="release date of The Jaws of Death")]
    )
    client = ScriptedClient(
        ["<think>look for the release date</think>\n" + suite, "cannot tell"]
    )
    trajectory = run_agent(
        "What is the release date of The Jaws of Death?", client, toy_engine
    )
    ids = [r.chunk_id for r in trajectory.steps[0].info.results]
    assert ids[0] == "hound_death#0"  # wrong-entity distractor wins outright
    assert ids.index("hound_death#0") < ids.index("jaws_death#0")


def test_criterion_05_interactive_primitives_recover_gold(toy_engine):
    entity_suite = render_tool_calls([EntityMatch(entity="The Jaws of Death")])
    client = ScriptedClient(["<think>pin the title</think>\n" + entity_suite, "1976"])
    trajectory = run_agent(
        "What is the release date of The Jaws of Death?", client, toy_engine
    )
    results = trajectory.steps[0].info.results
    assert results[0].chunk_id == "jaws_death#0"
    assert "1976" in results[0].text
    assert trajectory.final_answer == "1976"

    exact_suite = render_tool_calls([ExactSearch(keywords="The Jaws of Death 1976 film")])
    client = ScriptedClient(["<think>go exact</think>\n" + exact_suite, "1976"])
    trajectory = run_agent(
        "What is the release date of The Jaws of Death?", client, toy_engine
    )
    assert trajectory.steps[0].info.results[0].chunk_id == "jaws_death#0"


# -- 6. reward truth table ------------------------------------------------------


def _trajectory(answer, valid=True):
    from ragloop.agent import Step, Trajectory
    from ragloop.protocol import Answer, ToolResponse

    info = ToolResponse(session_echo=SessionState().echo())
    step = Step("look", [SemanticSearch(query="x")], info, "text")
    if not valid:
        step.thought = ""
    return Trajectory(
        question="q",
        steps=[step, Step("done", [Answer(answer)], None, answer)],
        final_answer=answer,
    )


def test_criterion_06_reward_truth_table():
    golds = ["1976"]
    assert reward(_trajectory("1976"), golds).total == 1
    assert reward(_trajectory("1933"), golds).total == 0
    assert reward(_trajectory("1933", valid=False), golds).total == -1
    # Gating: the answer string is right, but the trajectory is not valid.
    gated = reward(_trajectory("1976", valid=False), golds)
    assert gated.total == -1
    assert gated.answer_bonus == 0


# -- 7. group-relative advantage --------------------------------------------------


def test_criterion_07_advantage_reference_group():
    advantages = group_advantage([1.0, 0.0, 0.0, 1.0])
    for got, want in zip(advantages, [1.0, -1.0, -1.0, 1.0]):
        assert got == pytest.approx(want, abs=1e-6)


def test_criterion_07_advantage_standardizes():
    rng = random.Random(7007)
    checked = 0
    while checked < 100:
        group = [rng.choice([-1.0, 0.0, 1.0]) for _ in range(rng.randint(2, 16))]
        if len(set(group)) < 2:
            continue
        checked += 1
        advantages = group_advantage(group)
        n = len(advantages)
        mean = sum(advantages) / n
        std = (sum((a - mean) ** 2 for a in advantages) / n) ** 0.5
        assert mean == pytest.approx(0.0, abs=1e-9)
        assert std == pytest.approx(1.0, abs=1e-6)


# -- 8. wire protocol robustness ---------------------------------------------------


def test_criterion_08_round_trip_lossless():
    rng = random.Random(8008)
    for _ in range(500):
        suite = random_suite(rng)
        actions, failures = parse_tool_calls(render_tool_calls(suite))
        assert failures == []
        assert actions == suite


def test_criterion_08_fuzzed_payloads_never_crash(toy_engine):
    rng = random.Random(8888)
    for _ in range(10_000):
        payload = mutate_payload(rng, render_tool_calls(random_suite(rng)))
        actions, _ = parse_tool_calls(payload)  # must not raise
        if not actions:
            continue
        try:
            toy_engine.execute_suite(toy_engine.new_session(), actions)
        except RagloopError:
            pass  # structured refusals are fine; crashes are not


# -- 9. hermetic end-to-end reproduction -------------------------------------------


def _scripts():
    return json.loads((DATA_DIR / "agent_scripts.json").read_text(encoding="utf-8"))


def test_criterion_09_frozen_trajectory_log(toy_engine, tmp_path):
    scripts = _scripts()
    dataset = load_qa_dataset(str(DATA_DIR / "qa_five.jsonl"))
    trajectories = [
        run_agent(ex.question, ScriptedClient(scripts[ex.question]), toy_engine)
        for ex in dataset
    ]
    log = tmp_path / "trajectories.jsonl"
    write_trajectory_log(trajectories, str(log))
    expected = (DATA_DIR / "expected_trajectories.jsonl").read_bytes()
    assert log.read_bytes() == expected

    def runner(question):
        return run_agent(question, ScriptedClient(scripts[question]), toy_engine)

    report = run_benchmark(dataset, runner)
    assert report.rows[0].em == 100.0
    assert report.rows[0].errors == 0


def test_criterion_09_turn_cap_bounds_episode(toy_engine):
    never_answers = ["<think>one more search</think>\n" + SEARCH_CALL] * 8
    trajectory = run_agent("unanswerable", ScriptedClient(never_answers), toy_engine)
    assert len(trajectory.steps) == 8  # 7 interaction turns + forced final step
    assert trajectory.final_answer is None


# -- 10. SFT export over the filtered set --------------------------------------------


def test_criterion_10_sft_export_masks_and_revalidates(toy_engine):
    scripts = _scripts()
    dataset = load_qa_dataset(str(DATA_DIR / "qa_five.jsonl"))
    golds = {ex.question: list(ex.gold_answers) for ex in dataset}
    pairs = [
        (run_agent(ex.question, ScriptedClient(scripts[ex.question]), toy_engine),
         list(ex.gold_answers))
        for ex in dataset
    ]
    kept = filter_trajectories(pairs)
    assert len(kept) == 5

    for trajectory in kept:
        record = export_sft(trajectory)
        tool_messages = [m for m in record.messages if m["role"] == "tool"]
        assert tool_messages, "episodes must contain tool responses"
        for message, trained in zip(record.messages, record.loss_mask):
            if message["role"] == "tool":
                assert not trained
            if message["role"] == "assistant":
                assert trained
        assert reward(trajectory, golds[trajectory.question]).total == 1


# -- 11. answer metrics ---------------------------------------------------------------


def test_criterion_11_metric_reference_values():
    assert f1("the cat sat", ["cat sat down"]) == pytest.approx(0.8, abs=1e-9)
    assert exact_match("The 1976.", ["1976"]) == 1
    assert exact_match("an apple", ["Apple!"]) == 1
    assert exact_match("apples", ["apple"]) == 0
    assert f1("", ["x"]) == 0.0
