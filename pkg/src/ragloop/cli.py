"""Command-line entry point: corpus ingestion, index building, ad-hoc
search, agent/workflow episodes, SFT synthesis, reward reports, batch
evaluation, and the HTTP server."""

from __future__ import annotations

import argparse
import json
import sys

from .agent import (
    AgentConfig,
    HttpChatClient,
    ScriptedClient,
    Trajectory,
    run_agent,
    write_trajectory_log,
)
from .config import AppConfig, load_config
from .corpus import DEFAULT_CHUNK_WORDS, ingest_corpus
from .dense import HashEmbedder, HttpEmbeddingProvider
from .engine import CorpusEngine, SessionState
from .errors import RagloopError, TrajectoryAborted
from .evalqa import emit_report, load_qa_dataset, run_benchmark
from .protocol import EntityMatch, ExactSearch, SemanticSearch
from .training import export_sft_file, filter_trajectories, make_reward_report
from .workflow import WorkflowConfig, run_workflow


def _provider(cfg: AppConfig):
    if cfg.embed_base_url:
        if not cfg.embed_model:
            raise RagloopError("embed_base_url set but embed_model missing in config")
        return HttpEmbeddingProvider(
            base_url=cfg.embed_base_url,
            model=cfg.embed_model,
            dimension=cfg.embed_dimension,
            api_key=cfg.embed_api_key(),
        )
    return HashEmbedder(cfg.embed_dimension)


def _engine(index_dir: str, cfg: AppConfig) -> CorpusEngine:
    return CorpusEngine.load(index_dir, _provider(cfg))


def _client(args, cfg: AppConfig):
    if getattr(args, "script", None):
        with open(args.script, encoding="utf-8") as fh:
            entries = json.load(fh)
        replies = [tuple(e) if isinstance(e, list) else e for e in entries]
        return ScriptedClient(replies)
    base_url = getattr(args, "llm_url", None) or cfg.llm_base_url
    model = getattr(args, "llm_model", None) or cfg.llm_model
    if not base_url or not model:
        raise RagloopError(
            "no chat client configured: pass --llm-url and --llm-model, "
            "set them in the config file, or pass --script"
        )
    return HttpChatClient(
        base_url=base_url,
        model=model,
        api_key=cfg.llm_api_key(),
        temperature=cfg.temperature,
        top_p=cfg.top_p,
    )


def _session(cfg: AppConfig) -> SessionState:
    return SessionState(w_s=cfg.w_s, w_e=cfg.w_e, scale_n=cfg.scale_n)


def _add_client_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--llm-url", help="OpenAI-compatible chat completions base URL")
    p.add_argument("--llm-model", help="model name for the chat endpoint")
    p.add_argument(
        "--script",
        help="JSON file with a list of scripted assistant replies (hermetic runs)",
    )


def cmd_ingest(args, cfg: AppConfig) -> int:
    manifest = ingest_corpus(args.source, args.out, target_words=args.target_words)
    print(
        f"corpus {manifest.corpus_id}: {manifest.num_documents} documents, "
        f"{manifest.num_chunks} chunks -> {args.out}"
    )
    return 0


def cmd_build_index(args, cfg: AppConfig) -> int:
    from .corpus import CorpusStore

    corpus = CorpusStore.load(args.corpus)
    engine = CorpusEngine.build(corpus, _provider(cfg))
    out = args.out or args.corpus
    engine.save_indexes(out)
    print(
        f"indexed {len(corpus.chunks())} chunks "
        f"(sparse: {engine.sparse.num_chunks}, dense dim {engine.dense.vectors.shape[1]}) -> {out}"
    )
    return 0


def cmd_search(args, cfg: AppConfig) -> int:
    engine = _engine(args.index, cfg)
    state = SessionState(
        w_s=args.w_s if args.w_s is not None else cfg.w_s,
        w_e=args.w_e if args.w_e is not None else cfg.w_e,
        scale_n=args.k,
    )

    if args.mode == "semantic":
        suite = [SemanticSearch(query=args.query)]
    elif args.mode == "exact":
        suite = [ExactSearch(keywords=args.query)]
    elif args.mode == "entity":
        suite = [EntityMatch(entity=args.query)]
    else:
        suite = [SemanticSearch(query=args.query), ExactSearch(keywords=args.query)]
    _, response = engine.execute_suite(state, suite)

    for status in response.statuses:
        if status.status != "ok":
            print(f"[{status.action_name}] {status.status}: {status.message}")
    for r in response.results:
        payload = r.to_dict()
        if payload["kind"] == "scored":
            score = f"fused={payload['fused_score']}"
        else:
            score = f"score={payload['score']}"
        text = payload["text"][:120].replace("\n", " ")
        print(f"{payload['chunk_id']:<24} {score:<16} {text}")
    if not response.results:
        print("(no results)")
    return 0


def _print_trajectory(trajectory: Trajectory) -> None:
    for i, step in enumerate(trajectory.steps):
        names = [a.__class__.__name__ for a in step.action_suite]
        print(f"step {i + 1}: {', '.join(names) or 'no action'}")
    print(f"final answer: {trajectory.final_answer!r}")


def cmd_run_agent(args, cfg: AppConfig) -> int:
    engine = _engine(args.index, cfg)
    client = _client(args, cfg)
    config = AgentConfig(max_turns=args.max_turns or cfg.max_turns)
    trajectory = run_agent(args.question, client, engine, config, session=_session(cfg))
    _print_trajectory(trajectory)
    if args.out:
        write_trajectory_log([trajectory], args.out)
        print(f"trajectory -> {args.out}")
    return 0


def cmd_run_workflow(args, cfg: AppConfig) -> int:
    engine = _engine(args.index, cfg)
    client = _client(args, cfg)
    config = WorkflowConfig(max_iterations=args.max_iterations or cfg.max_iterations)
    trajectory = run_workflow(args.question, client, engine, config, session=_session(cfg))
    _print_trajectory(trajectory)
    if args.out:
        write_trajectory_log([trajectory], args.out)
        print(f"trajectory -> {args.out}")
    return 0


def cmd_synthesize(args, cfg: AppConfig) -> int:
    engine = _engine(args.index, cfg)
    client = _client(args, cfg)
    dataset = load_qa_dataset(args.dataset)
    run = run_workflow if args.runner == "workflow" else run_agent
    pairs = []
    aborted = 0
    for example in dataset:
        try:
            trajectory = run(example.question, client, engine, session=_session(cfg))
        except TrajectoryAborted:
            aborted += 1
            continue
        pairs.append((trajectory, list(example.gold_answers)))
    kept = filter_trajectories(pairs)
    count = export_sft_file(kept, args.out)
    print(
        f"{len(dataset)} questions: {aborted} aborted, {len(pairs) - len(kept)} filtered, "
        f"{count} records -> {args.out}"
    )
    return 0


def cmd_reward(args, cfg: AppConfig) -> int:
    from .agent import read_trajectory_log

    trajectories = read_trajectory_log(args.trajectories)
    dataset = load_qa_dataset(args.gold)
    golds = {ex.question: list(ex.gold_answers) for ex in dataset}
    pairs = []
    for t in trajectories:
        if t.question not in golds:
            raise RagloopError(f"no gold answers for question: {t.question[:80]!r}")
        pairs.append((t, golds[t.question]))
    report = make_reward_report(pairs)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(report + "\n")
        print(f"report -> {args.out}")
    else:
        print(report)
    return 0


def cmd_evaluate(args, cfg: AppConfig) -> int:
    engine = _engine(args.index, cfg)
    client = _client(args, cfg)
    dataset = load_qa_dataset(args.dataset)
    run = run_workflow if args.runner == "workflow" else run_agent

    def runner(question: str) -> Trajectory:
        return run(question, client, engine, session=_session(cfg))

    report = run_benchmark(dataset, runner, max_workers=args.max_workers or cfg.max_workers)
    rendered = emit_report(report, args.format)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(rendered)
        print(f"report -> {args.out}")
    else:
        print(rendered, end="")
    return 0


def cmd_serve(args, cfg: AppConfig) -> int:
    import uvicorn

    from .server import create_app

    engine = _engine(args.index, cfg)
    uvicorn.run(create_app(engine), host=args.host, port=args.port)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ragloop",
        description="Interactive corpus retrieval: indexes, agent loops, and evaluation.",
    )
    parser.add_argument("--config", help="JSON config file")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="chunk a JSONL document file into a corpus directory")
    p.add_argument("--source", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--target-words", type=int, default=DEFAULT_CHUNK_WORDS)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("build-index", help="build sparse and dense indexes for a corpus")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", help="index output directory (default: the corpus directory)")
    p.set_defaults(func=cmd_build_index)

    p = sub.add_parser("search", help="ad-hoc single query against an index")
    p.add_argument("--index", required=True)
    p.add_argument("--mode", choices=("semantic", "exact", "entity", "fused"), default="fused")
    p.add_argument("--query", required=True)
    p.add_argument("-k", type=int, default=3)
    p.add_argument("--w-s", type=float, default=None)
    p.add_argument("--w-e", type=float, default=None)
    p.set_defaults(func=cmd_search)

    p = sub.add_parser("run-agent", help="one end-to-end agent episode")
    p.add_argument("--question", required=True)
    p.add_argument("--index", required=True)
    p.add_argument("--max-turns", type=int, default=None)
    p.add_argument("--out", help="write the trajectory log here")
    _add_client_flags(p)
    p.set_defaults(func=cmd_run_agent)

    p = sub.add_parser("run-workflow", help="one planner/reasoner/executor episode")
    p.add_argument("--question", required=True)
    p.add_argument("--index", required=True)
    p.add_argument("--max-iterations", type=int, default=None)
    p.add_argument("--out", help="write the trajectory log here")
    _add_client_flags(p)
    p.set_defaults(func=cmd_run_workflow)

    p = sub.add_parser("synthesize", help="run episodes, keep the successful ones, export SFT")
    p.add_argument("--dataset", required=True)
    p.add_argument("--index", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--runner", choices=("agent", "workflow"), default="workflow")
    _add_client_flags(p)
    p.set_defaults(func=cmd_synthesize)

    p = sub.add_parser("reward", help="score a trajectory log against gold answers")
    p.add_argument("--trajectories", required=True)
    p.add_argument("--gold", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_reward)

    p = sub.add_parser("evaluate", help="EM/F1 benchmark over a QA dataset")
    p.add_argument("--dataset", required=True)
    p.add_argument("--index", required=True)
    p.add_argument("--runner", choices=("agent", "workflow"), default="agent")
    p.add_argument("--format", choices=("text", "csv"), default="text")
    p.add_argument("--out")
    p.add_argument("--max-workers", type=int, default=None)
    _add_client_flags(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("serve", help="HTTP sessions over the engine")
    p.add_argument("--index", required=True)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args.config)
        return args.func(args, cfg)
    except RagloopError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
