"""Command-line entry points for every pipeline stage.

Commands: ingest, run, warmup-build, adapt, eval, serve, rerun. Each
file-producing command writes a manifest sidecar (config snapshot, input
hashes, output paths) whose id is deterministic, so re-running a manifest
reproduces the outputs byte for byte with a scripted backend and fixed
seeds.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import subprocess
import sys
import time
from pathlib import Path

from . import __version__
from .adaptation import (
    AdaptationConfig,
    Question,
    read_questions,
    run_iterations,
)
from .backends import build_backend
from .config import resolve_config
from .errors import FsmragError
from .feedback import load_gold
from .fsm import run as run_agent
from .fsm import validate_trajectory, write_trajectories
from .kb import dump_kb, load_kb
from .metrics import evaluate
from .prompts import PromptTemplateSet
from .retrieval import Retriever
from .store import TrajectoryStore
from .warmup import AnnotatedQuestion, build_all, sample_balanced, write_examples


def _hash_file(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(command: str, config: dict, inputs: list[str], outputs: list[str]) -> Path:
    """Sidecar manifest next to the first output; id excludes timestamps."""
    payload = {
        "command": command,
        "config": config,
        "inputs": {str(p): _hash_file(p) for p in inputs if Path(p).exists()},
        "version": __version__,
    }
    manifest_id = hashlib.sha256(
        json.dumps(payload, sort_keys=True).encode("utf-8")
    ).hexdigest()[:16]
    manifest = {
        "manifest_id": manifest_id,
        **payload,
        "outputs": [str(p) for p in outputs],
        "created_at": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
    }
    path = Path(str(outputs[0]) + ".manifest.json")
    path.write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    return path


def _add_agent_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--style", help="prompt/config style (hotpotqa, pubmedqa, qasper)")
    p.add_argument("--max-subqueries", type=int, dest="max_subqueries")
    p.add_argument("--max-docs", type=int, dest="max_docs")
    p.add_argument("--top-psg", type=int, dest="top_psg")
    p.add_argument("--prompt-mode", choices=["zero_shot", "few_shot"], dest="prompt_mode")
    p.add_argument("--config", help="JSON config file layered under the flags")
    p.add_argument("--seed", type=int, default=None)


def _agent_config(args: argparse.Namespace):
    return resolve_config(
        style=args.style,
        subquery_cap=args.max_subqueries,
        max_docs=args.max_docs,
        top_psg=args.top_psg,
        prompt_mode=args.prompt_mode,
        config_file=args.config,
    )


def cmd_ingest(args: argparse.Namespace) -> int:
    kb = load_kb(args.input)
    out = Path(args.out)
    with open(out, "w", encoding="utf-8") as f:
        dump_kb(kb, f)
    write_manifest("ingest", {"input": args.input}, [args.input], [str(out)])
    print(f"ingested {len(kb.documents)} documents, {kb.num_passages} passages -> {out}")
    return 0


def cmd_run(args: argparse.Namespace) -> int:
    config = _agent_config(args)
    kb = load_kb(args.kb)
    backend = build_backend(args.backend)
    retriever = Retriever(kb, max_docs=config.max_docs, top_psg=config.top_psg)
    templates = PromptTemplateSet.load(config.style, config.prompt_mode)
    with open(args.questions, encoding="utf-8") as f:
        questions = read_questions(f)
    trajectories = []
    failures = 0
    for q in questions:
        _, traj = run_agent(
            q.question, kb, backend, config,
            retriever=retriever, templates=templates, question_id=q.question_id,
        )
        problems = validate_trajectory(traj)
        if problems:
            raise FsmragError(f"{q.question_id}: invalid trajectory: {problems[0]}")
        if traj.status != "ok":
            failures += 1
        trajectories.append(traj)
    with open(args.out, "w", encoding="utf-8") as f:
        write_trajectories(trajectories, f)
    write_manifest(
        "run",
        {"backend": args.backend, "agent": config.to_dict(), "seed": args.seed},
        [args.kb, args.questions],
        [args.out],
    )
    print(f"ran {len(trajectories)} questions ({failures} failed) -> {args.out}")
    return 0


def cmd_warmup_build(args: argparse.Namespace) -> int:
    config = _agent_config(args)
    seed = args.seed if args.seed is not None else 0
    kb = load_kb(args.kb)
    retriever = Retriever(kb, max_docs=config.max_docs, top_psg=config.top_psg)
    templates = PromptTemplateSet.load(config.style, config.prompt_mode)
    gold = load_gold(args.gold)
    questions = [AnnotatedQuestion(g) for g in gold.values()]
    examples, report = build_all(questions, kb, retriever, templates, seed=seed)
    quota = {}
    if args.quota:
        quota = json.loads(Path(args.quota).read_text(encoding="utf-8"))
    sampled, sample_report = sample_balanced(examples, quota, seed=seed)
    with open(args.out, "w", encoding="utf-8") as f:
        write_examples(sampled, f)
    report_path = Path(args.report or (str(args.out) + ".report.json"))
    report_path.write_text(
        json.dumps({"build": report.to_dict(), "sampling": sample_report}, indent=2) + "\n",
        encoding="utf-8",
    )
    write_manifest(
        "warmup-build",
        {"agent": config.to_dict(), "seed": seed, "quota": quota},
        [args.kb, args.gold] + ([args.quota] if args.quota else []),
        [args.out, str(report_path)],
    )
    print(f"built {len(examples)} examples, exported {len(sampled)} -> {args.out}")
    return 0


def cmd_adapt(args: argparse.Namespace) -> int:
    config = _agent_config(args)
    kb = load_kb(args.kb)
    backend = build_backend(args.backend)
    with open(args.questions, encoding="utf-8") as f:
        questions = read_questions(f)
    explore_steps = args.explore_steps if args.explore_steps is not None else len(questions)
    adapt_config = AdaptationConfig(
        explore_steps=explore_steps,
        iterations=args.iterations,
        feedback_mode=args.feedback_mode,
        export_dir=args.export_dir,
        same_questions_across_iterations=args.same_questions,
    )
    gold = load_gold(args.gold) if args.gold else None
    store = TrajectoryStore(args.store) if args.store else None

    hook = None
    if args.exploit_cmd:
        def hook(export_path: Path, iteration: int):
            result = subprocess.run(
                args.exploit_cmd + [str(export_path), str(iteration)], check=False
            )
            if result.returncode != 0:
                raise FsmragError(
                    f"exploit hook failed with exit {result.returncode} at iteration {iteration}"
                )
            return None

    report = run_iterations(
        adapt_config, questions, kb, backend, config,
        gold_by_id=gold, store=store, exploit_hook=hook,
    )
    report_path = Path(args.export_dir) / "adapt-report.json"
    report_path.write_text(json.dumps(report, indent=2) + "\n", encoding="utf-8")
    outputs = [e["export"] for e in report["iterations"]] + [str(report_path)]
    write_manifest(
        "adapt",
        {
            "backend": args.backend,
            "agent": config.to_dict(),
            "feedback_mode": args.feedback_mode,
            "explore_steps": explore_steps,
            "iterations": args.iterations,
            "same_questions": args.same_questions,
            "seed": args.seed,
        },
        [args.kb, args.questions] + ([args.gold] if args.gold else []),
        outputs,
    )
    for entry in report["iterations"]:
        print(
            f"iteration {entry['iteration']}: explored {entry['explored']}, "
            f"labeled {entry['labeled']} -> {entry['export']}"
        )
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    gold = load_gold(args.gold)
    with open(args.trajectories, encoding="utf-8") as f:
        results = [json.loads(line) for line in f if line.strip()]
    metric_names = [m.strip() for m in args.metric.split(",") if m.strip()]
    report = evaluate(results, gold, metric_names)
    out = Path(args.out)
    out.write_text(json.dumps(report.to_dict(), indent=2) + "\n", encoding="utf-8")
    write_manifest(
        "eval",
        {"metrics": metric_names},
        [args.trajectories, args.gold],
        [str(out)],
    )
    print(report.table())
    return 0


def cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    from .service import create_app

    from .errors import StoreError

    store = TrajectoryStore(args.store)
    if args.load:
        count = 0
        with open(args.load, encoding="utf-8") as f:
            for line in f:
                line = line.strip()
                if not line:
                    continue
                try:
                    store.add_trajectory(json.loads(line))
                    count += 1
                except StoreError:
                    pass  # already imported on an earlier start
        print(f"loaded {count} trajectories into {args.store}")
    app = create_app(store, token=args.token, static_dir=args.static_dir)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


def cmd_rerun(args: argparse.Namespace) -> int:
    manifest = json.loads(Path(args.manifest).read_text(encoding="utf-8"))
    command = manifest["command"]
    config = manifest["config"]
    inputs = list(manifest["inputs"])
    outputs = manifest["outputs"]
    argv = [command]
    if command == "ingest":
        argv += ["--input", inputs[0], "--out", outputs[0]]
    elif command == "run":
        argv += ["--kb", inputs[0], "--questions", inputs[1],
                 "--backend", config["backend"], "--out", outputs[0]]
        argv += _agent_argv(config["agent"])
    elif command == "warmup-build":
        argv += ["--kb", inputs[0], "--gold", inputs[1], "--out", outputs[0],
                 "--report", outputs[1], "--seed", str(config["seed"])]
        if len(inputs) > 2:
            argv += ["--quota", inputs[2]]
        argv += _agent_argv(config["agent"])
    elif command == "adapt":
        argv += ["--kb", inputs[0], "--questions", inputs[1],
                 "--backend", config["backend"],
                 "--feedback-mode", config["feedback_mode"],
                 "--explore-steps", str(config["explore_steps"]),
                 "--iterations", str(config["iterations"]),
                 "--export-dir", str(Path(outputs[0]).parent)]
        if config.get("same_questions"):
            argv += ["--same-questions"]
        if len(inputs) > 2:
            argv += ["--gold", inputs[2]]
        argv += _agent_argv(config["agent"])
    elif command == "eval":
        argv += ["--trajectories", inputs[0], "--gold", inputs[1],
                 "--metric", ",".join(config["metrics"]), "--out", outputs[0]]
    else:
        raise FsmragError(f"cannot rerun command {command!r}")
    return main(argv)


def _agent_argv(agent: dict) -> list[str]:
    return [
        "--style", agent["style"],
        "--max-subqueries", str(agent["subquery_cap"]),
        "--max-docs", str(agent["max_docs"]),
        "--top-psg", str(agent["top_psg"]),
        "--prompt-mode", agent["prompt_mode"],
    ]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fsmrag")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="validate and normalize a knowledge-base file")
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("run", help="answer questions and write trajectories")
    p.add_argument("--kb", required=True)
    p.add_argument("--questions", required=True)
    p.add_argument("--backend", required=True, help="scripted:<fixtures.jsonl> or http:<config.json>")
    p.add_argument("--out", required=True)
    _add_agent_flags(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("warmup-build", help="build per-module training examples from gold annotations")
    p.add_argument("--gold", required=True)
    p.add_argument("--kb", required=True)
    p.add_argument("--quota", help="JSON file: module -> branch class -> count")
    p.add_argument("--out", required=True)
    p.add_argument("--report")
    _add_agent_flags(p)
    p.set_defaults(func=cmd_warmup_build)

    p = sub.add_parser("adapt", help="explore questions, label steps, export training triples")
    p.add_argument("--kb", required=True)
    p.add_argument("--questions", required=True)
    p.add_argument("--backend", required=True)
    p.add_argument("--gold", help="gold annotations (silver feedback modes)")
    p.add_argument("--feedback-mode", default="silver_process",
                   choices=["silver_process", "silver_outcome", "human"])
    p.add_argument("--explore-steps", type=int, default=None,
                   help="questions per iteration; defaults to the whole question file")
    p.add_argument("--iterations", type=int, default=1)
    p.add_argument("--same-questions", action="store_true",
                   help="reuse the same questions every iteration")
    p.add_argument("--export-dir", default=".")
    p.add_argument("--store", help="annotation store directory (human mode)")
    p.add_argument("--exploit-cmd", nargs="+",
                   help="external trainer; invoked with the export path and iteration")
    _add_agent_flags(p)
    p.set_defaults(func=cmd_adapt)

    p = sub.add_parser("eval", help="score trajectories against gold annotations")
    p.add_argument("--trajectories", required=True)
    p.add_argument("--gold", required=True)
    p.add_argument("--metric", default="em,f1,recall")
    p.add_argument("--out", default="eval-report.json")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("serve", help="start the annotation HTTP service")
    p.add_argument("--store", required=True)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8640)
    p.add_argument("--token", help="shared token required in X-Auth-Token")
    p.add_argument("--static-dir", help="directory with the console's static bundle")
    p.add_argument("--load", help="trajectory JSONL to import into the store at startup")
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("rerun", help="re-execute a command from its manifest")
    p.add_argument("manifest")
    p.set_defaults(func=cmd_rerun)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except FsmragError as e:
        print(f"error [{args.command}]: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
