"""Command-line entry point.

Subcommands: run (batch execution), eval (score a run directory), replay
(re-execute recorded transcripts offline), inspect (pretty-print a
transcript), solve (one record, locally or against a running service), and
serve (start the HTTP service). Credentials come only from the environment
(OPENAI_API_KEY; FSMQA_BASE_URL overrides the endpoint).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .datasets import QuestionRecord
from .errors import FsmQaError
from .fsm import FsmBudgets
from .gateway import ScriptedBackend
from .prompts import PromptKit
from .runner import (
    RunConfig,
    build_backend,
    evaluate_run,
    load_transcripts_file,
    replay_transcript,
    execute_run,
)
from .strategies import STRATEGY_NAMES, StrategyContext, make_strategy

logger = logging.getLogger(__name__)


def _add_run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON config file; flags override its fields")
    p.add_argument("--dataset", help="path to the dataset file")
    p.add_argument("--kind", choices=("hotpotqa", "2wiki", "musique"), help="dataset kind")
    p.add_argument("--strategy", choices=STRATEGY_NAMES)
    p.add_argument("--setting", type=int, choices=(1, 2))
    p.add_argument("--sample-size", type=int, dest="sample_size")
    p.add_argument("--seed", type=int)
    p.add_argument("--concurrency", type=int)
    p.add_argument("--backend", help="'script:<rules.json>' or an http(s) endpoint")
    p.add_argument("--model")
    p.add_argument("--max-iterations", type=int, dest="max_iterations")
    p.add_argument("--max-revisions", type=int, dest="max_revisions")
    p.add_argument("--terminator-variant", choices=("continue", "identical"),
                   dest="terminator_variant")
    p.add_argument("--demos", dest="demos_path", help="sp-cot demonstrations file")
    p.add_argument("--templates", dest="template_dir", help="override template directory")
    p.add_argument("--salvage", action="store_true", default=None,
                   help="skip malformed dataset samples instead of failing")
    p.add_argument("--out", help="run directory")


def _run_config(args: argparse.Namespace) -> RunConfig:
    overrides = {
        "dataset_path": args.dataset,
        "dataset_kind": args.kind,
        "strategy": args.strategy,
        "setting": args.setting,
        "sample_size": args.sample_size,
        "seed": args.seed,
        "concurrency": args.concurrency,
        "backend": args.backend,
        "model": args.model,
        "max_iterations": args.max_iterations,
        "max_revisions": args.max_revisions,
        "terminator_variant": args.terminator_variant,
        "demos_path": args.demos_path,
        "template_dir": args.template_dir,
        "salvage": args.salvage,
        "out_dir": args.out,
    }
    if args.config:
        return RunConfig.from_file(args.config, overrides)
    missing = [k for k in ("dataset_path", "dataset_kind", "strategy", "out_dir")
               if overrides.get(k) is None]
    if missing:
        raise FsmQaError(f"missing required flags for: {', '.join(missing)}")
    cleaned = {k: v for k, v in overrides.items() if v is not None}
    return RunConfig(**cleaned)


def cmd_run(args: argparse.Namespace) -> int:
    config = _run_config(args)
    result = execute_run(config)
    print(f"run dir: {result.run_dir}")
    print(f"done={result.done} failed={result.failed} skipped={result.skipped}")
    if result.ok:
        report = evaluate_run(result.run_dir)
        print(report.to_text())
        return 0
    return 1


def cmd_eval(args: argparse.Namespace) -> int:
    report = evaluate_run(args.run_dir)
    print(report.to_text())
    return 0


def cmd_replay(args: argparse.Namespace) -> int:
    transcripts = load_transcripts_file(args.transcripts)
    if args.record_id:
        transcripts = [t for t in transcripts if t.record_id == args.record_id]
    failures = 0
    for transcript in transcripts:
        outcome = replay_transcript(transcript, template_dir=args.template_dir)
        if outcome.equal:
            print(f"{outcome.record_id}: equal")
        else:
            failures += 1
            print(f"{outcome.record_id}: DIVERGED ({outcome.divergence})")
    return 1 if failures else 0


def cmd_inspect(args: argparse.Namespace) -> int:
    transcripts = load_transcripts_file(args.transcripts)
    if args.record_id:
        transcripts = [t for t in transcripts if t.record_id == args.record_id]
    for t in transcripts:
        print("=" * 72)
        print(f"record {t.record_id}  strategy={t.strategy}  setting={t.setting}")
        terminal = t.terminal_state.value if t.terminal_state else "-"
        print(f"terminal={terminal}  final_answer={t.final_answer!r}")
        if t.flags:
            print(f"flags: {t.flags}")
        for i, entry in enumerate(t.entries):
            state = entry.state.value if entry.state else "-"
            outcome = entry.parse_outcome.value if entry.parse_outcome else "-"
            print(f"\n[{i}] state={state} role={entry.role or '-'} "
                  f"event={outcome} revisions={entry.revision_count}")
            if entry.prompt and args.full:
                print("  prompt:")
                for line in entry.prompt.splitlines():
                    print(f"    {line}")
            elif entry.prompt:
                head = entry.prompt.splitlines()[0]
                print(f"  prompt: {head[:100]}")
            if entry.raw_response:
                print(f"  response: {entry.raw_response[:200]}")
        if t.steps:
            print("\nhops:")
            for s in t.steps:
                print(f"  {s.index}. {s.subquestion!r} -> {s.subanswer!r} "
                      f"[{s.paragraph_title}]")
    return 0


def _load_record(path: str) -> QuestionRecord:
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    return QuestionRecord.from_dict(data)


def cmd_solve(args: argparse.Namespace) -> int:
    record = _load_record(args.record)
    if args.server:
        import httpx

        payload = {
            "record": record.to_dict(),
            "strategy": args.strategy,
            "setting": args.setting,
            "include_transcript": args.transcript,
        }
        response = httpx.post(f"{args.server.rstrip('/')}/solve", json=payload, timeout=600.0)
        response.raise_for_status()
        print(json.dumps(response.json(), indent=2, ensure_ascii=False))
        return 0
    if not args.backend:
        raise FsmQaError("--backend is required unless --server is given")
    config = RunConfig(
        dataset_path="-", dataset_kind="hotpotqa", strategy=args.strategy,
        out_dir="-", setting=args.setting, backend=args.backend, model=args.model or "default",
    )
    ctx = StrategyContext(
        backend=build_backend(config),
        prompts=PromptKit(args.template_dir),
        setting=args.setting,
        budgets=FsmBudgets(args.max_iterations, args.max_revisions),
        terminator_variant=args.terminator_variant or "continue",
        model_id=args.model or "default",
    )
    transcript = make_strategy(args.strategy, ctx).run(record)
    out = {
        "record_id": transcript.record_id,
        "strategy": transcript.strategy,
        "terminal_state": transcript.terminal_state.value if transcript.terminal_state else None,
        "final_answer": transcript.final_answer,
        "prediction": transcript.prediction,
    }
    if args.transcript:
        out["transcript"] = transcript.to_dict()
    print(json.dumps(out, indent=2, ensure_ascii=False))
    return 0


def cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    from .service.app import create_app

    backend = ScriptedBackend.from_rules_file(args.script) if args.script else None
    app = create_app(scripted_backend=backend, template_dir=args.template_dir)
    uvicorn.run(app, host=args.host, port=args.port, log_level="info")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fsmqa",
        description="Multi-hop QA with state-machine guided prompting: run, score, replay.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute a batch run")
    _add_run_flags(p_run)
    p_run.set_defaults(func=cmd_run)

    p_eval = sub.add_parser("eval", help="score a completed run directory")
    p_eval.add_argument("run_dir")
    p_eval.set_defaults(func=cmd_eval)

    p_replay = sub.add_parser("replay", help="re-execute recorded transcripts and compare")
    p_replay.add_argument("transcripts", help="transcripts.jsonl or a single transcript .json")
    p_replay.add_argument("--record-id", dest="record_id")
    p_replay.add_argument("--templates", dest="template_dir")
    p_replay.set_defaults(func=cmd_replay)

    p_inspect = sub.add_parser("inspect", help="pretty-print transcripts")
    p_inspect.add_argument("transcripts")
    p_inspect.add_argument("--record-id", dest="record_id")
    p_inspect.add_argument("--full", action="store_true", help="print full prompts")
    p_inspect.set_defaults(func=cmd_inspect)

    p_solve = sub.add_parser("solve", help="answer one record (locally or via --server)")
    p_solve.add_argument("--record", required=True, help="canonical record JSON file")
    p_solve.add_argument("--strategy", default="sg-fsm2", choices=STRATEGY_NAMES)
    p_solve.add_argument("--setting", type=int, default=1, choices=(1, 2))
    p_solve.add_argument("--server", help="base URL of a running fsmqa service")
    p_solve.add_argument("--backend", help="'script:<rules.json>' or an http(s) endpoint")
    p_solve.add_argument("--model")
    p_solve.add_argument("--max-iterations", type=int, default=6, dest="max_iterations")
    p_solve.add_argument("--max-revisions", type=int, default=2, dest="max_revisions")
    p_solve.add_argument("--terminator-variant", choices=("continue", "identical"),
                         dest="terminator_variant")
    p_solve.add_argument("--templates", dest="template_dir")
    p_solve.add_argument("--transcript", action="store_true", help="include the full transcript")
    p_solve.set_defaults(func=cmd_solve)

    p_serve = sub.add_parser("serve", help="start the HTTP service")
    p_serve.add_argument("--host", default="127.0.0.1")
    p_serve.add_argument("--port", type=int, default=8000)
    p_serve.add_argument("--script", help="rules file backing the mock completion endpoint")
    p_serve.add_argument("--templates", dest="template_dir")
    p_serve.set_defaults(func=cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except FsmQaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
