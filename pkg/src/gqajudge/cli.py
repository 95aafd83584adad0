"""Command-line surface.

Exit code is 0 whenever the requested outputs were written, even if judge
calls failed on individual samples (those failures are encoded in the
outputs); nonzero is reserved for configuration, I/O, and schema errors so
automation can tell the two apart.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from gqajudge.align import align_runs, write_alignment_report
from gqajudge.backend import BackendConfig, RetryPolicy, make_backend
from gqajudge.distill import balance_selection, export_traces, write_traces
from gqajudge.errors import HarnessError
from gqajudge.meta import load_meta_result, run_meta_suite, write_meta_result
from gqajudge.pipeline import (
    EvaluationMode,
    evaluate_batch,
    report_to_record,
    write_run_file,
)
from gqajudge.prompt import PromptVariant, TemplateSet, default_templates
from gqajudge.report import render_report
from gqajudge.suite import load_samples, load_suite, validate_suite

_MODES = {"pipeline": EvaluationMode.FOUR_CALL, "single": EvaluationMode.SINGLE_CALL}


def _add_backend_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--backend", choices=["remote", "replay", "scripted"], default="scripted")
    parser.add_argument("--endpoint", help="chat-completion endpoint URL (remote backend)")
    parser.add_argument("--model", default="scripted-judge", help="model identifier sent to the endpoint")
    parser.add_argument("--api-key-env", help="environment variable holding the bearer token")
    parser.add_argument("--cache-dir", help="response cache directory (remote caching / replay source)")
    parser.add_argument("--fixtures", help="JSON file of request_tag -> response (scripted backend)")
    parser.add_argument("--temperature", type=float, default=0.0,
                        help="sampling temperature; raise only if the provider rejects 0")
    parser.add_argument("--max-output-tokens", type=int, default=1024)
    parser.add_argument("--retry-attempts", type=int, default=3)
    parser.add_argument("--retry-backoff-ms", type=int, default=1000)


def _add_run_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--mode", choices=sorted(_MODES), default="pipeline")
    parser.add_argument("--parallelism", type=int, default=1)
    parser.add_argument("--templates", help="directory overriding the built-in prompt templates")
    parser.add_argument("--no-ground-truth", action="store_true",
                        help="rate a single answer instead of ground truth + answer")
    parser.add_argument("--no-justification", action="store_true",
                        help="omit justification fields from the requested output")
    parser.add_argument("--no-cot", action="store_true",
                        help="omit chain-of-thought fields from the requested output")


def _backend_config(args: argparse.Namespace) -> BackendConfig:
    kind = {"remote": "remote_chat", "replay": "replay", "scripted": "scripted"}[args.backend]
    return BackendConfig(
        kind=kind,
        model_id=args.model,
        endpoint_url=args.endpoint,
        api_key_env=args.api_key_env,
        cache_dir=args.cache_dir,
        fixtures_path=args.fixtures,
        temperature=args.temperature,
        max_output_tokens=args.max_output_tokens,
        retry=RetryPolicy(max_attempts=args.retry_attempts, base_backoff_ms=args.retry_backoff_ms),
    )


def _variant(args: argparse.Namespace) -> PromptVariant:
    return PromptVariant(
        include_ground_truth=not args.no_ground_truth,
        include_justification=not args.no_justification,
        include_chain_of_thought=not args.no_cot,
    )


def _templates(args: argparse.Namespace) -> TemplateSet:
    if args.templates:
        return TemplateSet.from_dir(args.templates)
    return default_templates()


def _echo_config(command: str, **fields) -> None:
    print(json.dumps({"resolved_config": {"command": command, **fields}}, ensure_ascii=False))


def _cmd_evaluate(args: argparse.Namespace) -> int:
    samples = load_samples(args.samples)
    config = _backend_config(args)
    backend = make_backend(config)
    variant = _variant(args)
    templates = _templates(args)
    mode = _MODES[args.mode]
    reports = evaluate_batch(
        samples, backend, mode=mode, variant=variant,
        parallelism=args.parallelism, templates=templates,
    )
    records = (report_to_record(r, mode, config.model_id, variant) for r in reports)
    count = write_run_file(records, args.out)
    _echo_config(
        "evaluate",
        model=config.model_id,
        backend=config.kind,
        temperature=config.temperature,
        mode=mode.value,
        prompt_variant=variant.to_json(),
        template_digests=templates.digests(),
        parallelism=args.parallelism,
        samples=str(args.samples),
        out=str(args.out),
        records=count,
    )
    return 0


def _cmd_meta(args: argparse.Namespace) -> int:
    suite = load_suite(args.suite)
    for violation in validate_suite(suite):
        print(str(violation), file=sys.stderr)
    config = _backend_config(args)
    backend = make_backend(config)
    variant = _variant(args)
    templates = _templates(args)
    mode = _MODES[args.mode]
    result = run_meta_suite(
        suite, backend, mode=mode, variant=variant,
        parallelism=args.parallelism, templates=templates,
    )
    write_meta_result(result, variant, args.out)
    _echo_config(
        "meta",
        model=config.model_id,
        backend=config.kind,
        temperature=config.temperature,
        mode=mode.value,
        prompt_variant=variant.to_json(),
        template_digests=templates.digests(),
        parallelism=args.parallelism,
        suite=str(args.suite),
        out=str(args.out),
        total_pass_rate=round(result.total_pass_rate, 2),
    )
    return 0


def _cmd_align(args: argparse.Namespace) -> int:
    report = align_runs(args.reference, args.candidate)
    write_alignment_report(report, args.out)
    _echo_config(
        "align",
        reference=str(args.reference),
        candidate=str(args.candidate),
        out=str(args.out),
        n_samples=report.n_samples,
    )
    return 0


def _cmd_distill(args: argparse.Namespace) -> int:
    samples = load_samples(args.samples)
    variant = _variant(args)
    templates = _templates(args)
    traces, dropped = export_traces(args.run, samples, variant, templates)
    if args.balance is not None:
        traces = balance_selection(traces, args.balance)
    count = write_traces(traces, args.out)
    _echo_config(
        "distill",
        run=str(args.run),
        samples=str(args.samples),
        prompt_variant=variant.to_json(),
        template_digests=templates.digests(),
        balance=args.balance,
        out=str(args.out),
        records=count,
        dropped=dropped,
    )
    return 0


def _cmd_report(args: argparse.Namespace) -> int:
    results = [load_meta_result(path) for path in args.results]
    fmt = {"md": "markdown", "csv": "csv", "json": "json"}[args.format]
    text = render_report(results, fmt)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        print(text, end="")
    _echo_config("report", results=[str(p) for p in args.results], format=args.format,
                 out=str(args.out) if args.out else None)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gqajudge",
        description="Judge harness for grounded question answering.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_eval = sub.add_parser("evaluate", help="evaluate a JSONL sample file into a run file")
    p_eval.add_argument("--samples", required=True)
    p_eval.add_argument("--out", required=True)
    _add_backend_flags(p_eval)
    _add_run_flags(p_eval)
    p_eval.set_defaults(func=_cmd_evaluate)

    p_meta = sub.add_parser("meta", help="run a judge over a unit-test suite")
    p_meta.add_argument("--suite", required=True)
    p_meta.add_argument("--out", required=True)
    _add_backend_flags(p_meta)
    _add_run_flags(p_meta)
    p_meta.set_defaults(func=_cmd_meta)

    p_align = sub.add_parser("align", help="measure alignment between two run files")
    p_align.add_argument("--reference", required=True)
    p_align.add_argument("--candidate", required=True)
    p_align.add_argument("--out", required=True)
    p_align.set_defaults(func=_cmd_align)

    p_distill = sub.add_parser("distill", help="export finetuning traces from a run file")
    p_distill.add_argument("--run", required=True)
    p_distill.add_argument("--samples", required=True)
    p_distill.add_argument("--out", required=True)
    p_distill.add_argument("--balance", type=int, help="select a score-balanced subset of this size")
    p_distill.add_argument("--templates")
    p_distill.add_argument("--no-ground-truth", action="store_true")
    p_distill.add_argument("--no-justification", action="store_true")
    p_distill.add_argument("--no-cot", action="store_true")
    p_distill.set_defaults(func=_cmd_distill)

    p_report = sub.add_parser("report", help="render meta results as a table plus grids")
    p_report.add_argument("results", nargs="+")
    p_report.add_argument("--format", choices=["md", "csv", "json"], default="md")
    p_report.add_argument("--out")
    p_report.set_defaults(func=_cmd_report)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (HarnessError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
