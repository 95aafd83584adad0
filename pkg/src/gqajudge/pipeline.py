"""Evaluation orchestration: per-sample judge calls with skip logic.

Four-call mode issues answer relevancy and completeness first, then uses
their nullness to decide whether the usefulness and faithfulness calls can
be skipped: relevancy gates usefulness, and relevancy together with
usefulness gates faithfulness (completeness gates nothing). Positive
acceptance and negative rejection are derived without a call. Single-call
mode asks for all four metrics in one prompt and never skips.

Call-count consequences, enforced by tests: between 2 and 4 calls per
sample, and for the five clean situations exactly

    answerable_answered                    3
    answerable_refused (with related info) 4
    adversarial_answered                   3
    adversarial_refused_with_related_info  4
    adversarial_refused_bare               3

A relevancy format error makes skip decisions impossible, so the pipeline
degrades to issuing the remaining calls and marks the situation
undetermined.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from enum import Enum
from pathlib import Path
from typing import Iterable, Iterator

from gqajudge.backend import Backend, BackendConfig, CompletionRequest, make_backend
from gqajudge.errors import TransientBackendError
from gqajudge.model import (
    CALL_NAMES,
    COMBINED_CALL,
    METRICS,
    EvaluationReport,
    GroundedQASample,
    MetricScore,
    derive_acceptance_rejection,
    infer_situation,
)
from gqajudge.prompt import (
    ParsedEvaluation,
    PromptVariant,
    TemplateSet,
    parse_combined_response,
    parse_metric_response,
    render_combined_prompt,
    render_metric_prompt,
)


class EvaluationMode(str, Enum):
    FOUR_CALL = "four_call"
    SINGLE_CALL = "single_call"


def _as_backend(backend: Backend | BackendConfig) -> Backend:
    if isinstance(backend, BackendConfig):
        return make_backend(backend)
    return backend


def _issue_call(
    backend: Backend,
    call: str,
    prompt: str,
    sample: GroundedQASample,
) -> tuple[str | None, int]:
    """Returns (raw_text, attempts); raw_text is None when retries ran out."""
    request = CompletionRequest(
        model_id=backend.config.model_id,
        prompt=prompt,
        temperature=backend.config.temperature,
        max_output_tokens=backend.config.max_output_tokens,
        request_tag=f"{sample.sample_id}/{call}",
    )
    try:
        result = backend.complete(request)
    except TransientBackendError:
        return None, backend.config.retry.max_attempts
    return result.text, result.attempts


def _four_call(
    sample: GroundedQASample,
    backend: Backend,
    variant: PromptVariant,
    templates: TemplateSet | None,
) -> EvaluationReport:
    raw_responses: dict[str, str] = {}
    attempts: dict[str, int] = {}
    skipped: list[str] = []
    parsed: dict[str, ParsedEvaluation] = {}

    def run(call: str) -> MetricScore:
        prompt_text = render_metric_prompt(call, sample, variant, templates)
        raw, tries = _issue_call(backend, call, prompt_text, sample)
        attempts[call] = tries
        if raw is None:
            parsed[call] = ParsedEvaluation(metric=call, score=MetricScore.format_error())
        else:
            raw_responses[call] = raw
            parsed[call] = parse_metric_response(call, raw)
        return parsed[call].score

    relevancy = run("answer_relevancy")
    completeness = run("completeness")

    if relevancy.is_null or relevancy.is_format_error:
        usefulness = run("usefulness")
    else:
        usefulness = MetricScore.null()
        skipped.append("usefulness")

    if not relevancy.is_null or not usefulness.is_null:
        faithfulness = run("faithfulness")
    else:
        faithfulness = MetricScore.null()
        skipped.append("faithfulness")

    pa, nr = derive_acceptance_rejection(relevancy, completeness)
    scores = {
        "answer_relevancy": relevancy,
        "completeness": completeness,
        "usefulness": usefulness,
        "faithfulness": faithfulness,
        "positive_acceptance": pa,
        "negative_rejection": nr,
    }
    justifications = {
        m: p.justification for m, p in parsed.items() if p.justification is not None
    }
    return EvaluationReport(
        sample_id=sample.sample_id,
        scores=scores,
        situation=infer_situation(relevancy, completeness, usefulness),
        skipped_calls=tuple(skipped),
        justifications=justifications,
        raw_responses=raw_responses,
        attempts=attempts,
    )


def _single_call(
    sample: GroundedQASample,
    backend: Backend,
    variant: PromptVariant,
    templates: TemplateSet | None,
) -> EvaluationReport:
    prompt_text = render_combined_prompt(sample, variant, templates)
    raw, tries = _issue_call(backend, COMBINED_CALL, prompt_text, sample)
    raw_responses = {} if raw is None else {COMBINED_CALL: raw}
    if raw is None:
        parsed = {m: ParsedEvaluation(metric=m, score=MetricScore.format_error()) for m in CALL_NAMES}
    else:
        parsed = parse_combined_response(raw)

    relevancy = parsed["answer_relevancy"].score
    completeness = parsed["completeness"].score
    usefulness = parsed["usefulness"].score
    pa, nr = derive_acceptance_rejection(relevancy, completeness)
    scores = {
        "answer_relevancy": relevancy,
        "completeness": completeness,
        "usefulness": usefulness,
        "faithfulness": parsed["faithfulness"].score,
        "positive_acceptance": pa,
        "negative_rejection": nr,
    }
    justifications = {
        m: p.justification for m, p in parsed.items() if p.justification is not None
    }
    return EvaluationReport(
        sample_id=sample.sample_id,
        scores=scores,
        situation=infer_situation(relevancy, completeness, usefulness),
        skipped_calls=(),
        justifications=justifications,
        raw_responses=raw_responses,
        attempts={COMBINED_CALL: tries},
    )


def evaluate_sample(
    sample: GroundedQASample,
    backend: Backend | BackendConfig,
    mode: EvaluationMode = EvaluationMode.FOUR_CALL,
    variant: PromptVariant = PromptVariant(),
    templates: TemplateSet | None = None,
) -> EvaluationReport:
    """Evaluate one sample; judge failures surface as format-error scores.

    Transient backend failures that exhaust their retry budget poison only
    the affected call's metrics; configuration-level failures (bad
    credentials, missing fixtures, replay cache misses) propagate.
    """
    backend = _as_backend(backend)
    if mode == EvaluationMode.SINGLE_CALL:
        return _single_call(sample, backend, variant, templates)
    return _four_call(sample, backend, variant, templates)


def evaluate_batch(
    samples: Iterable[GroundedQASample],
    backend: Backend | BackendConfig,
    mode: EvaluationMode = EvaluationMode.FOUR_CALL,
    variant: PromptVariant = PromptVariant(),
    parallelism: int = 1,
    templates: TemplateSet | None = None,
) -> Iterator[EvaluationReport]:
    """Evaluate samples with at most ``parallelism`` in flight.

    Reports are yielded in input order regardless of completion order; a
    sample whose judge responses are unusable yields a format-error-laden
    report rather than aborting the batch.
    """
    if parallelism < 1:
        raise ValueError("parallelism must be >= 1")
    backend = _as_backend(backend)
    samples = list(samples)
    if parallelism == 1:
        for sample in samples:
            yield evaluate_sample(sample, backend, mode, variant, templates)
        return
    with ThreadPoolExecutor(max_workers=parallelism) as pool:
        yield from pool.map(
            lambda s: evaluate_sample(s, backend, mode, variant, templates), samples
        )


def report_to_record(
    report: EvaluationReport,
    mode: EvaluationMode,
    model_id: str,
    variant: PromptVariant,
) -> dict:
    """Flatten a report into the run-record form used in run files."""
    return {
        "sample_id": report.sample_id,
        "mode": mode.value,
        "scores": {m: report.scores[m].to_json() for m in METRICS},
        "situation": report.situation.value,
        "skipped_calls": list(report.skipped_calls),
        "justifications": {m: report.justifications[m] for m in METRICS if m in report.justifications},
        "raw_responses": dict(report.raw_responses),
        "attempts": dict(report.attempts),
        "model_id": model_id,
        "prompt_variant": variant.to_json(),
    }


def write_run_file(records: Iterable[dict], path: str | Path) -> int:
    """Write run records as JSONL; returns the number of records written."""
    count = 0
    with Path(path).open("w", encoding="utf-8") as handle:
        for record in records:
            handle.write(json.dumps(record, ensure_ascii=False) + "\n")
            count += 1
    return count


def load_run(path: str | Path) -> list[dict]:
    """Read a run file back into records, skipping blank lines."""
    records = []
    with Path(path).open(encoding="utf-8") as handle:
        for line in handle:
            if line.strip():
                records.append(json.loads(line))
    return records
