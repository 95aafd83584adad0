"""Meta-evaluation: run a judge over a unit-test suite and score the judge.

Each test's six scores are checked against its expected sets. A skipped
call whose null score matches a null expectation is recorded as
``skipped_pass`` and counts toward agreement (the pipeline proved the
metric inapplicable without spending the call). Format errors always
count against the judge, even when null was expected.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal
from pathlib import Path
from typing import Iterable, Mapping

from gqajudge.backend import Backend, BackendConfig, make_backend
from gqajudge.model import CALL_NAMES, METRICS, EvaluationReport, MetricScore, score_in
from gqajudge.pipeline import (
    EvaluationMode,
    evaluate_batch,
    report_to_record,
)
from gqajudge.prompt import (
    PromptVariant,
    TemplateSet,
    canonical_combined_response,
    canonical_response,
)
from gqajudge.suite import TestSuite, UnitTest

PASS = "pass"
FAIL = "fail"
FORMAT_ERROR = "format_error"
SKIPPED_PASS = "skipped_pass"

_PASS_STATES = (PASS, SKIPPED_PASS)


@dataclass(frozen=True)
class TestOutcome:
    __test__ = False  # domain type, not a pytest class

    set_id: int
    test_type: int
    states: Mapping[str, str]
    report: EvaluationReport


@dataclass(frozen=True)
class MetaResult:
    suite_name: str
    model_id: str
    mode: EvaluationMode
    outcomes: tuple[TestOutcome, ...]
    agreement: Mapping[str, float]  # full precision; round2 for display
    total_pass_rate: float


def round2(value: float) -> float:
    """Round half-up to two decimals, for display and file output."""
    return float(Decimal(repr(value)).quantize(Decimal("0.01"), rounding=ROUND_HALF_UP))


def metric_agreement_rate(outcomes: Iterable[TestOutcome], metric: str) -> float:
    """Percentage of tests whose ``metric`` state passed (skipped passes count)."""
    outcomes = list(outcomes)
    if not outcomes:
        raise ValueError("no outcomes to aggregate")
    passed = sum(1 for o in outcomes if o.states[metric] in _PASS_STATES)
    return 100.0 * passed / len(outcomes)


def total_pass_rate(agreement: Mapping[str, float]) -> float:
    """Unweighted mean of the six per-metric agreement rates."""
    missing = [m for m in METRICS if m not in agreement]
    if missing:
        raise ValueError(f"agreement map missing metric(s): {missing}")
    return sum(agreement[m] for m in METRICS) / len(METRICS)


def _metric_state(test: UnitTest, report: EvaluationReport, metric: str) -> str:
    score = report.scores[metric]
    if score.is_format_error:
        return FORMAT_ERROR
    matched = score_in(score, test.expectations[metric])
    if metric in report.skipped_calls and score.is_null and matched:
        return SKIPPED_PASS
    return PASS if matched else FAIL


def check_outcome(test: UnitTest, report: EvaluationReport) -> TestOutcome:
    states = {m: _metric_state(test, report, m) for m in METRICS}
    return TestOutcome(set_id=test.set_id, test_type=test.test_type, states=states, report=report)


def run_meta_suite(
    suite: TestSuite,
    backend: Backend | BackendConfig,
    mode: EvaluationMode = EvaluationMode.FOUR_CALL,
    variant: PromptVariant = PromptVariant(),
    parallelism: int = 1,
    templates: TemplateSet | None = None,
) -> MetaResult:
    """Evaluate every test's sample and aggregate agreement rates."""
    if isinstance(backend, BackendConfig):
        backend = make_backend(backend)
    tests = list(suite.tests)
    reports = evaluate_batch(
        (t.sample for t in tests),
        backend,
        mode=mode,
        variant=variant,
        parallelism=parallelism,
        templates=templates,
    )
    outcomes = tuple(check_outcome(test, report) for test, report in zip(tests, reports))
    agreement = {m: metric_agreement_rate(outcomes, m) for m in METRICS}
    return MetaResult(
        suite_name=suite.name,
        model_id=backend.model_id,
        mode=mode,
        outcomes=outcomes,
        agreement=agreement,
        total_pass_rate=total_pass_rate(agreement),
    )


def pass_matrix(outcomes: Iterable[TestOutcome]) -> dict[str, dict]:
    """Per-metric grids of cell states, rows = set ids, columns = types 1-16.

    Cells with no test (partial suites) hold null.
    """
    outcomes = list(outcomes)
    set_ids = sorted({o.set_id for o in outcomes})
    types = list(range(1, 17))
    by_coord = {(o.set_id, o.test_type): o for o in outcomes}
    grids: dict[str, dict] = {}
    for metric in METRICS:
        rows = []
        for set_id in set_ids:
            row = []
            for test_type in types:
                outcome = by_coord.get((set_id, test_type))
                row.append(outcome.states[metric] if outcome is not None else None)
            rows.append(row)
        grids[metric] = {"set_ids": set_ids, "rows": rows}
    return grids


def meta_result_to_json(result: MetaResult, variant: PromptVariant) -> dict:
    """Serializable meta-result form; agreement values carry display rounding."""
    return {
        "suite": result.suite_name,
        "model_id": result.model_id,
        "mode": result.mode.value,
        "agreement": {m: round2(result.agreement[m]) for m in METRICS},
        "total_pass_rate": round2(result.total_pass_rate),
        "matrix": pass_matrix(result.outcomes),
        "outcomes": [
            {
                "set_id": o.set_id,
                "test_type": o.test_type,
                "states": {m: o.states[m] for m in METRICS},
                "report": report_to_record(o.report, result.mode, result.model_id, variant),
            }
            for o in result.outcomes
        ],
    }


def write_meta_result(result: MetaResult, variant: PromptVariant, path: str | Path) -> None:
    payload = meta_result_to_json(result, variant)
    Path(path).write_text(json.dumps(payload, indent=2, ensure_ascii=False) + "\n", encoding="utf-8")


def load_meta_result(path: str | Path) -> dict:
    return json.loads(Path(path).read_text(encoding="utf-8"))


def _pick_expected(metric: str, values: tuple) -> MetricScore:
    """Deterministic representative of an expectation set, non-null preferred."""
    concrete = [v for v in values if v is not None]
    if not concrete:
        return MetricScore.null()
    if all(type(v) is bool for v in concrete):
        return MetricScore.boolean(True in concrete)
    return MetricScore.likert(max(v for v in concrete if type(v) is int))


def oracle_fixtures(
    suite: TestSuite,
    variant: PromptVariant = PromptVariant(),
    mode: EvaluationMode = EvaluationMode.FOUR_CALL,
) -> dict[str, str]:
    """Scripted-backend fixtures that answer every test with an expected score.

    Running the meta suite against these fixtures must yield 100.0
    agreement on every metric; anything less is a harness defect. Useful
    both for tests and as an offline smoke check of a deployment.
    """
    fixtures: dict[str, str] = {}
    for test in suite.tests:
        expected = {m: _pick_expected(m, test.expectations[m]) for m in METRICS}
        if mode == EvaluationMode.SINGLE_CALL:
            fixtures[f"{test.sample.sample_id}/combined"] = canonical_combined_response(
                {m: expected[m] for m in CALL_NAMES}, variant
            )
        else:
            for call in CALL_NAMES:
                fixtures[f"{test.sample.sample_id}/{call}"] = canonical_response(
                    call, expected[call], variant
                )
    return fixtures
