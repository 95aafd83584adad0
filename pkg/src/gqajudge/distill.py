"""Finetuning trace export and score-balanced subset selection.

A trace pairs the combined four-metric prompt for a sample with a single
completion holding all four metric evaluations, built by merging the four
per-call responses of a pipeline run (skipped calls contribute a canonical
null-score stub). Every emitted completion must parse back to the scores
recorded in the source run; records that cannot are dropped and counted
rather than exported wrong.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from gqajudge.errors import MissingRawResponsesError
from gqajudge.model import (
    CALL_NAMES,
    LIKERT_METRICS,
    METRICS,
    GroundedQASample,
    MetricScore,
)
from gqajudge.pipeline import EvaluationMode, load_run
from gqajudge.prompt import (
    PromptVariant,
    TemplateSet,
    canonical_response,
    extract_json_object,
    parse_combined_response,
    render_combined_prompt,
)

STUB_JUSTIFICATION = "Not applicable in this situation."


@dataclass(frozen=True)
class TraceRecord:
    prompt: str
    completion: str
    sample_id: str
    scores: Mapping[str, int | bool | None]

    def to_json(self) -> dict:
        return {
            "prompt": self.prompt,
            "completion": self.completion,
            "sample_id": self.sample_id,
            "scores": {m: self.scores[m] for m in METRICS},
        }


def _merged_completion(record: dict, variant: PromptVariant) -> str | None:
    """Merge the four per-call response objects into one combined output.

    Returns None when any issued call's raw response is absent or holds no
    JSON object, which disqualifies the record.
    """
    skipped = set(record.get("skipped_calls", ()))
    raw_responses = record.get("raw_responses", {})
    merged: dict = {}
    for call in CALL_NAMES:
        if call in skipped:
            stub = canonical_response(
                call, MetricScore.null(), variant, justification=STUB_JUSTIFICATION
            )
            merged.update(json.loads(stub))
            continue
        raw = raw_responses.get(call)
        if raw is None:
            return None
        obj = extract_json_object(raw)
        if obj is None:
            return None
        merged.update(obj)
    return json.dumps(merged, ensure_ascii=False, indent=2)


def _round_trips(completion: str, record: dict) -> bool:
    """The completion must re-parse to the run's scores; format errors never match."""
    parsed = parse_combined_response(completion)
    for call in CALL_NAMES:
        recorded = MetricScore.from_json(record["scores"][call])
        if recorded.is_format_error or parsed[call].score.is_format_error:
            return False
        if parsed[call].score != recorded:
            return False
    return True


def export_traces(
    run_path: str | Path,
    samples: Sequence[GroundedQASample],
    variant: PromptVariant = PromptVariant(),
    templates: TemplateSet | None = None,
) -> tuple[list[TraceRecord], int]:
    """Build trace records from a four-call run; returns (records, dropped).

    Dropped records are those whose responses cannot be merged or whose
    merged completion fails the round-trip check, plus run records with no
    matching sample.
    """
    records = load_run(run_path)
    if any(r.get("mode") != EvaluationMode.FOUR_CALL.value for r in records):
        raise MissingRawResponsesError(
            "trace export needs a run produced in four_call mode with per-call raw responses"
        )
    by_id = {s.sample_id: s for s in samples}
    traces: list[TraceRecord] = []
    dropped = 0
    for record in records:
        sample = by_id.get(record["sample_id"])
        if sample is None:
            dropped += 1
            continue
        completion = _merged_completion(record, variant)
        if completion is None or not _round_trips(completion, record):
            dropped += 1
            continue
        traces.append(
            TraceRecord(
                prompt=render_combined_prompt(sample, variant, templates),
                completion=completion,
                sample_id=record["sample_id"],
                scores={m: record["scores"][m] for m in METRICS},
            )
        )
    return traces, dropped


_LIKERT_VALUES = (1, 2, 3, 4, 5, None)
_BOOLEAN_VALUES = (True, False, None)


def _value_index(metric: str, value) -> int:
    if metric in LIKERT_METRICS:
        if value is None:
            return 5
        if type(value) is int and 1 <= value <= 5:
            return value - 1
    else:
        if value is True:
            return 0
        if value is False:
            return 1
        if value is None:
            return 2
    raise ValueError(f"unbalanceable score {value!r} for {metric}")


def _metric_value_count(metric: str) -> int:
    return len(_LIKERT_VALUES) if metric in LIKERT_METRICS else len(_BOOLEAN_VALUES)


def balance_selection(records: Sequence[TraceRecord], target: int) -> list[TraceRecord]:
    """Greedy subset of ``target`` records with score histograms nearest uniform.

    At each step the candidate minimizing the summed squared deviation
    between the subset's per-metric score distributions and the uniform
    distribution over that metric's realizable values is taken; ties break
    on ascending sample_id. Returns the selection in pool order.
    """
    if target > len(records):
        raise ValueError(f"target {target} exceeds pool of {len(records)} records")
    if target < 0:
        raise ValueError("target must be >= 0")

    counts = {m: [0] * _metric_value_count(m) for m in METRICS}
    indices = {m: [_value_index(m, r.scores[m]) for r in records] for m in METRICS}
    remaining = sorted(range(len(records)), key=lambda i: records[i].sample_id)
    chosen: set[int] = set()

    for step in range(target):
        size = step + 1
        best_index = None
        best_cost = None
        for i in remaining:
            cost = 0.0
            for m in METRICS:
                uniform = 1.0 / _metric_value_count(m)
                added = indices[m][i]
                for v, count in enumerate(counts[m]):
                    share = (count + (1 if v == added else 0)) / size
                    cost += (share - uniform) ** 2
            if best_cost is None or cost < best_cost:
                best_cost = cost
                best_index = i
        chosen.add(best_index)
        remaining.remove(best_index)
        for m in METRICS:
            counts[m][indices[m][best_index]] += 1

    return [records[i] for i in range(len(records)) if i in chosen]


def write_traces(records: Iterable[TraceRecord], path: str | Path) -> int:
    count = 0
    with Path(path).open("w", encoding="utf-8") as handle:
        for record in records:
            handle.write(json.dumps(record.to_json(), ensure_ascii=False) + "\n")
            count += 1
    return count


def load_traces(path: str | Path) -> list[TraceRecord]:
    records = []
    with Path(path).open(encoding="utf-8") as handle:
        for line in handle:
            if not line.strip():
                continue
            obj = json.loads(line)
            records.append(
                TraceRecord(
                    prompt=obj["prompt"],
                    completion=obj["completion"],
                    sample_id=obj["sample_id"],
                    scores=obj["scores"],
                )
            )
    return records
