"""Alignment between two evaluation runs of the same samples.

Likert metrics are compared with Spearman rank correlation (average ranks
for ties, Pearson over the rank vectors); nullable boolean metrics with a
three-class macro F1 over {true, false, null}. Pairs where either side is
null or a format error are excluded from the correlation and the exclusion
count is surfaced, since inventing a rank for "not applicable" would
manufacture correlation out of nothing.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Mapping, Sequence

from gqajudge.errors import InsufficientPairsError, NoOverlapError
from gqajudge.model import BOOLEAN_METRICS, FORMAT_ERROR_JSON, LIKERT_METRICS
from gqajudge.pipeline import load_run


@dataclass(frozen=True)
class SpearmanResult:
    """``value`` is None when the correlation is undefined (zero rank variance)."""

    value: float | None
    excluded: int

    def to_json(self) -> dict:
        return {"value": self.value if self.value is not None else "undefined", "excluded": self.excluded}


@dataclass(frozen=True)
class AlignmentReport:
    n_samples: int
    spearman: Mapping[str, SpearmanResult]
    macro_f1: Mapping[str, float]

    def to_json(self) -> dict:
        return {
            "n_samples": self.n_samples,
            "spearman": {m: self.spearman[m].to_json() for m in LIKERT_METRICS},
            "macro_f1": {m: self.macro_f1[m] for m in BOOLEAN_METRICS},
        }


def _usable_likert(value: Any) -> bool:
    return type(value) is int


def _average_ranks(values: Sequence[int]) -> list[float]:
    """Ranks starting at 1; tied values share the mean of their positions."""
    order = sorted(range(len(values)), key=lambda i: values[i])
    ranks = [0.0] * len(values)
    i = 0
    while i < len(order):
        j = i
        while j + 1 < len(order) and values[order[j + 1]] == values[order[i]]:
            j += 1
        mean_rank = (i + j) / 2 + 1
        for k in range(i, j + 1):
            ranks[order[k]] = mean_rank
        i = j + 1
    return ranks


def _pearson(xs: Sequence[float], ys: Sequence[float]) -> float | None:
    n = len(xs)
    mean_x = sum(xs) / n
    mean_y = sum(ys) / n
    dx = [x - mean_x for x in xs]
    dy = [y - mean_y for y in ys]
    var_x = sum(d * d for d in dx)
    var_y = sum(d * d for d in dy)
    if var_x == 0.0 or var_y == 0.0:
        return None
    return sum(a * b for a, b in zip(dx, dy)) / math.sqrt(var_x * var_y)


def spearman(xs: Sequence[Any], ys: Sequence[Any]) -> SpearmanResult:
    """Rank correlation over paired Likert values with null exclusion.

    Elements may be ints, None, or the serialized format-error marker;
    a pair is excluded when either element is not an int. Raises
    InsufficientPairsError with fewer than two usable pairs; returns an
    undefined result when either side has no rank variance.
    """
    if len(xs) != len(ys):
        raise ValueError(f"length mismatch: {len(xs)} vs {len(ys)}")
    usable = [(x, y) for x, y in zip(xs, ys) if _usable_likert(x) and _usable_likert(y)]
    excluded = len(xs) - len(usable)
    if len(usable) < 2:
        raise InsufficientPairsError(
            f"need at least 2 usable pairs, got {len(usable)} ({excluded} excluded)"
        )
    rank_x = _average_ranks([x for x, _ in usable])
    rank_y = _average_ranks([y for _, y in usable])
    return SpearmanResult(value=_pearson(rank_x, rank_y), excluded=excluded)


_CLASSES = (True, False, None)


def _is_class(value: Any) -> bool:
    return value is None or isinstance(value, bool)


def macro_f1_three_class(ref: Sequence[Any], pred: Sequence[Any]) -> float:
    """Macro F1 over the classes {true, false, null}.

    A format-error prediction counts as a miss for the reference class and
    inflates no class's predicted count. Per-class F1 is 2PR/(P+R), taken
    as 0 when P+R=0; the macro mean runs over classes that appear in the
    reference or the predictions, so a class a small test set never
    exercises neither rewards nor punishes the judge.
    """
    if len(ref) != len(pred):
        raise ValueError(f"length mismatch: {len(ref)} vs {len(pred)}")
    if not ref:
        raise ValueError("empty input")
    bad = [v for v in ref if not _is_class(v)]
    if bad:
        raise ValueError(f"reference values must be true/false/null, got {bad[:3]}")

    present = [c for c in _CLASSES if any(r is c for r in ref) or any(p is c for p in pred)]
    f1_values = []
    for cls in present:
        tp = sum(1 for r, p in zip(ref, pred) if r is cls and p is cls)
        fp = sum(1 for r, p in zip(ref, pred) if r is not cls and p is cls)
        fn = sum(1 for r, p in zip(ref, pred) if r is cls and p is not cls)
        precision = tp / (tp + fp) if tp + fp else 0.0
        recall = tp / (tp + fn) if tp + fn else 0.0
        f1_values.append(2 * precision * recall / (precision + recall) if precision + recall else 0.0)
    return sum(f1_values) / len(f1_values)


def _normalize_boolean(value: Any) -> Any:
    """Run-file score to a class value; format errors stay distinct from all classes."""
    if value is None or isinstance(value, bool):
        return value
    return FORMAT_ERROR_JSON


def _normalize_likert(value: Any) -> Any:
    if type(value) is int:
        return value
    return None if value is None else FORMAT_ERROR_JSON


def align_runs(reference_path: str | Path, candidate_path: str | Path) -> AlignmentReport:
    """Inner-join two run files on sample_id and measure their alignment.

    Samples present in only one run are dropped from the join (their count
    is visible as the difference with each file's length). Per-metric
    failures (for instance too few usable Likert pairs) are recorded as
    undefined rather than aborting the other metrics.
    """
    reference = {r["sample_id"]: r for r in load_run(reference_path)}
    candidate = {r["sample_id"]: r for r in load_run(candidate_path)}
    shared = [sid for sid in reference if sid in candidate]
    if not shared:
        raise NoOverlapError("runs share no sample_id")

    spearman_results: dict[str, SpearmanResult] = {}
    for metric in LIKERT_METRICS:
        xs = [_normalize_likert(reference[sid]["scores"][metric]) for sid in shared]
        ys = [_normalize_likert(candidate[sid]["scores"][metric]) for sid in shared]
        try:
            spearman_results[metric] = spearman(xs, ys)
        except InsufficientPairsError:
            usable = sum(1 for x, y in zip(xs, ys) if _usable_likert(x) and _usable_likert(y))
            spearman_results[metric] = SpearmanResult(value=None, excluded=len(shared) - usable)

    f1_results: dict[str, float] = {}
    for metric in BOOLEAN_METRICS:
        ref_values = [_normalize_boolean(reference[sid]["scores"][metric]) for sid in shared]
        pred_values = [_normalize_boolean(candidate[sid]["scores"][metric]) for sid in shared]
        # A format error in the *reference* run is no ground truth at all;
        # treat the pair as absent for this metric.
        pairs = [(r, p) for r, p in zip(ref_values, pred_values) if _is_class(r)]
        if pairs:
            f1_results[metric] = macro_f1_three_class([r for r, _ in pairs], [p for _, p in pairs])
        else:
            f1_results[metric] = 0.0

    return AlignmentReport(
        n_samples=len(shared),
        spearman=spearman_results,
        macro_f1=f1_results,
    )


def write_alignment_report(report: AlignmentReport, path: str | Path) -> None:
    Path(path).write_text(json.dumps(report.to_json(), indent=2, ensure_ascii=False) + "\n", encoding="utf-8")
