"""Rendering of meta-evaluation results as tables and text grids."""

from __future__ import annotations

import csv
import io
import json
from typing import Sequence

from gqajudge.errors import MixedSuitesError
from gqajudge.model import METRICS

_COLUMN_TITLES = {
    "answer_relevancy": "Answer relevancy",
    "completeness": "Completeness",
    "usefulness": "Usefulness",
    "faithfulness": "Faithfulness",
    "positive_acceptance": "Positive acceptance",
    "negative_rejection": "Negative rejection",
}

#: Grid cell glyphs, one per outcome state; blank marks an absent test.
STATE_GLYPHS = {
    "pass": ".",
    "fail": "x",
    "format_error": "!",
    "skipped_pass": "/",
    None: " ",
}

GRID_LEGEND = "legend: . pass   x fail   ! format_error   / skipped_pass"


def _check_same_suite(results: Sequence[dict]) -> str:
    suites = {r["suite"] for r in results}
    if len(suites) != 1:
        raise MixedSuitesError(f"results span multiple suites: {sorted(suites)}")
    return next(iter(suites))


def _fmt(value: float) -> str:
    return f"{value:.2f}"


def _render_grid(matrix_entry: dict) -> list[str]:
    lines = ["        " + " ".join(f"{t:>2}" for t in range(1, 17))]
    for set_id, row in zip(matrix_entry["set_ids"], matrix_entry["rows"]):
        cells = " ".join(f"{STATE_GLYPHS[state]:>2}" for state in row)
        lines.append(f"set {set_id:>3} {cells}")
    return lines


def _render_markdown(results: Sequence[dict], suite: str) -> str:
    columns = [_COLUMN_TITLES[m] for m in METRICS] + ["Total"]
    header = "| Model | Mode | " + " | ".join(columns) + " |"
    divider = "|---|---|" + "---:|" * len(columns)

    values = [[r["agreement"][m] for m in METRICS] + [r["total_pass_rate"]] for r in results]
    column_max = [max(row[i] for row in values) for i in range(len(columns))]

    lines = [f"# Suite: {suite}", "", header, divider]
    for result, row in zip(results, values):
        cells = [
            f"**{_fmt(v)}**" if v == column_max[i] else _fmt(v)
            for i, v in enumerate(row)
        ]
        lines.append(f"| {result['model_id']} | {result['mode']} | " + " | ".join(cells) + " |")

    for result in results:
        lines += ["", f"## {result['model_id']} ({result['mode']})"]
        for metric in METRICS:
            lines += ["", f"### {metric}", "```"]
            lines += _render_grid(result["matrix"][metric])
            lines += [GRID_LEGEND, "```"]
    return "\n".join(lines) + "\n"


def _render_csv(results: Sequence[dict]) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(["suite", "model_id", "mode"] + list(METRICS) + ["total_pass_rate"])
    for result in results:
        writer.writerow(
            [result["suite"], result["model_id"], result["mode"]]
            + [result["agreement"][m] for m in METRICS]
            + [result["total_pass_rate"]]
        )
    return buffer.getvalue()


def _render_json(results: Sequence[dict]) -> str:
    payload = [
        {
            "suite": r["suite"],
            "model_id": r["model_id"],
            "mode": r["mode"],
            "agreement": {m: r["agreement"][m] for m in METRICS},
            "total_pass_rate": r["total_pass_rate"],
            "matrix": r["matrix"],
        }
        for r in results
    ]
    return json.dumps(payload, indent=2, ensure_ascii=False) + "\n"


def render_report(results: Sequence[dict], format: str = "markdown") -> str:
    """Render one or more meta results (same suite) in the requested format.

    Markdown gets column-max highlighting and per-metric grids; csv is a
    bare header plus numeric rows; json mirrors the table and grids.
    """
    if not results:
        raise ValueError("no results to render")
    suite = _check_same_suite(results)
    if format in ("md", "markdown"):
        return _render_markdown(results, suite)
    if format == "csv":
        return _render_csv(results)
    if format == "json":
        return _render_json(results)
    raise ValueError(f"unknown report format {format!r}")
