"""Prompt rendering and judge-output parsing.

Templates are plain UTF-8 files with double-brace placeholders, shipped as
package defaults and overridable per run with a template directory, so
prompts can be swapped per model family without touching code. Rendering
is a pure function of (metric, sample, variant, template text): identical
inputs produce byte-identical prompts.

Judge outputs are JSON objects using a fixed key map:

* scores: ``answer_N_<metric>``
* justifications: ``answer_N_justification_<metric>``
* chain-of-thought: metric-specific keys prefixed ``answer_N_cot_``

with N=1 for the first answer and N=2 for the second. When a ground truth
is included it is always answer 1, and only answer 2's score is consumed;
without a ground truth the sole answer uses the N=1 keys.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Any, Mapping

from gqajudge.errors import MissingGroundTruthError
from gqajudge.model import BOOLEAN_METRICS, CALL_NAMES, LIKERT_METRICS, GroundedQASample, MetricScore

TEMPLATE_NAMES = CALL_NAMES + ("combined",)

#: Chain-of-thought keys requested per metric (suffix after ``answer_N_``).
#: Completeness deliberately has none; its instructions already walk the
#: judge through the reference scan.
COT_KEYS: dict[str, tuple[str, ...]] = {
    "answer_relevancy": ("cot_is_adversarial",),
    "completeness": (),
    "usefulness": ("cot_related_information_present",),
    "faithfulness": ("cot_sentence_analysis",),
}

_COT_HINTS = {
    "cot_is_adversarial": "true if the references do not contain an answer to the question, else false",
    "cot_related_information_present": "true if the answer adds related information alongside a refusal, else false",
    "cot_sentence_analysis": '[{"sentence": "...", "faithful": true | false | null, "note": "..."}, ...]',
}

_SCORE_HINTS = {
    "answer_relevancy": "<integer 1-5, or null if the answer declines to respond>",
    "completeness": "<integer 1-5, or null if the references contain no answer>",
    "usefulness": "<true or false, or null if no related information accompanies a refusal>",
    "faithfulness": "<true or false, or null if the answer carries no information>",
}


@dataclass(frozen=True)
class PromptVariant:
    """Prompt ablation switches; all eight combinations are valid."""

    include_ground_truth: bool = True
    include_justification: bool = True
    include_chain_of_thought: bool = True

    def to_json(self) -> dict[str, bool]:
        return {
            "include_ground_truth": self.include_ground_truth,
            "include_justification": self.include_justification,
            "include_chain_of_thought": self.include_chain_of_thought,
        }

    @classmethod
    def from_json(cls, obj: Mapping[str, bool]) -> "PromptVariant":
        return cls(
            include_ground_truth=bool(obj.get("include_ground_truth", True)),
            include_justification=bool(obj.get("include_justification", True)),
            include_chain_of_thought=bool(obj.get("include_chain_of_thought", True)),
        )


@dataclass(frozen=True)
class ParsedEvaluation:
    metric: str
    score: MetricScore
    justification: str | None = None


class TemplateSet:
    """The five prompt templates, read once and cached immutably."""

    def __init__(self, texts: Mapping[str, str]):
        missing = [name for name in TEMPLATE_NAMES if name not in texts]
        if missing:
            raise FileNotFoundError(f"missing template(s): {missing}")
        self._texts = dict(texts)

    @classmethod
    def default(cls) -> "TemplateSet":
        package = resources.files("gqajudge") / "templates"
        return cls({name: (package / f"{name}.txt").read_text(encoding="utf-8") for name in TEMPLATE_NAMES})

    @classmethod
    def from_dir(cls, directory: str | Path) -> "TemplateSet":
        directory = Path(directory)
        return cls({name: (directory / f"{name}.txt").read_text(encoding="utf-8") for name in TEMPLATE_NAMES})

    def text(self, name: str) -> str:
        return self._texts[name]

    def digests(self) -> dict[str, str]:
        return {
            name: hashlib.sha256(text.encode("utf-8")).hexdigest()
            for name, text in sorted(self._texts.items())
        }


_default_templates: TemplateSet | None = None


def default_templates() -> TemplateSet:
    global _default_templates
    if _default_templates is None:
        _default_templates = TemplateSet.default()
    return _default_templates


def substitute(template: str, mapping: Mapping[str, str]) -> str:
    """Replace ``{{key}}`` placeholders; unknown placeholders are left as-is."""
    out = template
    for key, value in mapping.items():
        out = out.replace("{{" + key + "}}", value)
    return out


def score_key(n: int, metric: str) -> str:
    return f"answer_{n}_{metric}"


def justification_key(n: int, metric: str) -> str:
    return f"answer_{n}_justification_{metric}"


def _schema_lines(metric: str, n: int, variant: PromptVariant) -> list[str]:
    lines = []
    if variant.include_chain_of_thought:
        for suffix in COT_KEYS[metric]:
            lines.append(f'  "answer_{n}_{suffix}": {_COT_HINTS[suffix]},')
    if variant.include_justification:
        lines.append(f'  "{justification_key(n, metric)}": "<short free-form justification>",')
    lines.append(f'  "{score_key(n, metric)}": {_SCORE_HINTS[metric]},')
    return lines


def _render_schema(metrics: tuple[str, ...], variant: PromptVariant) -> str:
    answer_numbers = (1, 2) if variant.include_ground_truth else (1,)
    lines = []
    for metric in metrics:
        for n in answer_numbers:
            lines.extend(_schema_lines(metric, n, variant))
    lines[-1] = lines[-1].rstrip(",")
    body = "\n".join(lines)
    return (
        "Respond with a single JSON object of exactly this shape, and nothing else:\n"
        "{\n" + body + "\n}"
    )


def _rating_context(variant: PromptVariant) -> str:
    if variant.include_ground_truth:
        return (
            "You will be shown two answers to the same question. Rate each answer "
            "independently against the references."
        )
    return "You will be shown one answer to the question. Rate it against the references."


def _answers_block(sample: GroundedQASample, variant: PromptVariant) -> str:
    if variant.include_ground_truth:
        return f"Answer 1:\n{sample.ground_truth_answer}\n\nAnswer 2:\n{sample.answer}"
    return f"Answer 1:\n{sample.answer}"


def format_references(references: tuple[str, ...]) -> str:
    return "\n".join(f"[{i}] {text}" for i, text in enumerate(references, start=1))


def _render(template_name: str, metrics: tuple[str, ...], sample: GroundedQASample, variant: PromptVariant,
            templates: TemplateSet | None) -> str:
    if variant.include_ground_truth and sample.ground_truth_answer is None:
        raise MissingGroundTruthError(
            f"sample {sample.sample_id!r} has no ground_truth_answer but the prompt variant requires one"
        )
    templates = templates or default_templates()
    mapping = {
        "rating_context": _rating_context(variant),
        "output_schema": _render_schema(metrics, variant),
        "question": sample.question,
        "references": format_references(sample.references),
        "answers": _answers_block(sample, variant),
        "answer_1": sample.ground_truth_answer if variant.include_ground_truth else sample.answer,
        "answer_2": sample.answer if variant.include_ground_truth else "",
    }
    return substitute(templates.text(template_name), mapping)


def render_metric_prompt(
    metric: str,
    sample: GroundedQASample,
    variant: PromptVariant = PromptVariant(),
    templates: TemplateSet | None = None,
) -> str:
    """Render the single-metric judge prompt for one of the four called metrics."""
    if metric not in CALL_NAMES:
        raise ValueError(f"no prompt for metric {metric!r}; expected one of {CALL_NAMES}")
    return _render(metric, (metric,), sample, variant, templates)


def render_combined_prompt(
    sample: GroundedQASample,
    variant: PromptVariant = PromptVariant(),
    templates: TemplateSet | None = None,
) -> str:
    """Render the single-call prompt requesting all four metric evaluations at once."""
    return _render("combined", CALL_NAMES, sample, variant, templates)


def extract_json_object(text: str) -> dict | None:
    """Locate the outermost JSON object in judge output.

    Tolerates markdown code fences and surrounding prose. Returns None
    when no JSON object can be decoded anywhere in the text.
    """
    stripped = text.strip()
    try:
        obj = json.loads(stripped)
        if isinstance(obj, dict):
            return obj
    except json.JSONDecodeError:
        pass

    decoder = json.JSONDecoder()
    index = stripped.find("{")
    while index != -1:
        try:
            obj, _ = decoder.raw_decode(stripped[index:])
            if isinstance(obj, dict):
                return obj
        except json.JSONDecodeError:
            pass
        index = stripped.find("{", index + 1)
    return None


def _coerce_score(metric: str, value: Any) -> MetricScore:
    """Map a raw JSON field value onto the score lattice for ``metric``.

    Out-of-range or wrong-typed values become format errors, never
    clamped: a judge that answered 0 or 6 failed the calibration, and
    clamping would hide that.
    """
    if value is None:
        return MetricScore.null()
    if isinstance(value, str) and value.strip().lower() in ("null", "nan"):
        return MetricScore.null()
    if isinstance(value, float) and math.isnan(value):
        return MetricScore.null()
    if metric in LIKERT_METRICS:
        if isinstance(value, bool):
            return MetricScore.format_error()
        if isinstance(value, float) and value.is_integer():
            value = int(value)
        if isinstance(value, int) and 1 <= value <= 5:
            return MetricScore.likert(value)
        return MetricScore.format_error()
    if metric in BOOLEAN_METRICS:
        if isinstance(value, bool):
            return MetricScore.boolean(value)
        if isinstance(value, int) and value in (0, 1):
            return MetricScore.boolean(bool(value))
        return MetricScore.format_error()
    raise ValueError(f"unknown metric {metric!r}")


def _read_evaluation(obj: dict, metric: str) -> ParsedEvaluation:
    # Answer 2 is the answer under evaluation when a ground truth was
    # shown; the N=1 keys only stand in for a sole-answer response. A
    # two-answer response with the answer-2 score missing is a format
    # error, not a license to grade the ground truth instead.
    n = 2 if any(key.startswith("answer_2_") for key in obj) else 1
    if score_key(n, metric) not in obj:
        return ParsedEvaluation(metric=metric, score=MetricScore.format_error())
    justification = obj.get(justification_key(n, metric))
    return ParsedEvaluation(
        metric=metric,
        score=_coerce_score(metric, obj[score_key(n, metric)]),
        justification=justification if isinstance(justification, str) else None,
    )


def parse_metric_response(metric: str, raw: str) -> ParsedEvaluation:
    """Parse one single-metric judge response.

    Total over text: unparseable input yields a format-error score, never
    an exception, so batch runs keep going.
    """
    obj = extract_json_object(raw)
    if obj is None:
        return ParsedEvaluation(metric=metric, score=MetricScore.format_error())
    return _read_evaluation(obj, metric)


def parse_combined_response(raw: str) -> dict[str, ParsedEvaluation]:
    """Parse a combined response into the four called metrics.

    Each metric resolves independently: a missing or malformed field
    yields a format error for that metric only.
    """
    obj = extract_json_object(raw)
    if obj is None:
        return {m: ParsedEvaluation(metric=m, score=MetricScore.format_error()) for m in CALL_NAMES}
    return {m: _read_evaluation(obj, m) for m in CALL_NAMES}


def _cot_value(suffix: str, score: MetricScore) -> Any:
    if suffix == "cot_is_adversarial":
        return score.is_null
    if suffix == "cot_related_information_present":
        return not score.is_null
    if suffix == "cot_sentence_analysis":
        if score.is_null:
            return []
        return [{"sentence": "(whole answer)", "faithful": score.value is not False, "note": ""}]
    raise ValueError(suffix)


def _ideal_counterpart(metric: str, score: MetricScore) -> MetricScore:
    if score.is_null:
        return MetricScore.null()
    if metric in LIKERT_METRICS:
        return MetricScore.likert(5)
    return MetricScore.boolean(True)


def _evaluation_fields(metric: str, n: int, score: MetricScore, variant: PromptVariant,
                       justification: str) -> dict[str, Any]:
    fields: dict[str, Any] = {}
    if variant.include_chain_of_thought:
        for suffix in COT_KEYS[metric]:
            fields[f"answer_{n}_{suffix}"] = _cot_value(suffix, score)
    if variant.include_justification:
        fields[justification_key(n, metric)] = justification
    fields[score_key(n, metric)] = score.to_json()
    return fields


def canonical_response(
    metric: str,
    score: MetricScore,
    variant: PromptVariant = PromptVariant(),
    score_1: MetricScore | None = None,
    justification: str = "Scripted evaluation.",
) -> str:
    """Build a response that conforms exactly to the requested schema.

    Used by the scripted oracle backend, skipped-call stubs in trace
    export, and parser round-trip fixtures. ``score`` is always the score
    of the answer under evaluation; ``score_1`` optionally overrides the
    first answer's score when a ground truth is in play.
    """
    obj: dict[str, Any] = {}
    if variant.include_ground_truth:
        first = score_1 if score_1 is not None else _ideal_counterpart(metric, score)
        obj.update(_evaluation_fields(metric, 1, first, variant, justification))
        obj.update(_evaluation_fields(metric, 2, score, variant, justification))
    else:
        obj.update(_evaluation_fields(metric, 1, score, variant, justification))
    return json.dumps(obj, ensure_ascii=False)


def canonical_combined_response(
    scores: Mapping[str, MetricScore],
    variant: PromptVariant = PromptVariant(),
    justification: str = "Scripted evaluation.",
) -> str:
    """Combined-call counterpart of :func:`canonical_response`."""
    obj: dict[str, Any] = {}
    for metric in CALL_NAMES:
        score = scores[metric]
        if variant.include_ground_truth:
            obj.update(_evaluation_fields(metric, 1, _ideal_counterpart(metric, score), variant, justification))
            obj.update(_evaluation_fields(metric, 2, score, variant, justification))
        else:
            obj.update(_evaluation_fields(metric, 1, score, variant, justification))
    return json.dumps(obj, ensure_ascii=False)
