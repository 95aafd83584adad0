"""Score lattice, grounded QA data types, and call-free derivations.

Everything here is an immutable value with pure operations, so the types
can be shared freely across worker threads.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Iterable, Mapping

LIKERT_METRICS = ("answer_relevancy", "completeness")
BOOLEAN_METRICS = ("usefulness", "faithfulness", "positive_acceptance", "negative_rejection")
#: Canonical metric order, used for every serialized score map.
METRICS = LIKERT_METRICS + BOOLEAN_METRICS
#: The four judge calls, in pipeline order. Positive acceptance and
#: negative rejection are derived, never called for.
CALL_NAMES = ("answer_relevancy", "completeness", "usefulness", "faithfulness")
#: Call name used by single-prompt evaluation.
COMBINED_CALL = "combined"

#: JSON encoding of the format-error score (all score values are plain
#: JSON otherwise: int, true/false, null).
FORMAT_ERROR_JSON = "FORMAT_ERROR"


@dataclass(frozen=True)
class MetricScore:
    """One point in the score lattice.

    ``kind`` is one of ``likert`` (value 1-5), ``boolean``, ``null``
    (metric not applicable), or ``format_error`` (judge output could not
    be parsed). Format errors never match any expectation, including
    another format error.
    """

    kind: str
    value: int | bool | None = None

    @classmethod
    def likert(cls, value: int) -> "MetricScore":
        if isinstance(value, bool) or not isinstance(value, int) or not 1 <= value <= 5:
            raise ValueError(f"likert score must be an integer in [1, 5], got {value!r}")
        return cls("likert", value)

    @classmethod
    def boolean(cls, value: bool) -> "MetricScore":
        if not isinstance(value, bool):
            raise ValueError(f"boolean score must be a bool, got {value!r}")
        return cls("boolean", value)

    @classmethod
    def null(cls) -> "MetricScore":
        return cls("null")

    @classmethod
    def format_error(cls) -> "MetricScore":
        return cls("format_error")

    @property
    def is_null(self) -> bool:
        return self.kind == "null"

    @property
    def is_format_error(self) -> bool:
        return self.kind == "format_error"

    def to_json(self) -> int | bool | str | None:
        if self.kind == "format_error":
            return FORMAT_ERROR_JSON
        return self.value

    @classmethod
    def from_json(cls, value: Any) -> "MetricScore":
        """Decode the bit-exact serialization used in all files."""
        if value is None:
            return cls.null()
        if value == FORMAT_ERROR_JSON:
            return cls.format_error()
        if isinstance(value, bool):
            return cls.boolean(value)
        if isinstance(value, int):
            return cls.likert(value)
        raise ValueError(f"not a serialized score: {value!r}")


class Situation(str, Enum):
    """The five answer/reference configurations, plus undetermined.

    ``UNDETERMINED`` occurs only when a score needed for the inference is
    a format error.
    """

    ANSWERABLE_ANSWERED = "answerable_answered"
    ANSWERABLE_REFUSED = "answerable_refused"
    ADVERSARIAL_REFUSED_WITH_RELATED_INFO = "adversarial_refused_with_related_info"
    ADVERSARIAL_REFUSED_BARE = "adversarial_refused_bare"
    ADVERSARIAL_ANSWERED = "adversarial_answered"
    UNDETERMINED = "undetermined"


@dataclass(frozen=True)
class GroundedQASample:
    """A question, its retrieved references, and the answer under evaluation.

    References are cited from answers with bracketed 1-based indices like
    ``[3]``. An index past the end of ``references`` is an answer fault
    for the judge to find, not a data fault, so it is not validated here.
    """

    sample_id: str
    question: str
    references: tuple[str, ...]
    answer: str
    ground_truth_answer: str | None = None

    def __post_init__(self):
        if not self.references:
            raise ValueError("references must be non-empty")
        if not isinstance(self.references, tuple):
            object.__setattr__(self, "references", tuple(self.references))


@dataclass(frozen=True)
class EvaluationReport:
    """The six metric scores for one sample, with provenance.

    ``scores`` is keyed by metric name in canonical order. Calls listed in
    ``skipped_calls`` were never issued: they have no raw response and
    their metric is null by construction.
    """

    sample_id: str
    scores: Mapping[str, MetricScore]
    situation: Situation
    skipped_calls: tuple[str, ...] = ()
    justifications: Mapping[str, str] = field(default_factory=dict)
    raw_responses: Mapping[str, str] = field(default_factory=dict)
    attempts: Mapping[str, int] = field(default_factory=dict)


def score_in(score: MetricScore, expected: Iterable[Any]) -> bool:
    """Whether ``score`` matches one of the expected raw values.

    ``expected`` holds plain values drawn from {1..5, true, false, null}.
    Matching is type-aware so boolean ``True`` never matches likert ``1``
    (Python would otherwise treat them as equal). Format errors match
    nothing. Total: never raises.
    """
    if score.is_format_error:
        return False
    if score.is_null:
        return any(v is None for v in expected)
    if score.kind == "likert":
        return any(type(v) is int and v == score.value for v in expected)
    return any(type(v) is bool and v == score.value for v in expected)


def derive_acceptance_rejection(
    relevancy: MetricScore, completeness: MetricScore
) -> tuple[MetricScore, MetricScore]:
    """Derive (positive_acceptance, negative_rejection) from nullness.

    Completeness answers "do the references contain an answer?" and
    relevancy answers "did the answer respond?", so their null pattern
    fixes both indicators without another judge call:

    ==============  ============  ====================  ====================
    completeness    relevancy     positive_acceptance   negative_rejection
    ==============  ============  ====================  ====================
    non-null        non-null      true                  null
    non-null        null          false                 null
    null            null          null                  true
    null            non-null      null                  false
    ==============  ============  ====================  ====================

    A format error on either input poisons both outputs.
    """
    if relevancy.is_format_error or completeness.is_format_error:
        return MetricScore.format_error(), MetricScore.format_error()
    if not completeness.is_null:
        pa = MetricScore.boolean(not relevancy.is_null)
        return pa, MetricScore.null()
    nr = MetricScore.boolean(relevancy.is_null)
    return MetricScore.null(), nr


def infer_situation(
    relevancy: MetricScore, completeness: MetricScore, usefulness: MetricScore
) -> Situation:
    """Classify the sample's situation from post-pipeline score nullness.

    Usefulness is consulted only to split the two adversarial-refused
    cases, so a usefulness format error elsewhere does not block the
    inference.
    """
    if relevancy.is_format_error or completeness.is_format_error:
        return Situation.UNDETERMINED
    if not completeness.is_null:
        if not relevancy.is_null:
            return Situation.ANSWERABLE_ANSWERED
        return Situation.ANSWERABLE_REFUSED
    if not relevancy.is_null:
        return Situation.ADVERSARIAL_ANSWERED
    if usefulness.is_format_error:
        return Situation.UNDETERMINED
    if usefulness.is_null:
        return Situation.ADVERSARIAL_REFUSED_BARE
    return Situation.ADVERSARIAL_REFUSED_WITH_RELATED_INFO
