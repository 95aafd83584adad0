"""Loading and validation of unit-test suites and plain sample files.

A suite is a JSON file of tests grouped into sets; all tests in a set
share one question, and the 16 types per set vary references and answers
to probe specific judge behaviors. Expected scores are explicit value
sets per metric ("in" lists), because ranges like {1, 2} vs {null} vs
{true} are all sets and intervals cannot express null.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable

from gqajudge.errors import SchemaError, StructureError
from gqajudge.model import LIKERT_METRICS, METRICS, GroundedQASample

EXPECTED_TYPES_PER_SET = 16


@dataclass(frozen=True)
class UnitTest:
    """One calibration test: a sample plus per-metric expected score sets.

    Expectations are kept as ordered tuples of raw values (ints, bools,
    None) rather than Python sets: ``True == 1`` in Python, so a set
    would silently merge values the validator needs to see.
    """

    set_id: int
    test_type: int
    sample: GroundedQASample
    expectations: dict[str, tuple[Any, ...]]

    @property
    def coordinates(self) -> str:
        return f"set {self.set_id}, type {self.test_type}"


@dataclass(frozen=True)
class TestSuite:
    __test__ = False  # domain type, not a pytest class

    name: str
    tests: tuple[UnitTest, ...]
    allow_partial: bool = False

    def __iter__(self):
        return iter(self.tests)

    def __len__(self):
        return len(self.tests)


@dataclass(frozen=True)
class Violation:
    severity: str  # "error" | "warning"
    message: str
    set_id: int | None = None
    test_type: int | None = None

    def __str__(self):
        where = ""
        if self.set_id is not None:
            where = f" [set {self.set_id}" + (f", type {self.test_type}]" if self.test_type is not None else "]")
        return f"{self.severity}:{where} {self.message}"


def _expected_values_ok(metric: str, values: tuple[Any, ...]) -> bool:
    if metric in LIKERT_METRICS:
        return all(v is None or (type(v) is int and 1 <= v <= 5) for v in values)
    return all(v is None or type(v) is bool for v in values)


def validate_suite(suite: TestSuite) -> list[Violation]:
    """Check all suite invariants; an empty list means clean.

    Error-severity violations make the suite unusable (bad expectation
    sets, duplicate coordinates). Incomplete sets are warnings unless the
    suite opted into partiality with ``allow_partial``.
    """
    violations: list[Violation] = []
    seen: set[tuple[int, int]] = set()
    types_per_set: dict[int, set[int]] = {}

    for test in suite.tests:
        coords = (test.set_id, test.test_type)
        if coords in seen:
            violations.append(
                Violation("error", "duplicate (set_id, test_type)", test.set_id, test.test_type)
            )
        seen.add(coords)
        types_per_set.setdefault(test.set_id, set()).add(test.test_type)

        if test.set_id < 1:
            violations.append(Violation("error", "set_id must be >= 1", test.set_id, test.test_type))
        if not 1 <= test.test_type <= EXPECTED_TYPES_PER_SET:
            violations.append(
                Violation("error", f"test_type must be in [1, {EXPECTED_TYPES_PER_SET}]", test.set_id, test.test_type)
            )

        missing = [m for m in METRICS if m not in test.expectations]
        extra = [m for m in test.expectations if m not in METRICS]
        if missing:
            violations.append(
                Violation("error", f"missing expectation(s) for {missing}", test.set_id, test.test_type)
            )
        if extra:
            violations.append(
                Violation("error", f"unknown metric key(s) {extra}", test.set_id, test.test_type)
            )
        for metric, values in test.expectations.items():
            if metric not in METRICS:
                continue
            if not values:
                violations.append(
                    Violation("error", f"empty expectation set for {metric}", test.set_id, test.test_type)
                )
            elif not _expected_values_ok(metric, values):
                kind = "integers 1-5" if metric in LIKERT_METRICS else "true/false"
                violations.append(
                    Violation(
                        "error",
                        f"expectation for {metric} may only contain {kind} and/or null, got {list(values)}",
                        test.set_id,
                        test.test_type,
                    )
                )

    if not suite.allow_partial:
        for set_id in sorted(types_per_set):
            missing_types = sorted(set(range(1, EXPECTED_TYPES_PER_SET + 1)) - types_per_set[set_id])
            if missing_types:
                rendered = "{" + ", ".join(str(t) for t in missing_types) + "}"
                violations.append(
                    Violation("warning", f"set {set_id} missing types {rendered}", set_id)
                )

    return violations


def _require(obj: dict, key: str, kind: type, pointer: str) -> Any:
    if key not in obj:
        raise SchemaError(f"missing required field {key!r}", pointer)
    value = obj[key]
    if kind is int and isinstance(value, bool):
        raise SchemaError(f"field {key!r} must be an integer", pointer)
    if not isinstance(value, kind):
        raise SchemaError(f"field {key!r} must be {kind.__name__}", pointer)
    return value


def _parse_references(raw: Any, pointer: str) -> tuple[str, ...]:
    if not isinstance(raw, list) or not raw or not all(isinstance(r, str) for r in raw):
        raise SchemaError("references must be a non-empty list of strings", pointer)
    return tuple(raw)


def _parse_expectations(raw: Any, pointer: str) -> dict[str, tuple[Any, ...]]:
    if not isinstance(raw, dict):
        raise SchemaError("expectations must be an object", pointer)
    expectations: dict[str, tuple[Any, ...]] = {}
    for metric, spec_obj in raw.items():
        if not isinstance(spec_obj, dict) or "in" not in spec_obj or not isinstance(spec_obj["in"], list):
            raise SchemaError(f'expectation for {metric!r} must be {{"in": [...]}}', pointer)
        expectations[metric] = tuple(spec_obj["in"])
    return expectations


def parse_test(obj: dict, pointer: str) -> UnitTest:
    set_id = _require(obj, "set_id", int, pointer)
    test_type = _require(obj, "test_type", int, pointer)
    question = _require(obj, "question", str, pointer)
    answer = _require(obj, "answer", str, pointer)
    references = _parse_references(obj.get("references"), pointer)
    ground_truth = obj.get("ground_truth_answer")
    if ground_truth is not None and not isinstance(ground_truth, str):
        raise SchemaError("ground_truth_answer must be a string when present", pointer)
    expectations = _parse_expectations(_require(obj, "expectations", dict, pointer), pointer)
    sample = GroundedQASample(
        sample_id=f"set{set_id}-type{test_type:02d}",
        question=question,
        references=references,
        answer=answer,
        ground_truth_answer=ground_truth,
    )
    return UnitTest(set_id=set_id, test_type=test_type, sample=sample, expectations=expectations)


def load_suite(path: str | Path) -> TestSuite:
    """Load and fully validate a suite file.

    Raises SchemaError (with a pointer to the offending test) or
    StructureError on error-severity violations; warnings are preserved
    on the side via :func:`validate_suite` and do not block loading.
    """
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise SchemaError(f"not valid JSON: {exc}", str(path)) from exc
    if not isinstance(data, dict):
        raise SchemaError("suite file must hold a JSON object", str(path))

    name = _require(data, "name", str, str(path))
    allow_partial = data.get("allow_partial", False)
    if not isinstance(allow_partial, bool):
        raise SchemaError("allow_partial must be a boolean", str(path))
    raw_tests = _require(data, "tests", list, str(path))

    tests = []
    for index, obj in enumerate(raw_tests):
        pointer = f"{path}:tests[{index}]"
        if not isinstance(obj, dict):
            raise SchemaError("test entry must be an object", pointer)
        tests.append(parse_test(obj, pointer))

    suite = TestSuite(name=name, tests=tuple(tests), allow_partial=allow_partial)
    for violation in validate_suite(suite):
        if violation.severity != "error":
            continue
        message = str(violation)
        if "duplicate" in violation.message:
            raise StructureError(message)
        raise SchemaError(violation.message, f"set {violation.set_id}, type {violation.test_type}")
    return suite


def serialize_suite(suite: TestSuite) -> dict:
    """Suite back to its file form; load(serialize(s)) == s for valid suites."""
    return {
        "name": suite.name,
        "allow_partial": suite.allow_partial,
        "tests": [
            {
                "set_id": t.set_id,
                "test_type": t.test_type,
                "question": t.sample.question,
                "references": list(t.sample.references),
                "answer": t.sample.answer,
                **(
                    {"ground_truth_answer": t.sample.ground_truth_answer}
                    if t.sample.ground_truth_answer is not None
                    else {}
                ),
                "expectations": {m: {"in": list(v)} for m, v in t.expectations.items()},
            }
            for t in suite.tests
        ],
    }


def save_suite(suite: TestSuite, path: str | Path) -> None:
    Path(path).write_text(json.dumps(serialize_suite(suite), indent=2, ensure_ascii=False) + "\n", encoding="utf-8")


def load_samples(path: str | Path) -> list[GroundedQASample]:
    """Load a JSONL sample file, one sample per line, in file order.

    ``sample_id`` defaults to the 1-based line number as a string.
    """
    path = Path(path)
    samples = []
    with path.open(encoding="utf-8") as handle:
        for line_number, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            pointer = f"{path}:{line_number}"
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise SchemaError(f"not valid JSON: {exc}", pointer) from exc
            if not isinstance(obj, dict):
                raise SchemaError("sample line must hold a JSON object", pointer)
            question = _require(obj, "question", str, pointer)
            answer = _require(obj, "answer", str, pointer)
            references = _parse_references(obj.get("references"), pointer)
            sample_id = obj.get("sample_id", str(line_number))
            if not isinstance(sample_id, str):
                raise SchemaError("sample_id must be a string", pointer)
            ground_truth = obj.get("ground_truth_answer")
            if ground_truth is not None and not isinstance(ground_truth, str):
                raise SchemaError("ground_truth_answer must be a string when present", pointer)
            samples.append(
                GroundedQASample(
                    sample_id=sample_id,
                    question=question,
                    references=references,
                    answer=answer,
                    ground_truth_answer=ground_truth,
                )
            )
    return samples
