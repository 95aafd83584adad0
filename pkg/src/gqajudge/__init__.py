"""Judge harness for grounded question answering.

Evaluates grounded answers on six metrics via LLM judge calls with
conditional call skipping, runs judges against calibration unit-test
suites, measures alignment between evaluation runs, and exports
finetuning traces.
"""

from gqajudge.model import (
    BOOLEAN_METRICS,
    CALL_NAMES,
    LIKERT_METRICS,
    METRICS,
    EvaluationReport,
    GroundedQASample,
    MetricScore,
    Situation,
    derive_acceptance_rejection,
    infer_situation,
    score_in,
)

__version__ = "0.1.0"

__all__ = [
    "BOOLEAN_METRICS",
    "CALL_NAMES",
    "LIKERT_METRICS",
    "METRICS",
    "EvaluationReport",
    "GroundedQASample",
    "MetricScore",
    "Situation",
    "derive_acceptance_rejection",
    "infer_situation",
    "score_in",
    "__version__",
]
