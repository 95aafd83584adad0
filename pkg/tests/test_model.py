import pytest
from hypothesis import given
from hypothesis import strategies as st

from gqajudge.model import (
    METRICS,
    GroundedQASample,
    MetricScore,
    Situation,
    derive_acceptance_rejection,
    infer_situation,
    score_in,
)

FULL_EXPECTED = (1, 2, 3, 4, 5, None, True, False)


def likert(v):
    return MetricScore.likert(v)


NULL = MetricScore.null()
FE = MetricScore.format_error()


class TestMetricScore:
    def test_likert_range_enforced(self):
        for v in (0, 6, -1):
            with pytest.raises(ValueError):
                MetricScore.likert(v)
        with pytest.raises(ValueError):
            MetricScore.likert(True)

    def test_boolean_rejects_ints(self):
        with pytest.raises(ValueError):
            MetricScore.boolean(1)

    @pytest.mark.parametrize(
        "score, value",
        [
            (likert(3), 3),
            (MetricScore.boolean(True), True),
            (MetricScore.boolean(False), False),
            (NULL, None),
            (FE, "FORMAT_ERROR"),
        ],
    )
    def test_json_round_trip(self, score, value):
        assert score.to_json() == value
        assert MetricScore.from_json(value) == score

    def test_from_json_rejects_garbage(self):
        for value in ("3", 7, 2.5, [1]):
            with pytest.raises(ValueError):
                MetricScore.from_json(value)

    def test_boolean_and_likert_never_confused(self):
        # bool is a subclass of int in Python; the lattice must keep them apart
        assert MetricScore.from_json(True) == MetricScore.boolean(True)
        assert MetricScore.from_json(1) == likert(1)
        assert MetricScore.from_json(True) != MetricScore.from_json(1)


class TestScoreIn:
    def test_likert_membership(self):
        assert score_in(likert(5), {4, 5})
        assert not score_in(likert(3), {4, 5})

    def test_format_error_never_passes(self):
        assert not score_in(FE, FULL_EXPECTED)

    def test_null_expected(self):
        assert score_in(NULL, (None,))
        assert not score_in(NULL, (1, 2, True))

    def test_boolean_true_does_not_match_integer_one(self):
        assert not score_in(MetricScore.boolean(True), (1,))
        assert not score_in(likert(1), (True,))

    @given(st.sets(st.sampled_from(FULL_EXPECTED), min_size=1))
    def test_monotone_under_set_inclusion(self, expected):
        scores = [likert(v) for v in range(1, 6)]
        scores += [MetricScore.boolean(True), MetricScore.boolean(False), NULL, FE]
        for score in scores:
            if score_in(score, expected):
                assert score_in(score, FULL_EXPECTED)


SCORE_STRATEGY = st.one_of(
    st.integers(min_value=1, max_value=5).map(MetricScore.likert),
    st.just(NULL),
    st.just(FE),
)


class TestDeriveAcceptanceRejection:
    @pytest.mark.parametrize(
        "rel, comp, pa, nr",
        [
            # answerable question answered: true positive
            (likert(4), likert(3), MetricScore.boolean(True), NULL),
            # answerable question refused
            (NULL, likert(2), MetricScore.boolean(False), NULL),
            # adversarial question refused: true negative
            (NULL, NULL, NULL, MetricScore.boolean(True)),
            # adversarial question answered anyway
            (likert(2), NULL, NULL, MetricScore.boolean(False)),
        ],
    )
    def test_truth_table(self, rel, comp, pa, nr):
        assert derive_acceptance_rejection(rel, comp) == (pa, nr)

    @pytest.mark.parametrize(
        "rel, comp",
        [(FE, likert(3)), (likert(3), FE), (FE, FE), (FE, NULL), (NULL, FE)],
    )
    def test_format_error_poisons_both(self, rel, comp):
        assert derive_acceptance_rejection(rel, comp) == (FE, FE)

    @given(SCORE_STRATEGY, SCORE_STRATEGY)
    def test_exactly_one_boolean_and_one_null(self, rel, comp):
        pa, nr = derive_acceptance_rejection(rel, comp)
        kinds = sorted([pa.kind, nr.kind])
        if rel.is_format_error or comp.is_format_error:
            assert kinds == ["format_error", "format_error"]
        else:
            assert kinds == ["boolean", "null"]


class TestInferSituation:
    @pytest.mark.parametrize(
        "rel, comp, useful, situation",
        [
            (likert(5), likert(5), NULL, Situation.ANSWERABLE_ANSWERED),
            (NULL, likert(1), MetricScore.boolean(True), Situation.ANSWERABLE_REFUSED),
            (likert(2), NULL, NULL, Situation.ADVERSARIAL_ANSWERED),
            (NULL, NULL, MetricScore.boolean(True), Situation.ADVERSARIAL_REFUSED_WITH_RELATED_INFO),
            (NULL, NULL, MetricScore.boolean(False), Situation.ADVERSARIAL_REFUSED_WITH_RELATED_INFO),
            (NULL, NULL, NULL, Situation.ADVERSARIAL_REFUSED_BARE),
            (FE, likert(3), NULL, Situation.UNDETERMINED),
            (likert(3), FE, NULL, Situation.UNDETERMINED),
            (NULL, NULL, FE, Situation.UNDETERMINED),
        ],
    )
    def test_classification(self, rel, comp, useful, situation):
        assert infer_situation(rel, comp, useful) == situation

    def test_usefulness_format_error_irrelevant_when_not_needed(self):
        # only the adversarial-refused split consults usefulness
        assert infer_situation(NULL, likert(2), FE) == Situation.ANSWERABLE_REFUSED
        assert infer_situation(likert(4), likert(4), FE) == Situation.ANSWERABLE_ANSWERED

    @given(SCORE_STRATEGY, SCORE_STRATEGY, SCORE_STRATEGY)
    def test_consistent_with_derivation(self, rel, comp, useful):
        """The situation and the PA/NR derivation agree on answerability."""
        situation = infer_situation(rel, comp, useful)
        pa, nr = derive_acceptance_rejection(rel, comp)
        if situation in (Situation.ANSWERABLE_ANSWERED, Situation.ANSWERABLE_REFUSED):
            assert pa.kind == "boolean" and nr.is_null
        elif situation != Situation.UNDETERMINED:
            assert pa.is_null and nr.kind == "boolean"


class TestGroundedQASample:
    def test_references_must_be_non_empty(self):
        with pytest.raises(ValueError):
            GroundedQASample("s", "q", (), "a")

    def test_out_of_range_citations_are_not_a_data_fault(self):
        # citation correctness belongs to the faithfulness judge
        sample = GroundedQASample("s", "q", ("only one reference",), "claim [9]")
        assert sample.answer == "claim [9]"


def test_metric_order_is_canonical():
    assert METRICS == (
        "answer_relevancy",
        "completeness",
        "usefulness",
        "faithfulness",
        "positive_acceptance",
        "negative_rejection",
    )
