import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from rankcons.domain import (
    CandidateList,
    Document,
    Preference,
    PreferenceSet,
    Ranking,
    ScoreKind,
    ScoreVector,
    Verdict,
    normalize_labels,
    validate_dataset,
)

from helpers import make_list


class TestNormalizeLabels:
    def test_four_grades(self):
        np.testing.assert_allclose(normalize_labels([0, 1, 2, 3], 3), [0, 1 / 3, 2 / 3, 1])

    def test_three_grades(self):
        np.testing.assert_allclose(normalize_labels([0, 1, 2], 2), [0, 0.5, 1])

    def test_all_zero(self):
        np.testing.assert_array_equal(normalize_labels([0, 0, 0], 3), [0, 0, 0])

    @pytest.mark.parametrize("labels,max_grade", [([0, 4], 3), ([-1, 0], 3), ([0], 0)])
    def test_rejects_out_of_range(self, labels, max_grade):
        with pytest.raises(ValueError):
            normalize_labels(labels, max_grade)

    @given(st.lists(st.integers(0, 5), min_size=2, max_size=20))
    def test_monotone(self, labels):
        out = normalize_labels(labels, 5)
        order = np.argsort(labels, kind="stable")
        assert np.all(np.diff(out[order]) >= 0)


class TestValidateDataset:
    def test_well_formed_list_is_clean(self):
        report = validate_dataset([make_list([0, 1, 2])], max_grade=3)
        assert report.ok
        assert len(report) == 0

    def test_duplicate_doc_id(self):
        cl = CandidateList("q", (Document("a"), Document("b"), Document("a")), [1, 2, 3])
        report = validate_dataset([cl])
        assert len(report) == 1
        assert "'a'" in report.violations["q"][0]

    def test_label_out_of_range(self):
        cl = CandidateList("q", tuple(Document(x) for x in "abc"), [1, 2, 3], labels=[0, 1, 4])
        report = validate_dataset([cl], max_grade=3)
        assert not report.ok
        assert any("exceeds max grade" in m for m in report.violations["q"])

    def test_misaligned_and_bad_ranks(self):
        cl = CandidateList("q", (Document("a"), Document("b")), [1, 1], labels=[0, 1, 2])
        msgs = validate_dataset([cl]).violations["q"]
        assert any("labels has length 3" in m for m in msgs)
        assert any("permutation" in m for m in msgs)

    def test_duplicate_query(self):
        report = validate_dataset([make_list([0, 1]), make_list([1, 0])])
        assert report.violations["q"] == ["duplicate query_id"]

    def test_normalized_labels_must_match_grades(self):
        cl = CandidateList(
            "q", (Document("a"), Document("b")), [1, 2], labels=[0, 3], normalized_labels=[0.0, 0.5]
        )
        assert not validate_dataset([cl], max_grade=3).ok


class TestScoreVector:
    def test_rejects_nan(self):
        with pytest.raises(ValueError):
            ScoreVector("q", ScoreKind.PRP_SCORE, [0.0, np.nan])

    def test_relevance_range(self):
        with pytest.raises(ValueError):
            ScoreVector("q", ScoreKind.RELEVANCE, [0.2, 1.5])
        ScoreVector("q", ScoreKind.CONSOLIDATED, [0.2, 1.5])

    def test_values_are_read_only(self):
        sv = ScoreVector("q", ScoreKind.RELEVANCE, [0.1, 0.2])
        with pytest.raises(ValueError):
            sv.values[0] = 1.0


class TestPreferences:
    def test_self_pair_rejected(self):
        with pytest.raises(ValueError):
            Preference(1, 1, Verdict.I_WINS)

    def test_canonical_storage_and_orientation(self):
        ps = PreferenceSet.from_preferences("q", 3, [Preference(2, 0, Verdict.I_WINS)])
        assert (0, 2) in ps and (2, 0) in ps
        assert ps.get(0, 2) is Verdict.J_WINS
        assert ps.get(2, 0) is Verdict.I_WINS
        assert ps.prefs == [Preference(0, 2, Verdict.J_WINS)]

    def test_duplicate_pair_rejected(self):
        with pytest.raises(ValueError, match="duplicate"):
            PreferenceSet.from_preferences(
                "q", 3, [Preference(0, 1, Verdict.I_WINS), Preference(1, 0, Verdict.I_WINS)]
            )

    def test_index_out_of_range(self):
        with pytest.raises(ValueError):
            PreferenceSet.from_preferences("q", 2, [Preference(0, 2, Verdict.I_WINS)])

    def test_inconsistent_is_symmetric(self):
        assert Verdict.INCONSISTENT.swapped() is Verdict.INCONSISTENT
        assert Preference(0, 1, Verdict.INCONSISTENT).winner() is None


class TestRanking:
    def test_from_order_inverts_sorted_indices(self):
        r = Ranking.from_order("q", [2, 0, 1])
        np.testing.assert_array_equal(r.rank_of, [2, 3, 1])
        np.testing.assert_array_equal(r.sorted_indices, [2, 0, 1])

    def test_rejects_non_permutation(self):
        with pytest.raises(ValueError):
            Ranking("q", [1, 1, 2])


def test_with_labels_normalizes():
    cl = CandidateList("q", (Document("a"), Document("b")), [2, 1]).with_labels([0, 2], 2)
    np.testing.assert_allclose(cl.normalized_labels, [0.0, 1.0])
    np.testing.assert_array_equal(cl.initial_ranking().sorted_indices, [1, 0])
