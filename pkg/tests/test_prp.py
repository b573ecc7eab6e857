import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rankcons.domain import Preference, PreferenceSet, Ranking, Verdict
from rankcons.oracles.base import OracleError
from rankcons.prp import rank_by_scores, sliding_window_pairs, win_count_scores

I, J, X = Verdict.I_WINS, Verdict.J_WINS, Verdict.INCONSISTENT


def order_oracle(true_order):
    """Consistent oracle: the doc earlier in ``true_order`` wins."""
    pos = {d: k for k, d in enumerate(true_order)}
    calls = []

    def f(i, j):
        calls.append((i, j))
        return I if pos[i] < pos[j] else J

    f.calls = calls
    return f


class TestWinCounts:
    def test_inconsistent_pair_splits(self):
        ps = PreferenceSet.from_preferences(
            "q", 3, [Preference(0, 1, I), Preference(0, 2, I), Preference(1, 2, X)]
        )
        np.testing.assert_array_equal(win_count_scores(ps).values, [2.0, 0.5, 0.5])

    def test_no_preferences(self):
        np.testing.assert_array_equal(win_count_scores(PreferenceSet("q", 2)).values, [0, 0])

    def test_transitive_round_robin(self):
        prefs = [Preference(a, b, I) for a, b in itertools.combinations(range(4), 2)]
        np.testing.assert_array_equal(
            win_count_scores(PreferenceSet.from_preferences("q", 4, prefs)).values, [3, 2, 1, 0]
        )

    @given(st.integers(2, 12), st.data())
    def test_conservation(self, n, data):
        verdicts = data.draw(st.lists(st.sampled_from([I, J, X]), min_size=n * (n - 1) // 2, max_size=n * (n - 1) // 2))
        pairs = itertools.combinations(range(n), 2)
        ps = PreferenceSet.from_preferences("q", n, [Preference(a, b, v) for (a, b), v in zip(pairs, verdicts)])
        assert win_count_scores(ps).values.sum() == n * (n - 1) / 2

    @given(st.permutations(range(7)))
    def test_complete_transitive_prefs_reproduce_order(self, order):
        oracle = order_oracle(order)
        prefs = [Preference(a, b, oracle(a, b)) for a, b in itertools.combinations(range(7), 2)]
        s = win_count_scores(PreferenceSet.from_preferences("q", 7, prefs))
        r = rank_by_scores(s, Ranking.from_order("q", range(7)))
        np.testing.assert_array_equal(r.sorted_indices, order)


class TestRankByScores:
    def test_ties_follow_tie_break(self):
        r = rank_by_scores(np.array([0.5, 2.0, 0.5]), Ranking.from_order("q", [0, 1, 2]))
        np.testing.assert_array_equal(r.rank_of, [2, 1, 3])

    def test_all_equal_returns_tie_break(self):
        tb = Ranking.from_order("q", [3, 1, 0, 2])
        np.testing.assert_array_equal(rank_by_scores(np.zeros(4), tb).rank_of, tb.rank_of)

    def test_strictly_decreasing_is_identity(self):
        r = rank_by_scores(np.array([4.0, 3.0, 1.0, -2.0]), Ranking.from_order("q", [3, 2, 1, 0]))
        np.testing.assert_array_equal(r.rank_of, [1, 2, 3, 4])

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            rank_by_scores(np.zeros(3), Ranking.from_order("q", [0, 1]))


class TestSlidingWindow:
    def test_full_reversal_three_docs(self):
        oracle = order_oracle([2, 1, 0])
        prefs, ranking = sliding_window_pairs(Ranking.from_order("q", [0, 1, 2]), 3, oracle)
        np.testing.assert_array_equal(ranking.sorted_indices, [2, 1, 0])
        assert len(prefs) == 3
        assert len(oracle.calls) == 3  # repeats served from the cache

    def test_single_pass(self):
        rng = np.random.default_rng(3)
        true = list(rng.permutation(9))
        oracle = order_oracle(true)
        prefs, ranking = sliding_window_pairs(Ranking.from_order("q", range(9)), 1, oracle)
        assert len(oracle.calls) == 8
        assert ranking.sorted_indices[0] == true[0]

    def test_inconsistent_oracle_keeps_initial(self):
        init = Ranking.from_order("q", [4, 2, 0, 1, 3])
        _, ranking = sliding_window_pairs(init, 3, lambda i, j: X)
        np.testing.assert_array_equal(ranking.rank_of, init.rank_of)

    @settings(max_examples=50)
    @given(st.permutations(range(10)), st.permutations(range(10)), st.integers(1, 10))
    def test_top_k_prefix_matches_full_sort(self, init, true, k):
        oracle = order_oracle(true)
        prefs, ranking = sliding_window_pairs(Ranking.from_order("q", init), k, oracle)
        np.testing.assert_array_equal(ranking.sorted_indices[:k], list(true)[:k])
        assert len(prefs) == len(oracle.calls) <= k * 9

    def test_k_out_of_range(self):
        with pytest.raises(ValueError):
            sliding_window_pairs(Ranking.from_order("q", range(3)), 4, lambda i, j: I)
        with pytest.raises(ValueError):
            sliding_window_pairs(Ranking.from_order("q", range(3)), 0, lambda i, j: I)

    def test_oracle_failure_names_pair(self):
        def bad(i, j):
            raise RuntimeError("boom")

        with pytest.raises(OracleError) as info:
            sliding_window_pairs(Ranking.from_order("q", range(3)), 1, bad)
        assert (info.value.i, info.value.j) == (1, 2)
