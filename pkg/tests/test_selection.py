import numpy as np
import pytest

from rankcons.domain import Ranking, ScoreKind, ScoreVector, Verdict
from rankcons.metrics import ndcg_at_k
from rankcons.oracles.base import PairMemo
from rankcons.oracles.synthetic import SyntheticOracle, SyntheticOracleConfig, simulate_dataset
from rankcons.consolidation import SolverConfig, consolidate, consolidated_ranking
from rankcons.selection import Method, select_allpair, select_slidewin, select_topall, topall_pairs

I, J = Verdict.I_WINS, Verdict.J_WINS


def counting(true_order):
    pos = {d: k for k, d in enumerate(true_order)}
    calls = []

    def f(i, j):
        calls.append((i, j))
        return I if pos[i] < pos[j] else J

    f.calls = calls
    return f


class TestAllpair:
    @pytest.mark.parametrize("n,calls", [(3, 3), (100, 4950)])
    def test_pair_count(self, n, calls):
        oracle = counting(list(range(n)))
        sel = select_allpair(oracle, n)
        assert sel.oracle_calls == len(oracle.calls) == calls
        assert sel.method is Method.ALLPAIR

    def test_consistent_order_gives_chain(self):
        sel = select_allpair(counting([0, 1, 2]), 3)
        assert sel.constraints.as_set() == {(0, 1), (0, 2), (1, 2)}
        np.testing.assert_array_equal(sel.prp_scores.values, [2, 1, 0])

    def test_parallel_matches_serial(self):
        true = list(np.random.default_rng(0).permutation(12))
        a = select_allpair(counting(true), 12, workers=1)
        b = select_allpair(counting(true), 12, workers=4)
        assert a.constraints.as_set() == b.constraints.as_set()


class TestSlideWin:
    def test_call_bound(self):
        rng = np.random.default_rng(1)
        oracle = counting(list(rng.permutation(100)))
        sel = select_slidewin(oracle, Ranking.from_order("q", range(100)), 10)
        assert sel.oracle_calls == len(oracle.calls) <= 10 * 99

    def test_single_pass_has_n_minus_one_constraints(self):
        sel = select_slidewin(counting([4, 3, 2, 1, 0]), Ranking.from_order("q", range(5)), 1)
        assert len(sel.constraints) == 4

    def test_full_k_reproduces_sorted_order(self):
        rng = np.random.default_rng(2)
        true = list(rng.permutation(8))
        sel = select_slidewin(counting(true), Ranking.from_order("q", range(8)), 8)
        res = consolidate(rng.uniform(size=8), sel.constraints)
        ranking = consolidated_ranking(res.adjusted, sel.constraints, Ranking.from_order("q", range(8)))
        np.testing.assert_array_equal(ranking.sorted_indices, true)

    def test_k_clamped_to_list_length(self):
        sel = select_slidewin(counting([1, 0]), Ranking.from_order("q", range(2)), 10)
        assert sel.k == 2


class TestTopAll:
    def test_count_small(self):
        assert len(topall_pairs([0, 1], 5)) == 7

    @pytest.mark.parametrize("n,k", [(5, 2), (20, 1), (50, 10), (7, 7)])
    def test_exact_call_count(self, n, k):
        oracle = counting(list(range(n)))
        base = ScoreVector("q", ScoreKind.RELEVANCE, np.linspace(1, 0, n))
        sel = select_topall(oracle, base, k)
        assert sel.oracle_calls == len(oracle.calls) == k * (n - k) + k * (k - 1) // 2

    def test_k_equals_n_covers_all_pairs(self):
        pairs = topall_pairs(list(range(6)), 6)
        assert len(pairs) == 15

    def test_top_selection_ties_by_initial(self):
        oracle = counting(list(range(4)))
        base = ScoreVector("q", ScoreKind.RELEVANCE, [0.5, 0.5, 0.5, 0.5])
        sel = select_topall(oracle, base, 1, tie_break=Ranking.from_order("q", [2, 0, 1, 3]))
        assert {p for p in sel.constraints.as_set()} == {(0, 2), (1, 2), (2, 3)}


def test_relevance_selected_top_beats_random_top():
    """TopAll picks better pairs from an informative ranker than from a random one."""
    ds = simulate_dataset(100, 30, seed=5)
    oracle = SyntheticOracle(SyntheticOracleConfig(seed=5, relevance_noise_sigma=0.15, preference_flip_prob=0.1))
    memo = PairMemo(oracle)
    rng = np.random.default_rng(5)
    informed, random = [], []
    for cl in ds:
        y = oracle.relevance(cl)
        init = cl.initial_ranking()
        for base, bucket in ((y, informed), (ScoreVector(cl.query_id, ScoreKind.RELEVANCE, rng.uniform(size=len(cl))), random)):
            sel = select_topall(memo.bind(cl), base, 5, init)
            res = consolidate(y, sel.constraints, SolverConfig(allow_cycles=True))
            ranking = consolidated_ranking(res.adjusted, sel.constraints, init)
            bucket.append(ndcg_at_k(cl.labels, ranking, 10))
    assert np.mean(informed) >= np.mean(random)
