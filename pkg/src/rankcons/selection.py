"""Which pairs to ask the preference oracle about.

* Allpair - every pair, O(n^2) calls; constraints from win-count differences.
* SlideWin - the pairs a k-pass sliding-window (bubble) sort touches, O(kn).
* TopAll - each of the top-k docs against every other doc, O(kn).
"""

from __future__ import annotations

import enum
import itertools
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

from .consolidation import ConstraintSet, constraints_from_preferences, constraints_from_scores
from .domain import Preference, PreferenceSet, Ranking, ScoreVector
from .oracles.base import PairOracle
from .prp import rank_by_scores, sliding_window_pairs, win_count_scores

DEFAULT_K = 10


class Method(str, enum.Enum):
    ALLPAIR = "allpair"
    SLIDEWIN = "slidewin"
    TOPALL = "topall"


@dataclass(frozen=True)
class Selection:
    method: Method
    k: int | None
    prefs: PreferenceSet
    constraints: ConstraintSet
    oracle_calls: int  # distinct pairs requested from the oracle
    prp_scores: ScoreVector | None = None
    ranking: Ranking | None = None  # SlideWin's sorted order


def _query_pairs(oracle: PairOracle, pairs: list[tuple[int, int]], workers: int) -> list[Preference]:
    if workers > 1 and len(pairs) > 1:
        with ThreadPoolExecutor(workers) as pool:
            verdicts = list(pool.map(lambda p: oracle(*p), pairs))
    else:
        verdicts = [oracle(i, j) for i, j in pairs]
    return [Preference(i, j, v) for (i, j), v in zip(pairs, verdicts)]


def select_allpair(oracle: PairOracle, n: int, query_id: str = "", workers: int = 1) -> Selection:
    pairs = list(itertools.combinations(range(n), 2))
    prefs = PreferenceSet.from_preferences(query_id, n, _query_pairs(oracle, pairs, workers))
    s = win_count_scores(prefs)
    return Selection(Method.ALLPAIR, None, prefs, constraints_from_scores(s), len(pairs), prp_scores=s)


def select_slidewin(oracle: PairOracle, initial: Ranking, k: int = DEFAULT_K) -> Selection:
    k = min(k, len(initial))
    prefs, ranking = sliding_window_pairs(initial, k, oracle)
    return Selection(
        Method.SLIDEWIN, k, prefs, constraints_from_preferences(prefs), len(prefs), ranking=ranking
    )


def topall_pairs(top: list[int], n: int) -> list[tuple[int, int]]:
    """Each top doc against every other doc, each unordered pair once."""
    top_set = set(top)
    pairs = set()
    for a in top:
        for b in range(n):
            if b != a and (b not in top_set or a < b):
                pairs.add((min(a, b), max(a, b)))
    return sorted(pairs)


def select_topall(
    oracle: PairOracle,
    base: ScoreVector,
    k: int = DEFAULT_K,
    tie_break: Ranking | None = None,
    workers: int = 1,
) -> Selection:
    """Top-k of ``base`` (ties by ``tie_break``) versus all, including pairs within the top-k."""
    n = len(base)
    k = min(k, n)
    tie_break = tie_break or Ranking.from_order(base.query_id, range(n))
    top = [int(x) for x in rank_by_scores(base, tie_break).sorted_indices[:k]]
    pairs = topall_pairs(top, n)
    prefs = PreferenceSet.from_preferences(base.query_id, n, _query_pairs(oracle, pairs, workers))
    return Selection(Method.TOPALL, k, prefs, constraints_from_preferences(prefs), len(pairs))
