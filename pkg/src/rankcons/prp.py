"""Turning pairwise preferences into scores and rankings."""

from __future__ import annotations

import numpy as np

from .domain import Preference, PreferenceSet, Ranking, ScoreKind, ScoreVector, Verdict
from .oracles.base import OracleError, PairOracle


def win_count_scores(prefs: PreferenceSet) -> ScoreVector:
    """One point per win, half a point to each side of an inconsistent pair.

    Pairs absent from ``prefs`` contribute nothing.
    """
    s = np.zeros(prefs.n_docs)
    for p in prefs:
        if p.verdict is Verdict.I_WINS:
            s[p.i] += 1.0
        elif p.verdict is Verdict.J_WINS:
            s[p.j] += 1.0
        else:
            s[p.i] += 0.5
            s[p.j] += 0.5
    return ScoreVector(prefs.query_id, ScoreKind.PRP_SCORE, s)


def rank_by_scores(scores: ScoreVector | np.ndarray, tie_break: Ranking) -> Ranking:
    """Descending sort on scores; equal scores keep the ``tie_break`` order."""
    values = scores.values if isinstance(scores, ScoreVector) else np.asarray(scores, float)
    if len(values) != len(tie_break):
        raise ValueError(f"{len(values)} scores but tie-break ranking has {len(tie_break)} docs")
    order = np.lexsort((tie_break.rank_of, -values))
    return Ranking.from_order(tie_break.query_id, order)


def sliding_window_pairs(
    initial: Ranking, k: int, oracle: PairOracle
) -> tuple[PreferenceSet, Ranking]:
    """Bubble the best ``k`` documents to the front with adjacent comparisons.

    Each pass walks a size-2 window with stride 1 from the bottom of the
    current list up to position ``p`` (the pass index), swapping when the
    lower document wins. Ties/inconsistent verdicts never swap. Verdicts are
    cached per unordered pair, so the returned preference set holds exactly
    the distinct pairs the oracle was asked about.
    """
    n = len(initial)
    if not 1 <= k <= max(n, 1):
        raise ValueError(f"k must be in [1, {n}], got {k}")
    order = list(initial.sorted_indices)
    seen: dict[tuple[int, int], Verdict] = {}

    for p in range(min(k, n)):
        for pos in range(n - 2, p - 1, -1):
            upper, lower = order[pos], order[pos + 1]
            key = (min(upper, lower), max(upper, lower))
            v = seen.get(key)
            if v is None:
                try:
                    v = oracle(key[0], key[1])
                except OracleError:
                    raise
                except Exception as exc:
                    raise OracleError(initial.query_id, key[0], key[1], exc) from exc
                seen[key] = v
            winner = Preference(key[0], key[1], v).winner()
            if winner == lower:
                order[pos], order[pos + 1] = lower, upper

    prefs = PreferenceSet.from_preferences(
        initial.query_id, n, (Preference(i, j, v) for (i, j), v in seen.items())
    )
    return prefs, Ranking.from_order(initial.query_id, order)
