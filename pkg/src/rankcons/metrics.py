"""Ranking and relevance-prediction metrics, plus the helpers around them.

MSE and ECE compare predictions with *normalized* labels in [0, 1]; NDCG
uses the raw integer grades in its ``2**y - 1`` gain.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy import stats

from .domain import CandidateList, Ranking, ScoreKind, ScoreVector

DEFAULT_CUTOFFS = (1, 5, 10, 20)


def mse(labels, preds) -> float:
    labels = np.asarray(labels, dtype=float)
    preds = np.asarray(preds, dtype=float)
    if labels.shape != preds.shape:
        raise ValueError(f"length mismatch: {labels.shape} labels vs {preds.shape} preds")
    if labels.size == 0:
        raise ValueError("mse of an empty list")
    return float(np.mean((preds - labels) ** 2))


def _descending_order(preds: np.ndarray, order) -> np.ndarray:
    if order is None:
        return np.argsort(-preds, kind="stable")
    if isinstance(order, Ranking):
        return order.sorted_indices
    return np.asarray(order, dtype=np.int64)


def ece(labels, preds, n_bins: int = 10, order: Ranking | Sequence[int] | None = None) -> float:
    """Calibration error over equal-count bins of score-sorted documents.

    Documents are sorted by prediction (descending, ties in input order unless
    ``order`` gives the sort explicitly) and cut into ``n_bins`` contiguous
    bins whose sizes differ by at most one, the first ``n % n_bins`` bins
    taking the extra document. The result is the summed absolute gap between
    label mass and prediction mass per bin, divided by the number of docs.
    """
    labels = np.asarray(labels, dtype=float)
    preds = np.asarray(preds, dtype=float)
    if labels.shape != preds.shape:
        raise ValueError(f"length mismatch: {labels.shape} labels vs {preds.shape} preds")
    n = labels.size
    if n_bins < 1:
        raise ValueError("n_bins must be positive")
    if n < n_bins:
        raise ValueError(f"ece needs at least n_bins={n_bins} documents, got {n}")
    idx = _descending_order(preds, order)
    gap = 0.0
    for b in np.array_split(idx, n_bins):
        gap += abs(labels[b].sum() - preds[b].sum())
    return float(gap / n)


def _dcg(gains_in_rank_order: np.ndarray) -> float:
    return float(np.sum(gains_in_rank_order / np.log2(2.0 + np.arange(len(gains_in_rank_order)))))


def dcg_at_k(labels, ranking: Ranking, k: int) -> float:
    labels = np.asarray(labels, dtype=float)
    top = ranking.sorted_indices[:k]
    return _dcg(2.0 ** labels[top] - 1.0)


def ndcg_at_k(labels, ranking: Ranking, k: int) -> float:
    """NDCG truncated at rank ``k``; 1.0 when no document has positive gain.

    Actual and ideal DCG are summed in the same order, so a ranking whose gain
    sequence matches the ideal one scores exactly 1.0.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    labels = np.asarray(labels, dtype=float)
    ideal = _dcg(np.sort(2.0 ** labels - 1.0)[::-1][:k])
    if ideal == 0.0:
        return 1.0
    return dcg_at_k(labels, ranking, k) / ideal


def rescale_global(
    preds: Sequence[ScoreVector] | Mapping[str, ScoreVector], y_min: float = 0.0, y_max: float = 1.0
):
    """Affinely map the global [min, max] over all vectors onto [y_min, y_max].

    The same coefficients are applied to every query. Returns the same
    container type as given.
    """
    items = list(preds.values()) if isinstance(preds, Mapping) else list(preds)
    if not items:
        return {} if isinstance(preds, Mapping) else []
    lo = min(float(v.values.min()) for v in items if len(v))
    hi = max(float(v.values.max()) for v in items if len(v))

    def f(v: ScoreVector) -> ScoreVector:
        if hi > lo:
            vals = y_min + (y_max - y_min) * (v.values - lo) / (hi - lo)
        else:
            vals = np.full(len(v), 0.5 * (y_min + y_max))
        return ScoreVector(v.query_id, v.kind, vals)

    if hi <= lo:
        warnings.warn("constant predictions over the test set; mapping all to the range midpoint")
    if isinstance(preds, Mapping):
        return {k: f(v) for k, v in preds.items()}
    return [f(v) for v in items]


def ensemble(y: ScoreVector, s: ScoreVector, w: float) -> ScoreVector:
    """``y + w * s / (n - 1)``; the win counts are scaled to [0, 1] first."""
    if len(y) != len(s):
        raise ValueError("relevance and PRP vectors are not aligned")
    n = len(s)
    s_norm = s.values / (n - 1) if n > 1 else np.zeros(n)
    return ScoreVector(y.query_id, ScoreKind.ENSEMBLE, y.values + w * s_norm)


def pareto_mask(points) -> np.ndarray:
    """True for (ndcg, ece) points no other point dominates (higher ndcg, lower ece)."""
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    nd, ec = pts[:, 0], pts[:, 1]
    keep = np.ones(len(pts), dtype=bool)
    for a in range(len(pts)):
        dominated = (nd >= nd[a]) & (ec <= ec[a]) & ((nd > nd[a]) | (ec < ec[a]))
        keep[a] = not dominated.any()
    return keep


def pareto_front(points: Iterable[tuple[float, float]]) -> list[tuple[float, float]]:
    points = list(points)
    if not points:
        return []
    mask = pareto_mask(points)
    return [p for p, m in zip(points, mask) if m]


def dominated_by_any(point, others) -> bool:
    nd, ec = point
    return any(
        o_nd >= nd and o_ec <= ec and (o_nd > nd or o_ec < ec) for o_nd, o_ec in others
    )


@dataclass(frozen=True)
class SignificanceResult:
    t_stat: float
    p_value: float
    significant: bool
    degenerate: bool = False  # differences had zero variance


def paired_significance(per_query_a, per_query_b, alpha: float = 0.01) -> SignificanceResult:
    """Two-sided paired t-test on per-query metric differences."""
    a = np.asarray(per_query_a, dtype=float)
    b = np.asarray(per_query_b, dtype=float)
    if a.shape != b.shape:
        raise ValueError("per-query arrays are not aligned")
    if a.size < 2:
        raise ValueError("need at least two queries")
    d = a - b
    # differences equal up to roundoff count as zero variance
    if np.ptp(d) <= 1e-12 * max(1.0, float(np.max(np.abs(d)))):
        mean = float(np.mean(d))
        if abs(mean) <= 1e-12:
            return SignificanceResult(0.0, 1.0, False, degenerate=True)
        return SignificanceResult(math.copysign(math.inf, mean), 0.0, True, degenerate=True)
    res = stats.ttest_rel(a, b)
    p = float(res.pvalue)
    return SignificanceResult(float(res.statistic), p, p < alpha)


@dataclass
class EvalReport:
    method_name: str
    per_query: dict[str, dict[str, float]]
    aggregate: dict[str, float]
    config: dict = field(default_factory=dict)

    def metric(self, name: str) -> np.ndarray:
        return np.array([self.per_query[q][name] for q in sorted(self.per_query)])

    def rows(self) -> list[dict]:
        out = []
        for qid in sorted(self.per_query):
            out.append({"method": self.method_name, "query_id": qid, **self.per_query[qid]})
        return out

    def to_dict(self) -> dict:
        return {
            "method": self.method_name,
            "aggregate": self.aggregate,
            "per_query": self.per_query,
            "config": self.config,
        }


def query_metrics(
    cl: CandidateList,
    preds: np.ndarray,
    ranking: Ranking,
    cutoffs: Sequence[int] = DEFAULT_CUTOFFS,
    n_bins: int = 10,
) -> dict[str, float]:
    if cl.labels is None or cl.normalized_labels is None:
        raise ValueError(f"query {cl.query_id!r} has no labels")
    out = {f"ndcg@{k}": ndcg_at_k(cl.labels, ranking, k) for k in cutoffs}
    out["mse"] = mse(cl.normalized_labels, preds)
    out["ece"] = ece(cl.normalized_labels, preds, min(n_bins, len(cl)), order=ranking)
    return out


def evaluate_method(
    lists: Iterable[CandidateList],
    preds: Mapping[str, ScoreVector],
    rankings: Mapping[str, Ranking] | None,
    method_name: str,
    cutoffs: Sequence[int] = DEFAULT_CUTOFFS,
    n_bins: int = 10,
    pooled_ece: bool = False,
) -> EvalReport:
    """Per-query metrics and their unweighted means.

    ``rankings`` defaults to sorting ``preds`` with the retrieval order as
    tie-break. ECE bins follow the same ranking, and lists shorter than
    ``n_bins`` use one bin per document.
    """
    from .prp import rank_by_scores

    per_query: dict[str, dict[str, float]] = {}
    pooled_labels, pooled_preds = [], []
    for cl in lists:
        sv = preds[cl.query_id]
        if rankings is not None and cl.query_id in rankings:
            ranking = rankings[cl.query_id]
        else:
            ranking = rank_by_scores(sv, cl.initial_ranking())
        per_query[cl.query_id] = query_metrics(cl, sv.values, ranking, cutoffs, n_bins)
        pooled_labels.append(cl.normalized_labels)
        pooled_preds.append(sv.values)
    if not per_query:
        raise ValueError("nothing to evaluate")
    names = list(next(iter(per_query.values())))
    aggregate = {m: float(np.mean([per_query[q][m] for q in per_query])) for m in names}
    if pooled_ece:
        lab = np.concatenate(pooled_labels)
        prd = np.concatenate(pooled_preds)
        aggregate["ece_pooled"] = ece(lab, prd, min(n_bins, len(lab)))
    return EvalReport(
        method_name,
        per_query,
        aggregate,
        {"bins": n_bins, "cutoffs": list(cutoffs), "pooled_ece": pooled_ece},
    )
