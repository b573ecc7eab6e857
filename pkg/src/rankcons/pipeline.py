"""End-to-end runs: oracle scores, pair selection, consolidation, evaluation.

A run produces an :class:`~rankcons.data_io.Experiment` holding, per method
and query, the predicted scores and the ranking to evaluate. Baseline methods
are ``bm25`` (retrieval scores), ``prater`` (pointwise relevance) and ``prp``
(all-pairs win counts); consolidated methods are ``allpair``, ``slidewin``
and ``topall``.
"""

from __future__ import annotations

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .calibration import crossval_calibrate
from .consolidation import (
    ConstraintSet,
    SolverConfig,
    consolidate,
    consolidated_ranking,
)
from .data_io import Experiment
from .domain import CandidateList, Dataset, Ranking, ScoreKind, ScoreVector
from .metrics import (
    DEFAULT_CUTOFFS,
    EvalReport,
    ensemble,
    evaluate_method,
    pareto_mask,
    rescale_global,
)
from .oracles.base import PairMemo, PreferenceOracle, RelevanceOracle
from .prp import rank_by_scores
from .selection import DEFAULT_K, Method, select_allpair, select_slidewin, select_topall

log = logging.getLogger(__name__)

CONSOLIDATED = tuple(m.value for m in Method)
BASELINES = ("bm25", "prater", "prp")
INIT_CHOICES = ("auto", "retrieval", "relevance")
BASE_CHOICES = ("relevance", "retrieval")


@dataclass(frozen=True)
class PipelineConfig:
    methods: tuple[str, ...] = ("allpair",)
    k: int = DEFAULT_K
    # initial ranker used to pick pairs; auto = retrieval for slidewin, relevance for topall
    init_ranking: str = "auto"
    # scores being consolidated
    base: str = "relevance"
    # noisy direct verdicts can be intransitive, so cycles are solved rather than rejected
    solver: SolverConfig = field(default_factory=lambda: SolverConfig(allow_cycles=True))
    workers: int = 1

    def __post_init__(self):
        unknown = set(self.methods) - set(CONSOLIDATED) - {"prp"}
        if unknown:
            raise ValueError(f"unknown methods {sorted(unknown)}")
        if self.init_ranking not in INIT_CHOICES:
            raise ValueError(f"init_ranking must be one of {INIT_CHOICES}")
        if self.base not in BASE_CHOICES:
            raise ValueError(f"base must be one of {BASE_CHOICES}")
        if self.k < 1:
            raise ValueError("k must be positive")
        if self.workers < 1:
            raise ValueError("workers must be positive")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["methods"] = list(self.methods)
        return d

    def init_for(self, method: str) -> str:
        if self.init_ranking != "auto":
            return self.init_ranking
        return "relevance" if method == Method.TOPALL.value else "retrieval"


def retrieval_scores(cl: CandidateList) -> ScoreVector:
    """Retrieval scores, or reversed initial ranks when the run had none."""
    if cl.retrieval_scores is not None:
        vals = cl.retrieval_scores
    else:
        vals = (len(cl) - cl.initial_rank).astype(float)
    return ScoreVector(cl.query_id, ScoreKind.RETRIEVAL, vals)


@dataclass
class QueryOutcome:
    query_id: str
    scores: dict[str, ScoreVector] = field(default_factory=dict)
    rankings: dict[str, Ranking] = field(default_factory=dict)
    preferences: dict = field(default_factory=dict)
    stats: dict[str, dict] = field(default_factory=dict)


def run_query(
    cl: CandidateList,
    relevance: ScoreVector,
    memo: PairMemo,
    cfg: PipelineConfig,
) -> QueryOutcome:
    out = QueryOutcome(cl.query_id)
    initial = cl.initial_ranking()
    bm25 = retrieval_scores(cl)
    out.scores["bm25"] = bm25
    out.rankings["bm25"] = initial
    out.scores["prater"] = relevance
    out.rankings["prater"] = rank_by_scores(relevance, initial)
    base = relevance if cfg.base == "relevance" else bm25
    oracle = memo.bind(cl)

    def initial_for(method: str) -> Ranking:
        if cfg.init_for(method) == "retrieval":
            return initial
        return rank_by_scores(relevance, initial)

    def record(method: str, cs: ConstraintSet, prefs, calls: int, live_before: int, extra=None):
        t0 = time.perf_counter()
        res = consolidate(base, cs, cfg.solver)
        elapsed = time.perf_counter() - t0
        out.scores[method] = res.adjusted
        out.rankings[method] = consolidated_ranking(res.adjusted, cs, initial)
        out.preferences[method] = prefs
        out.stats[method] = {
            "oracle_calls": calls,
            "live_calls": memo.calls(cl.query_id) - live_before,
            "constraints": len(cs),
            "objective": res.objective,
            "iterations": res.iterations,
            "max_violation": res.max_violation,
            "solver": res.solver,
            "solve_seconds": elapsed,
            **(extra or {}),
        }

    want_allpair = Method.ALLPAIR.value in cfg.methods or "prp" in cfg.methods
    if want_allpair:
        before = memo.calls(cl.query_id)
        sel = select_allpair(oracle, len(cl), cl.query_id, cfg.workers)
        s = sel.prp_scores
        out.scores["prp"] = s
        # win-count ties go to the relevance order, matching the ensemble at large weight
        out.rankings["prp"] = rank_by_scores(s, out.rankings["prater"])
        out.preferences["prp"] = sel.prefs
        out.stats["prp"] = {"oracle_calls": sel.oracle_calls, "live_calls": memo.calls(cl.query_id) - before}
        if Method.ALLPAIR.value in cfg.methods:
            record(Method.ALLPAIR.value, sel.constraints, sel.prefs, sel.oracle_calls, before)
    if Method.SLIDEWIN.value in cfg.methods:
        before = memo.calls(cl.query_id)
        sel = select_slidewin(oracle, initial_for(Method.SLIDEWIN.value), cfg.k)
        record(Method.SLIDEWIN.value, sel.constraints, sel.prefs, sel.oracle_calls, before, {"k": sel.k})
    if Method.TOPALL.value in cfg.methods:
        before = memo.calls(cl.query_id)
        init = initial_for(Method.TOPALL.value)
        # rank_of as a score: lower rank first
        sel = select_topall(
            oracle, ScoreVector(cl.query_id, ScoreKind.RETRIEVAL, -init.rank_of.astype(float)), cfg.k, init, cfg.workers
        )
        record(Method.TOPALL.value, sel.constraints, sel.prefs, sel.oracle_calls, before, {"k": sel.k})
    return out


def run_pipeline(
    dataset: Dataset,
    relevance: RelevanceOracle | Callable[[CandidateList], ScoreVector],
    preference: PreferenceOracle | PairMemo | None,
    cfg: PipelineConfig | None = None,
    extra_config: dict | None = None,
) -> Experiment:
    """Run every query; a failing query is logged and listed in ``failures``.

    ``preference`` may be a ready :class:`PairMemo` (for example one preloaded
    from a cache file) so that call counters reflect only live requests.
    """
    cfg = cfg or PipelineConfig()
    memo = preference if isinstance(preference, PairMemo) else PairMemo(preference)
    rel_fn = relevance.relevance if hasattr(relevance, "relevance") else relevance

    def one(cl: CandidateList):
        try:
            return run_query(cl, rel_fn(cl), memo, cfg), None
        except Exception as exc:  # noqa: BLE001 - report and continue with other queries
            log.error("query %s failed: %s", cl.query_id, exc)
            return None, f"{type(exc).__name__}: {exc}"

    lists = list(dataset)
    if cfg.workers > 1 and len(lists) > 1:
        with ThreadPoolExecutor(cfg.workers) as pool:
            results = list(pool.map(one, lists))
    else:
        results = [one(cl) for cl in lists]

    exp = Experiment(dataset, config={"pipeline": cfg.to_dict(), **(extra_config or {})})
    for cl, (outcome, err) in sorted(zip(lists, results), key=lambda t: t[0].query_id):
        if err is not None:
            exp.failures[cl.query_id] = err
            continue
        for m, sv in outcome.scores.items():
            exp.scores.setdefault(m, {})[cl.query_id] = sv
        for m, r in outcome.rankings.items():
            exp.rankings.setdefault(m, {})[cl.query_id] = r
        for m, ps in outcome.preferences.items():
            exp.preferences.setdefault(m, {})[cl.query_id] = ps
        for m, st in outcome.stats.items():
            exp.stats.setdefault(m, {})[cl.query_id] = st
    return exp


def _evaluated_lists(exp: Experiment, method: str) -> list[CandidateList]:
    per = exp.scores[method]
    return [cl for cl in exp.dataset if cl.query_id in per]


def evaluate_scores(
    exp: Experiment,
    method: str,
    scores: dict[str, ScoreVector],
    rankings: dict[str, Ranking] | None = None,
    cutoffs: Sequence[int] = DEFAULT_CUTOFFS,
    n_bins: int = 10,
    pooled_ece: bool = False,
) -> EvalReport:
    """Evaluate one method; unsupervised scores are globally rescaled to [0, 1] first."""
    kinds = {sv.kind for sv in scores.values()}
    preds = scores if kinds == {ScoreKind.CALIBRATED} else rescale_global(scores, 0.0, 1.0)
    lists = [cl for cl in exp.dataset if cl.query_id in scores]
    return evaluate_method(lists, preds, rankings, method, cutoffs, n_bins, pooled_ece)


def evaluate_experiment(
    exp: Experiment,
    methods: Iterable[str] | None = None,
    cutoffs: Sequence[int] = DEFAULT_CUTOFFS,
    n_bins: int = 10,
    pooled_ece: bool = False,
) -> dict[str, EvalReport]:
    if not exp.scores:
        raise ValueError("experiment has no scores to evaluate")
    names = list(methods) if methods is not None else list(exp.scores)
    reports = {}
    for m in names:
        if m not in exp.scores:
            raise KeyError(f"method {m!r} not in experiment (have {sorted(exp.scores)})")
        reports[m] = evaluate_scores(
            exp, m, exp.scores[m], exp.rankings.get(m), cutoffs, n_bins, pooled_ece
        )
    return reports


def calibrate_method(
    exp: Experiment,
    method: str,
    calibrator: str = "pwl",
    folds: int = 4,
    seed: int = 0,
    n_knots: int = 10,
) -> str:
    """Add a cross-validated calibrated copy of ``method`` (named e.g. ``prp+pwl``) to ``exp``."""
    if method not in exp.scores:
        raise KeyError(f"method {method!r} not in experiment (have {sorted(exp.scores)})")
    name = f"{method}+{calibrator}"
    exp.scores[name] = crossval_calibrate(
        _evaluated_lists(exp, method), exp.scores[method], calibrator, folds, seed, n_knots
    )
    # calibration is monotone, so the source ranking carries over
    if method in exp.rankings:
        exp.rankings[name] = dict(exp.rankings[method])
    exp.config.setdefault("calibration", {})[name] = {
        "method": calibrator,
        "source": method,
        "folds": folds,
        "seed": seed,
        "knots": n_knots,
    }
    return name


def default_weight_grid(n_points: int = 20, lo: float = 1e-2, hi: float = 1e2) -> np.ndarray:
    """``0`` followed by ``n_points - 1`` geometrically spaced weights."""
    if n_points < 1:
        raise ValueError("empty weight grid")
    return np.concatenate([[0.0], np.geomspace(lo, hi, n_points - 1)]) if n_points > 1 else np.zeros(1)


@dataclass(frozen=True)
class SweepPoint:
    label: str
    w: float | None
    ndcg: float
    ece: float
    pareto: bool = False


def sweep_ensemble(
    exp: Experiment,
    weights: Sequence[float],
    overlay: Iterable[str] = CONSOLIDATED,
    cutoff: int = 10,
    n_bins: int = 10,
) -> list[SweepPoint]:
    """Ensemble of relevance and win counts at each weight, Pareto-marked, plus overlay methods."""
    weights = [float(w) for w in weights]
    if not weights:
        raise ValueError("empty weight grid")
    for need in ("prater", "prp"):
        if need not in exp.scores:
            raise KeyError(f"sweep needs {need!r} scores in the experiment")
    y, s = exp.scores["prater"], exp.scores["prp"]
    qids = [q for q in y if q in s]
    key = f"ndcg@{cutoff}"
    points = []
    for w in weights:
        sc = {q: ensemble(y[q], s[q], w) for q in qids}
        rep = evaluate_scores(exp, "ensemble", sc, None, (cutoff,), n_bins)
        points.append((w, rep.aggregate[key], rep.aggregate["ece"]))
    mask = pareto_mask([(p[1], p[2]) for p in points])
    out = [SweepPoint("ensemble", w, nd, e, bool(m)) for (w, nd, e), m in zip(points, mask)]
    for m in overlay:
        if m in exp.scores:
            rep = evaluate_scores(exp, m, exp.scores[m], exp.rankings.get(m), (cutoff,), n_bins)
            out.append(SweepPoint(m, None, rep.aggregate[key], rep.aggregate["ece"]))
    return out


def ablation_grid(
    dataset: Dataset,
    relevance,
    preference,
    methods: Sequence[str] = (Method.SLIDEWIN.value, Method.TOPALL.value),
    ks: Sequence[int] = (DEFAULT_K,),
    inits: Sequence[str] = ("auto",),
    bases: Sequence[str] = ("relevance",),
    solver: SolverConfig | None = None,
    workers: int = 1,
    cutoff: int = 10,
    n_bins: int = 10,
) -> list[dict]:
    """Rows of (method, init, base, k, ndcg, ece, mean oracle calls).

    Allpair does not depend on init or k and is run once per base.
    """
    memo = preference if isinstance(preference, PairMemo) else PairMemo(preference)
    rows = []
    for base in bases:
        for method in methods:
            grid = [(None, None)] if method == Method.ALLPAIR.value else [(i, k) for i in inits for k in ks]
            for init, k in grid:
                cfg = PipelineConfig(
                    methods=(method,),
                    k=k or DEFAULT_K,
                    init_ranking=init or "auto",
                    base=base,
                    solver=solver or SolverConfig(allow_cycles=True),
                    workers=workers,
                )
                exp = run_pipeline(dataset, relevance, memo, cfg)
                if exp.failures:
                    raise RuntimeError(f"ablation run failed on {sorted(exp.failures)}")
                rep = evaluate_scores(
                    exp, method, exp.scores[method], exp.rankings[method], (cutoff,), n_bins
                )
                calls = [st["oracle_calls"] for st in exp.stats[method].values()]
                rows.append(
                    {
                        "method": method,
                        "init": cfg.init_for(method) if init else "",
                        "base": base,
                        "k": k or "",
                        f"ndcg@{cutoff}": rep.aggregate[f"ndcg@{cutoff}"],
                        "ece": rep.aggregate["ece"],
                        "mse": rep.aggregate["mse"],
                        "mean_oracle_calls": float(np.mean(calls)),
                    }
                )
    return rows

