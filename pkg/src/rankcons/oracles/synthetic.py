"""Seeded stand-ins for an LLM rater and an LLM pairwise ranker.

Every random draw is a pure function of (seed, query_id, doc ids), so answers
do not depend on the order in which documents or pairs are asked about.
"""

from __future__ import annotations

import hashlib
from dataclasses import asdict, dataclass
from statistics import NormalDist
from typing import Sequence

import numpy as np

from ..domain import CandidateList, Dataset, Document, ScoreKind, ScoreVector, Verdict, normalize_labels

_STD_NORMAL = NormalDist()


def stable_hash(*parts) -> int:
    """64-bit hash of the string forms of ``parts``; stable across processes."""
    h = hashlib.blake2b("\x1f".join(str(p) for p in parts).encode(), digest_size=8)
    return int.from_bytes(h.digest(), "little")


def _uniform(*parts) -> float:
    return (stable_hash(*parts) + 0.5) / 2.0**64


@dataclass(frozen=True)
class SyntheticOracleConfig:
    seed: int = 0
    relevance_noise_sigma: float = 0.0
    preference_flip_prob: float = 0.0
    tie_prob: float = 0.0

    def __post_init__(self):
        if self.relevance_noise_sigma < 0:
            raise ValueError("relevance_noise_sigma must be >= 0")
        if not 0 <= self.preference_flip_prob <= 0.5:
            raise ValueError("preference_flip_prob must be in [0, 0.5]")
        if not 0 <= self.tie_prob <= 1:
            raise ValueError("tie_prob must be in [0, 1]")

    def to_dict(self) -> dict:
        return asdict(self)


def synthetic_relevance(cfg: SyntheticOracleConfig, cl: CandidateList) -> ScoreVector:
    """Normalized labels plus clipped Gaussian noise, one draw per (query, doc)."""
    if cl.normalized_labels is None:
        raise ValueError(f"query {cl.query_id!r} has no normalized labels")
    noise = np.array(
        [
            _STD_NORMAL.inv_cdf(_uniform(cfg.seed, "rel", cl.query_id, d.doc_id))
            for d in cl.docs
        ]
    )
    values = np.clip(cl.normalized_labels + cfg.relevance_noise_sigma * noise, 0.0, 1.0)
    return ScoreVector(cl.query_id, ScoreKind.RELEVANCE, values)


def synthetic_preference(cfg: SyntheticOracleConfig, cl: CandidateList, i: int, j: int) -> Verdict:
    """Noisy verdict for doc ``i`` vs doc ``j``, drawn once per unordered pair.

    Equal labels: inconsistent with probability ``tie_prob``, else a fair coin.
    Unequal labels: inconsistent with probability ``tie_prob / 2``, flipped
    with probability ``preference_flip_prob``, otherwise correct.
    """
    if cl.normalized_labels is None:
        raise ValueError(f"query {cl.query_id!r} has no normalized labels")
    id_i, id_j = cl.docs[i].doc_id, cl.docs[j].doc_id
    # draw in a canonical orientation so compare(i, j) and compare(j, i) agree
    lo, hi = (i, j) if id_i <= id_j else (j, i)
    lo_id, hi_id = cl.docs[lo].doc_id, cl.docs[hi].doc_id
    u = _uniform(cfg.seed, "pref", cl.query_id, lo_id, hi_id)
    y_lo, y_hi = cl.normalized_labels[lo], cl.normalized_labels[hi]

    if y_lo == y_hi:
        if u < cfg.tie_prob:
            return Verdict.INCONSISTENT
        lo_wins = _uniform(cfg.seed, "coin", cl.query_id, lo_id, hi_id) < 0.5
    else:
        if u < cfg.tie_prob / 2:
            return Verdict.INCONSISTENT
        lo_wins = y_lo > y_hi
        if u < cfg.tie_prob / 2 + cfg.preference_flip_prob:
            lo_wins = not lo_wins
    winner = lo if lo_wins else hi
    return Verdict.I_WINS if winner == i else Verdict.J_WINS


class SyntheticOracle:
    """Relevance and preference oracle backed by the ground-truth labels."""

    def __init__(self, cfg: SyntheticOracleConfig):
        self.cfg = cfg

    def relevance(self, cl: CandidateList) -> ScoreVector:
        return synthetic_relevance(self.cfg, cl)

    def compare(self, cl: CandidateList, i: int, j: int) -> Verdict:
        return synthetic_preference(self.cfg, cl, i, j)


def simulate_dataset(
    n_queries: int,
    list_size: int,
    grades: Sequence[int] = (0, 1, 2, 3),
    seed: int = 0,
    label_weights: Sequence[float] | None = None,
    retrieval_noise_sigma: float = 0.3,
    name: str = "synthetic",
) -> Dataset:
    """Random labelled candidate lists with a noisy first-stage retrieval order.

    Labels are drawn from ``grades`` (uniformly unless ``label_weights`` is
    given). Retrieval scores are normalized labels plus unclipped Gaussian
    noise; documents are stored in retrieval order.
    """
    grades = sorted(set(int(g) for g in grades))
    if not grades or grades[0] < 0 or len(grades) < 2:
        raise ValueError(f"grade alphabet needs at least two non-negative grades, got {grades}")
    if n_queries < 0 or list_size < 1:
        raise ValueError("need n_queries >= 0 and list_size >= 1")
    max_grade = grades[-1]
    if label_weights is not None:
        p = np.asarray(label_weights, dtype=float)
        if p.shape != (len(grades),) or np.any(p < 0) or p.sum() <= 0:
            raise ValueError("label_weights must give one non-negative weight per grade")
        p = p / p.sum()
    else:
        p = None

    width = max(3, len(str(max(n_queries - 1, 0))))
    lists = []
    for qi in range(n_queries):
        qid = f"q{qi:0{width}d}"
        rng = np.random.default_rng([seed, stable_hash("simulate", qid)])
        labels = rng.choice(grades, size=list_size, p=p)
        norm = labels / max_grade
        retrieval = norm + retrieval_noise_sigma * rng.standard_normal(list_size)
        order = np.argsort(-retrieval, kind="stable")
        labels, retrieval = labels[order], retrieval[order]
        docs = tuple(Document(f"{qid}-d{k:03d}") for k in range(list_size))
        lists.append(
            CandidateList(
                query_id=qid,
                docs=docs,
                initial_rank=np.arange(1, list_size + 1),
                labels=labels,
                normalized_labels=normalize_labels(labels, max_grade),
                retrieval_scores=retrieval,
            )
        )
    return Dataset(tuple(lists), max_grade=max_grade, name=name)
