"""Core data types shared across the package.

Everything here is immutable after construction. Per-document arrays are
stored as read-only numpy arrays aligned with ``CandidateList.docs``; doc
*indices* (0-based positions in ``docs``) are what preferences, constraints
and rankings refer to.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Mapping, Sequence

import numpy as np


def _frozen_array(values, dtype) -> np.ndarray:
    arr = np.array(values, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Document:
    doc_id: str
    text: str | None = None


@dataclass(frozen=True)
class CandidateList:
    """Candidate documents for one query.

    ``initial_rank`` is the retrieval order (1 = best). ``labels`` are raw
    graded judgments; ``normalized_labels`` are those grades divided by the
    dataset's maximum grade. Structural problems (duplicate ids, misaligned
    arrays) are not rejected here; run :func:`validate_dataset` to list them.
    """

    query_id: str
    docs: tuple[Document, ...]
    initial_rank: np.ndarray
    labels: np.ndarray | None = None
    normalized_labels: np.ndarray | None = None
    query_text: str | None = None
    retrieval_scores: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(self, "docs", tuple(self.docs))
        object.__setattr__(self, "initial_rank", _frozen_array(self.initial_rank, np.int64))
        if self.labels is not None:
            object.__setattr__(self, "labels", _frozen_array(self.labels, np.int64))
        if self.normalized_labels is not None:
            object.__setattr__(
                self, "normalized_labels", _frozen_array(self.normalized_labels, np.float64)
            )
        if self.retrieval_scores is not None:
            object.__setattr__(
                self, "retrieval_scores", _frozen_array(self.retrieval_scores, np.float64)
            )

    def __len__(self) -> int:
        return len(self.docs)

    @property
    def n(self) -> int:
        return len(self.docs)

    @property
    def doc_ids(self) -> list[str]:
        return [d.doc_id for d in self.docs]

    def index_of(self, doc_id: str) -> int:
        for k, d in enumerate(self.docs):
            if d.doc_id == doc_id:
                return k
        raise KeyError(doc_id)

    def initial_ranking(self) -> "Ranking":
        return Ranking(self.query_id, self.initial_rank)

    def with_labels(self, labels: Sequence[int], max_grade: int) -> "CandidateList":
        return CandidateList(
            query_id=self.query_id,
            docs=self.docs,
            initial_rank=self.initial_rank,
            labels=np.asarray(labels, dtype=np.int64),
            normalized_labels=normalize_labels(labels, max_grade),
            query_text=self.query_text,
            retrieval_scores=self.retrieval_scores,
        )


class ScoreKind(str, enum.Enum):
    RELEVANCE = "relevance"
    PRP_SCORE = "prp_score"
    CONSOLIDATED = "consolidated"
    CALIBRATED = "calibrated"
    ENSEMBLE = "ensemble"
    RETRIEVAL = "retrieval"


@dataclass(frozen=True)
class ScoreVector:
    query_id: str
    kind: ScoreKind
    values: np.ndarray

    def __post_init__(self):
        values = _frozen_array(self.values, np.float64)
        if values.ndim != 1:
            raise ValueError(f"score vector must be 1-d, got shape {values.shape}")
        if not np.all(np.isfinite(values)):
            raise ValueError(f"non-finite scores for query {self.query_id!r}")
        kind = ScoreKind(self.kind)
        if kind is ScoreKind.RELEVANCE and values.size and (values.min() < 0 or values.max() > 1):
            raise ValueError(f"relevance scores for query {self.query_id!r} must lie in [0, 1]")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "kind", kind)

    def __len__(self) -> int:
        return len(self.values)


class Verdict(str, enum.Enum):
    """Outcome of comparing doc ``i`` against doc ``j``."""

    I_WINS = "i"
    J_WINS = "j"
    INCONSISTENT = "inconsistent"

    def swapped(self) -> "Verdict":
        if self is Verdict.I_WINS:
            return Verdict.J_WINS
        if self is Verdict.J_WINS:
            return Verdict.I_WINS
        return self


@dataclass(frozen=True)
class Preference:
    i: int
    j: int
    verdict: Verdict

    def __post_init__(self):
        object.__setattr__(self, "i", int(self.i))
        object.__setattr__(self, "j", int(self.j))
        if self.i == self.j:
            raise ValueError(f"preference pairs doc {self.i} with itself")
        object.__setattr__(self, "verdict", Verdict(self.verdict))

    def canonical(self) -> "Preference":
        if self.i < self.j:
            return self
        return Preference(self.j, self.i, self.verdict.swapped())

    def winner(self) -> int | None:
        if self.verdict is Verdict.I_WINS:
            return self.i
        if self.verdict is Verdict.J_WINS:
            return self.j
        return None


@dataclass(frozen=True)
class PreferenceSet:
    """Sparse pairwise judgments for one query, stored once per unordered pair."""

    query_id: str
    n_docs: int
    _pairs: Mapping[tuple[int, int], Verdict] = field(default_factory=dict, repr=False)

    @classmethod
    def from_preferences(
        cls, query_id: str, n_docs: int, prefs: Iterable[Preference]
    ) -> "PreferenceSet":
        pairs: dict[tuple[int, int], Verdict] = {}
        for p in prefs:
            c = p.canonical()
            if not (0 <= c.i < n_docs and 0 <= c.j < n_docs):
                raise ValueError(f"preference ({p.i}, {p.j}) out of range for n_docs={n_docs}")
            if (c.i, c.j) in pairs:
                raise ValueError(f"duplicate preference for pair ({c.i}, {c.j})")
            pairs[(c.i, c.j)] = c.verdict
        return cls(query_id, n_docs, pairs)

    def __len__(self) -> int:
        return len(self._pairs)

    def __iter__(self) -> Iterator[Preference]:
        for (i, j), v in self._pairs.items():
            yield Preference(i, j, v)

    def __contains__(self, pair) -> bool:
        i, j = pair
        return (min(i, j), max(i, j)) in self._pairs

    def get(self, i: int, j: int) -> Verdict | None:
        """Verdict oriented as ``i`` vs ``j`` (either argument order)."""
        if i < j:
            return self._pairs.get((i, j))
        v = self._pairs.get((j, i))
        return None if v is None else v.swapped()

    @property
    def prefs(self) -> list[Preference]:
        return list(self)


@dataclass(frozen=True)
class Ranking:
    """A total order over a query's documents; ``rank_of[i]`` is 1 for the best doc."""

    query_id: str
    rank_of: np.ndarray

    def __post_init__(self):
        rank_of = _frozen_array(self.rank_of, np.int64)
        n = rank_of.size
        if n and not np.array_equal(np.sort(rank_of), np.arange(1, n + 1)):
            raise ValueError(f"ranks for query {self.query_id!r} are not a permutation of 1..{n}")
        object.__setattr__(self, "rank_of", rank_of)

    @classmethod
    def from_order(cls, query_id: str, order: Sequence[int]) -> "Ranking":
        order = np.asarray(order, dtype=np.int64)
        rank_of = np.empty_like(order)
        rank_of[order] = np.arange(1, order.size + 1)
        return cls(query_id, rank_of)

    @property
    def sorted_indices(self) -> np.ndarray:
        return np.argsort(self.rank_of, kind="stable")

    def __len__(self) -> int:
        return len(self.rank_of)


@dataclass(frozen=True)
class Dataset:
    lists: tuple[CandidateList, ...]
    max_grade: int | None = None
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "lists", tuple(self.lists))

    def __iter__(self) -> Iterator[CandidateList]:
        return iter(self.lists)

    def __len__(self) -> int:
        return len(self.lists)

    def by_id(self) -> dict[str, CandidateList]:
        return {cl.query_id: cl for cl in self.lists}


def normalize_labels(labels: Sequence[int], max_grade: int) -> np.ndarray:
    """Map integer grades onto [0, 1] by dividing by ``max_grade``."""
    if max_grade < 1:
        raise ValueError(f"max_grade must be >= 1, got {max_grade}")
    labels = np.asarray(labels)
    if labels.size and (labels.min() < 0 or labels.max() > max_grade):
        raise ValueError(f"labels must lie in [0, {max_grade}]")
    return labels.astype(np.float64) / max_grade


@dataclass
class ValidationReport:
    violations: dict[str, list[str]] = field(default_factory=dict)

    def add(self, query_id: str, message: str) -> None:
        self.violations.setdefault(query_id, []).append(message)

    @property
    def ok(self) -> bool:
        return not self.violations

    def __len__(self) -> int:
        return sum(len(v) for v in self.violations.values())

    def __str__(self) -> str:
        lines = []
        for qid, msgs in sorted(self.violations.items()):
            lines.extend(f"{qid}: {m}" for m in msgs)
        return "\n".join(lines)


def validate_dataset(
    lists: Iterable[CandidateList], max_grade: int | None = None
) -> ValidationReport:
    report = ValidationReport()
    seen_queries: set[str] = set()
    for cl in lists:
        qid = cl.query_id
        if qid in seen_queries:
            report.add(qid, "duplicate query_id")
        seen_queries.add(qid)
        n = len(cl.docs)

        ids: set[str] = set()
        for d in cl.docs:
            if not d.doc_id:
                report.add(qid, "empty doc_id")
            elif d.doc_id in ids:
                report.add(qid, f"duplicate doc_id {d.doc_id!r}")
            ids.add(d.doc_id)

        for name in ("initial_rank", "labels", "normalized_labels", "retrieval_scores"):
            arr = getattr(cl, name)
            if arr is not None and len(arr) != n:
                report.add(qid, f"{name} has length {len(arr)}, expected {n}")

        if len(cl.initial_rank) == n and not np.array_equal(
            np.sort(cl.initial_rank), np.arange(1, n + 1)
        ):
            report.add(qid, "initial_rank is not a permutation of 1..n")

        if cl.labels is not None and len(cl.labels):
            if cl.labels.min() < 0:
                report.add(qid, f"negative label {int(cl.labels.min())}")
            if max_grade is not None and cl.labels.max() > max_grade:
                report.add(qid, f"label {int(cl.labels.max())} exceeds max grade {max_grade}")
        if cl.normalized_labels is not None and len(cl.normalized_labels):
            nl = cl.normalized_labels
            if not np.all(np.isfinite(nl)) or nl.min() < 0 or nl.max() > 1:
                report.add(qid, "normalized_labels outside [0, 1]")
            elif (
                cl.labels is not None
                and max_grade is not None
                and len(cl.labels) == len(nl)
                and not np.allclose(nl, cl.labels / max_grade, atol=1e-12)
            ):
                report.add(qid, "normalized_labels disagree with labels / max_grade")
    return report
