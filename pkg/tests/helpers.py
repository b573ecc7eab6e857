"""Shared builders and independent checks for the test suite."""

from __future__ import annotations

import numpy as np
from scipy.optimize import nnls

from rankcons.consolidation import ConstraintSet
from rankcons.domain import CandidateList, Document, normalize_labels


def random_dag_constraints(rng: np.random.Generator, n: int, density: float | None = None) -> ConstraintSet:
    """Random acyclic constraint set: pairs oriented along a hidden permutation."""
    if density is None:
        density = rng.uniform(0.1, 0.9)
    hidden = rng.permutation(n)
    pairs = []
    for a in range(n):
        for b in range(a + 1, n):
            if rng.random() < density:
                pairs.append((int(hidden[a]), int(hidden[b])))
    return ConstraintSet("", n, np.array(pairs, dtype=np.int64).reshape(-1, 2))


def kkt_residual(base, adjusted, cs: ConstraintSet, tight_tol: float = 1e-9) -> float:
    """Distance from satisfying the projection's optimality conditions.

    ``adjusted`` is the projection of ``base`` iff it is feasible and
    ``base - adjusted`` is a nonnegative combination of the normals
    ``e_j - e_i`` of constraints that hold with equality. The multipliers are
    recovered with NNLS, independently of any solver in the package.
    """
    y = np.asarray(base, dtype=float)
    z = np.asarray(adjusted, dtype=float)
    if len(cs) == 0:
        return float(np.max(np.abs(y - z), initial=0.0))
    ci, cj = cs.pairs[:, 0], cs.pairs[:, 1]
    violation = float(np.max(z[cj] - z[ci], initial=0.0))
    tight = np.abs(z[ci] - z[cj]) <= tight_tol * max(1.0, float(np.ptp(y)))
    if not tight.any():
        return max(violation, float(np.max(np.abs(y - z))))
    A = np.zeros((len(y), int(tight.sum())))
    for col, (i, j) in enumerate(cs.pairs[tight]):
        A[j, col] += 1.0
        A[i, col] -= 1.0
    _, rnorm = nnls(A, y - z)
    return max(violation, float(rnorm))


def make_list(labels, max_grade: int = 3, query_id: str = "q", retrieval=None, texts=None) -> CandidateList:
    labels = np.asarray(labels, dtype=np.int64)
    n = len(labels)
    docs = tuple(
        Document(f"{query_id}-d{k}", None if texts is None else texts[k]) for k in range(n)
    )
    return CandidateList(
        query_id=query_id,
        docs=docs,
        initial_rank=np.arange(1, n + 1),
        labels=labels,
        normalized_labels=normalize_labels(labels, max_grade),
        retrieval_scores=None if retrieval is None else np.asarray(retrieval, dtype=float),
    )


# one line per acceptance criterion, printed in the terminal summary
ACCEPTANCE: list[str] = []
