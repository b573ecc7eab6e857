"""Minimal L2 adjustment of relevance scores under pairwise order constraints.

Given base scores ``y`` and a set of pairs ``(i, j)`` meaning "i must score at
least as high as j", find ``delta`` minimizing ``sum(delta**2)`` such that
``y[i] + delta[i] >= y[j] + delta[j]`` for every pair. That is the Euclidean
projection of ``y`` onto a polyhedral cone, i.e. isotonic regression over the
partial order generated by the pairs.

Three routes to the same answer:

* :func:`solve_projection_total_order` - pool-adjacent-violators, exact, O(n),
  when the pairs pin down a single total order;
* :func:`solve_projection` - Dykstra cyclic projection for any acyclic pair
  set, finished by snapping to block means;
* :func:`brute_force_projection` - exhaustive enumeration for tiny n, used as
  a test oracle.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from .domain import PreferenceSet, Ranking, ScoreKind, ScoreVector, Verdict
from .prp import rank_by_scores


class CycleError(ValueError):
    """The constraint graph contains a directed cycle (contradictory inputs)."""

    def __init__(self, cycle: list[int]):
        self.cycle = cycle
        path = " -> ".join(str(c) for c in cycle)
        super().__init__(f"contradictory constraints form a cycle: {path}")


class NonConvergence(RuntimeError):
    pass


@dataclass(frozen=True)
class ConstraintSet:
    """Pairs ``(i, j)`` requiring adjusted score of i >= adjusted score of j."""

    query_id: str
    n_docs: int
    pairs: np.ndarray = field(default_factory=lambda: np.zeros((0, 2), dtype=np.int64))

    def __post_init__(self):
        pairs = np.array(self.pairs, dtype=np.int64).reshape(-1, 2)
        if pairs.size:
            if np.any(pairs[:, 0] == pairs[:, 1]):
                raise ValueError("constraint pairs a document with itself")
            if pairs.min() < 0 or pairs.max() >= self.n_docs:
                raise ValueError(f"constraint index out of range for n_docs={self.n_docs}")
        pairs.setflags(write=False)
        object.__setattr__(self, "pairs", pairs)

    def __len__(self) -> int:
        return len(self.pairs)

    def __iter__(self):
        return (tuple(int(x) for x in p) for p in self.pairs)

    def as_set(self) -> set[tuple[int, int]]:
        return set(self)


@dataclass(frozen=True)
class SolverConfig:
    feasibility_tol: float = 1e-9
    max_iters: int | None = None  # cycles; None means 100 * n * |cs|
    step_tol: float = 1e-14  # relative to the spread of the base scores
    polish: bool = True
    # solve sets with directed cycles (their members end up equal) instead of raising
    allow_cycles: bool = False


@dataclass(frozen=True)
class ConsolidationResult:
    delta: np.ndarray
    adjusted: ScoreVector
    objective: float
    iterations: int
    max_violation: float
    solver: str


def constraints_from_scores(s: ScoreVector | np.ndarray, query_id: str | None = None) -> ConstraintSet:
    """Every pair with a strictly higher score on the first member; ties give nothing."""
    if isinstance(s, ScoreVector):
        query_id = s.query_id if query_id is None else query_id
        values = s.values
    else:
        values = np.asarray(s, dtype=float)
    i, j = np.nonzero(values[:, None] > values[None, :])
    return ConstraintSet(query_id or "", len(values), np.column_stack([i, j]))


def constraints_from_preferences(prefs: PreferenceSet) -> ConstraintSet:
    """Direct verdicts only; inconsistent pairs are unconstrained, no transitive closure."""
    pairs = []
    for p in prefs:
        if p.verdict is Verdict.I_WINS:
            pairs.append((p.i, p.j))
        elif p.verdict is Verdict.J_WINS:
            pairs.append((p.j, p.i))
    return ConstraintSet(prefs.query_id, prefs.n_docs, pairs)


def chain_constraints(order: Ranking) -> ConstraintSet:
    idx = order.sorted_indices
    return ConstraintSet(order.query_id, len(idx), np.column_stack([idx[:-1], idx[1:]]))


def find_cycle(n: int, pairs) -> list[int] | None:
    """Return one directed cycle as a node list (first node repeated at the end), or None."""
    adj: list[list[int]] = [[] for _ in range(n)]
    for i, j in pairs:
        adj[int(i)].append(int(j))
    color = [0] * n  # 0 new, 1 on stack, 2 done
    parent = [-1] * n
    for root in range(n):
        if color[root]:
            continue
        stack = [(root, iter(adj[root]))]
        color[root] = 1
        while stack:
            node, it = stack[-1]
            nxt = next(it, None)
            if nxt is None:
                color[node] = 2
                stack.pop()
            elif color[nxt] == 0:
                color[nxt] = 1
                parent[nxt] = node
                stack.append((nxt, iter(adj[nxt])))
            elif color[nxt] == 1:
                cycle = [nxt]
                cur = node
                while cur != nxt:
                    cycle.append(cur)
                    cur = parent[cur]
                cycle.append(nxt)
                cycle.reverse()
                return cycle
    return None


def strong_components(cs: ConstraintSet) -> np.ndarray:
    """Component label per document; members of a directed cycle share a label."""
    n = cs.n_docs
    if len(cs) == 0:
        return np.arange(n)
    graph = csr_matrix((np.ones(len(cs)), (cs.pairs[:, 0], cs.pairs[:, 1])), shape=(n, n))
    return connected_components(graph, directed=True, connection="strong")[1]


def linear_extension(cs: ConstraintSet, prefer: Ranking | None = None) -> Ranking:
    """A total order compatible with ``cs``; free choices follow ``prefer``.

    Used as the tie-break when ranking adjusted scores, so exact ties created
    by pooling never put a document above one it is constrained to follow.
    Documents on a common cycle (which the projection sets equal) are kept
    together and ordered among themselves by ``prefer``.
    """
    n = cs.n_docs
    priority = prefer.rank_of if prefer is not None else np.arange(1, n + 1)
    comp = strong_components(cs)
    n_comp = int(comp.max()) + 1 if n else 0
    members: list[list[int]] = [[] for _ in range(n_comp)]
    for v in sorted(range(n), key=lambda v: priority[v]):
        members[comp[v]].append(v)
    indeg = np.zeros(n_comp, dtype=np.int64)
    adj: list[set[int]] = [set() for _ in range(n_comp)]
    for i, j in cs:
        a, b = comp[i], comp[j]
        if a != b and b not in adj[a]:
            adj[a].add(b)
            indeg[b] += 1
    heap = [(int(priority[members[c][0]]), c) for c in range(n_comp) if indeg[c] == 0]
    heapq.heapify(heap)
    order = []
    while heap:
        _, c = heapq.heappop(heap)
        order.extend(members[c])
        for d in adj[c]:
            indeg[d] -= 1
            if indeg[d] == 0:
                heapq.heappush(heap, (int(priority[members[d][0]]), d))
    return Ranking.from_order(cs.query_id, order)


def unique_total_order(cs: ConstraintSet) -> list[int] | None:
    """The topological order if it is the only one, else None.

    A unique topological order means the transitive closure of ``cs`` is a
    strict total order, so the feasible set equals that of the chain.
    """
    n = cs.n_docs
    indeg = np.zeros(n, dtype=np.int64)
    adj: list[list[int]] = [[] for _ in range(n)]
    for i, j in cs:
        adj[i].append(j)
        indeg[j] += 1
    ready = [v for v in range(n) if indeg[v] == 0]
    order = []
    while ready:
        if len(ready) > 1:
            return None
        v = ready.pop()
        order.append(v)
        for w in adj[v]:
            indeg[w] -= 1
            if indeg[w] == 0:
                ready.append(w)
    return order if len(order) == n else None


def pav_decreasing(y: np.ndarray, w: np.ndarray | None = None) -> np.ndarray:
    """Weighted least-squares fit of a non-increasing sequence (pool adjacent violators)."""
    y = np.asarray(y, dtype=float)
    n = len(y)
    w = np.ones(n) if w is None else np.asarray(w, dtype=float)
    # blocks as parallel stacks: weighted sum, weight, length
    sums: list[float] = []
    weights: list[float] = []
    lengths: list[int] = []
    for k in range(n):
        s, wt, ln = y[k] * w[k], w[k], 1
        while sums and sums[-1] / weights[-1] < s / wt:
            s += sums.pop()
            wt += weights.pop()
            ln += lengths.pop()
        sums.append(s)
        weights.append(wt)
        lengths.append(ln)
    return np.repeat([s / wt for s, wt in zip(sums, weights)], lengths)


def _result(base: np.ndarray, adjusted: np.ndarray, query_id: str, cs_pairs, iterations: int, solver: str):
    delta = adjusted - base
    if len(cs_pairs):
        cs_pairs = np.asarray(cs_pairs)
        viol = float(max(0.0, np.max(adjusted[cs_pairs[:, 1]] - adjusted[cs_pairs[:, 0]])))
    else:
        viol = 0.0
    return ConsolidationResult(
        delta=delta,
        adjusted=ScoreVector(query_id, ScoreKind.CONSOLIDATED, adjusted),
        objective=float(np.dot(delta, delta)),
        iterations=iterations,
        max_violation=viol,
        solver=solver,
    )


def _as_array(base) -> tuple[np.ndarray, str]:
    if isinstance(base, ScoreVector):
        return np.array(base.values, dtype=float), base.query_id
    return np.array(base, dtype=float), ""


def solve_projection_total_order(base: ScoreVector | np.ndarray, order: Ranking) -> ConsolidationResult:
    """Exact isotonic regression of ``base`` along ``order`` (best first)."""
    y, qid = _as_array(base)
    idx = order.sorted_indices
    fitted = np.empty_like(y)
    fitted[idx] = pav_decreasing(y[idx])
    pairs = np.column_stack([idx[:-1], idx[1:]])
    return _result(y, fitted, qid or order.query_id, pairs, 1, "pav")


class _UnionFind:
    def __init__(self, n):
        self.parent = list(range(n))

    def find(self, a):
        while self.parent[a] != a:
            self.parent[a] = self.parent[self.parent[a]]
            a = self.parent[a]
        return a

    def union(self, a, b):
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            self.parent[rb] = ra
            return True
        return False


def _block_means(y: np.ndarray, uf: _UnionFind) -> np.ndarray:
    roots = np.array([uf.find(k) for k in range(len(y))])
    sums = np.bincount(roots, weights=y, minlength=len(y))
    counts = np.bincount(roots, minlength=len(y))
    return sums[roots] / counts[roots]


def _polish(y: np.ndarray, z: np.ndarray, ci: np.ndarray, cj: np.ndarray, merge_tol: float):
    """Snap an approximate projection onto exact block means.

    The exact solution is constant on blocks, each equal to the mean of the
    base scores it covers; blocks are recovered as components of the
    constraints that are tight in ``z``.
    """
    uf = _UnionFind(len(y))
    tight = np.abs(z[ci] - z[cj]) <= merge_tol
    for a, b in zip(ci[tight], cj[tight]):
        uf.union(int(a), int(b))
    for _ in range(len(y)):
        v = _block_means(y, uf)
        bad = v[cj] > v[ci]
        if not bad.any():
            return v
        if np.max(v[cj] - v[ci]) > merge_tol:
            return None
        merged = False
        for a, b in zip(ci[bad], cj[bad]):
            merged |= uf.union(int(a), int(b))
        if not merged:
            return None
    return None


def solve_projection(
    base: ScoreVector | np.ndarray, cs: ConstraintSet, cfg: SolverConfig | None = None
) -> ConsolidationResult:
    """Project ``base`` onto {z : z_i >= z_j for (i, j) in cs}.

    Raises:
        CycleError: ``cs`` contains a directed cycle and ``cfg.allow_cycles`` is off.
        NonConvergence: the cycle cap was hit with constraints still violated
            by more than ``cfg.feasibility_tol``.
    """
    cfg = cfg or SolverConfig()
    y, qid = _as_array(base)
    qid = qid or cs.query_id
    if len(y) != cs.n_docs:
        raise ValueError(f"{len(y)} scores but constraint set covers {cs.n_docs} docs")
    if len(cs) == 0:
        return _result(y, y.copy(), qid, cs.pairs, 0, "dykstra")
    if not cfg.allow_cycles:
        cycle = find_cycle(cs.n_docs, cs.pairs)
        if cycle is not None:
            raise CycleError(cycle)

    ci = np.ascontiguousarray(cs.pairs[:, 0])
    cj = np.ascontiguousarray(cs.pairs[:, 1])
    scale = max(float(np.ptp(y)), 1e-300)
    max_cycles = cfg.max_iters if cfg.max_iters is not None else 100 * len(y) * len(cs)

    from ._kernels import dykstra_halfspaces

    z, _lam, cycles, max_viol, ok = dykstra_halfspaces(
        y, ci, cj, int(max_cycles), float(cfg.feasibility_tol), float(cfg.step_tol * scale)
    )
    if not ok:
        raise NonConvergence(
            f"query {qid!r}: {cycles} cycles, residual violation {max_viol:.3e} "
            f"> {cfg.feasibility_tol:.1e}"
        )
    if cfg.polish:
        snapped = _polish(y, z, ci, cj, 1e-8 * scale)
        if snapped is not None and np.max(np.abs(snapped - z)) <= 1e-6 * scale:
            z = snapped
    return _result(y, z, qid, cs.pairs, int(cycles), "dykstra")


def consolidate(
    base: ScoreVector | np.ndarray, cs: ConstraintSet, cfg: SolverConfig | None = None
) -> ConsolidationResult:
    """Solve with PAV when ``cs`` implies a total order, otherwise with Dykstra."""
    y, qid = _as_array(base)
    if len(cs) >= len(y) - 1 and len(y) > 1:
        order = unique_total_order(cs)
        if order is not None:
            res = solve_projection_total_order(y, Ranking.from_order(qid or cs.query_id, order))
            return _result(y, res.adjusted.values.copy(), qid or cs.query_id, cs.pairs, 1, "pav")
    return solve_projection(base, cs, cfg)


def consolidated_ranking(
    adjusted: ScoreVector | np.ndarray, cs: ConstraintSet, initial: Ranking
) -> Ranking:
    """Rank adjusted scores; ties follow a constraint-respecting order, then ``initial``."""
    return rank_by_scores(adjusted, linear_extension(cs, initial))


@lru_cache(maxsize=None)
def _set_partitions(n: int) -> np.ndarray:
    """All set partitions of range(n) as restricted-growth label rows."""
    rows = []

    def grow(prefix, top):
        if len(prefix) == n:
            rows.append(prefix)
            return
        for b in range(top + 2):
            grow(prefix + (b,), max(top, b))

    if n:
        grow((0,), 0)
    return np.array(rows, dtype=np.int64).reshape(-1, n)


def brute_force_projection(base, cs: ConstraintSet, tol: float = 1e-12) -> np.ndarray:
    """Exhaustive solver for n <= 8.

    The optimum is constant on blocks of some partition of the documents,
    each block at the mean of its base scores. Enumerate every partition
    (a superset of the candidates produced by choosing any subset of
    constraints to hold with equality), keep the feasible candidates, and
    return the one with the smallest squared perturbation.
    """
    y = np.asarray(base.values if isinstance(base, ScoreVector) else base, dtype=float)
    n = len(y)
    if n > 8:
        raise ValueError(f"brute force is limited to n <= 8, got {n}")
    if n == 0 or len(cs) == 0:
        return y.copy()
    labels = _set_partitions(n)
    onehot = labels[:, :, None] == np.arange(n)[None, None, :]
    sums = np.einsum("bnk,n->bk", onehot, y)
    counts = onehot.sum(axis=1)
    means = np.divide(sums, counts, out=np.zeros_like(sums), where=counts > 0)
    cand = np.take_along_axis(means, labels, axis=1)
    ci, cj = cs.pairs[:, 0], cs.pairs[:, 1]
    feasible = np.all(cand[:, ci] >= cand[:, cj] - tol, axis=1)
    obj = np.sum((cand - y) ** 2, axis=1)
    obj[~feasible] = np.inf
    return cand[int(np.argmin(obj))].copy()

