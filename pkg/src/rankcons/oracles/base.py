"""Oracle protocols and the shared pair memo."""

from __future__ import annotations

import threading
from typing import Callable, Protocol, runtime_checkable

from ..domain import CandidateList, PreferenceSet, ScoreVector, Verdict

PairOracle = Callable[[int, int], Verdict]


class OracleError(RuntimeError):
    """An oracle failed to produce a verdict for a specific pair."""

    def __init__(self, query_id: str, i: int, j: int, cause: BaseException | None = None):
        self.query_id = query_id
        self.i = i
        self.j = j
        msg = f"oracle failed on query {query_id!r}, pair ({i}, {j})"
        if cause is not None:
            msg += f": {cause}"
        super().__init__(msg)


class MissingPreference(LookupError):
    pass


@runtime_checkable
class PreferenceOracle(Protocol):
    def compare(self, cl: CandidateList, i: int, j: int) -> Verdict: ...


@runtime_checkable
class RelevanceOracle(Protocol):
    def relevance(self, cl: CandidateList) -> ScoreVector: ...


class PairMemo:
    """Memoizes verdicts per (query, unordered pair) in front of a backend oracle.

    ``preload`` preference sets are served without touching the backend; only
    cache misses count toward ``calls``. With ``backend=None`` a miss raises
    :class:`MissingPreference`.
    """

    def __init__(
        self,
        backend: PreferenceOracle | None,
        preload: dict[str, PreferenceSet] | None = None,
    ):
        self.backend = backend
        self._cache: dict[tuple[str, int, int], Verdict] = {}
        self._calls: dict[str, int] = {}
        self._lock = threading.Lock()
        for qid, ps in (preload or {}).items():
            for p in ps:
                self._cache[(qid, p.i, p.j)] = p.verdict

    def calls(self, query_id: str | None = None) -> int:
        if query_id is None:
            return sum(self._calls.values())
        return self._calls.get(query_id, 0)

    def compare(self, cl: CandidateList, i: int, j: int) -> Verdict:
        a, b = (i, j) if i < j else (j, i)
        key = (cl.query_id, a, b)
        with self._lock:
            hit = self._cache.get(key)
        if hit is None:
            if self.backend is None:
                raise MissingPreference(f"no cached verdict for query {cl.query_id!r} pair ({i}, {j})")
            try:
                v = self.backend.compare(cl, a, b)
            except Exception as exc:
                raise OracleError(cl.query_id, i, j, exc) from exc
            with self._lock:
                self._cache[key] = v
                self._calls[cl.query_id] = self._calls.get(cl.query_id, 0) + 1
            hit = v
        return hit if i < j else hit.swapped()

    def bind(self, cl: CandidateList) -> PairOracle:
        return lambda i, j: self.compare(cl, i, j)


def bind(oracle: PreferenceOracle, cl: CandidateList) -> PairOracle:
    """Fix the query so the oracle can be called as ``f(i, j)``."""

    def f(i: int, j: int) -> Verdict:
        try:
            return oracle.compare(cl, i, j)
        except OracleError:
            raise
        except Exception as exc:
            raise OracleError(cl.query_id, i, j, exc) from exc

    return f
