"""Oracle answers replayed from a JSON release file.

File layout (unknown keys are ignored everywhere)::

    {
      "dataset": "trec-dl2019",            # optional
      "max_grade": 3,                      # optional, else max label seen
      "queries": [{
        "query_id": "1037798",
        "query": "who is robert gray",     # optional
        "docs": [{
          "doc_id": "7134595",
          "text": "...",                   # optional
          "label": 0,                      # optional
          "retrieval_rank": 1,             # optional, else file order
          "retrieval_score": 17.6,         # optional
          "relevance_score": 0.12,         # optional, P(Yes)/(P(Yes)+P(No))
          "relevance_prompt": "...",       # optional
          "relevance_generation": "No"     # optional
        }],
        "pairs": [{                        # optional
          "doc_i": "7134595", "doc_j": "8412684",
          "verdict": "i" | "j" | "inconsistent",
          "prompts": ["...", "..."],       # optional, both orders
          "generations": ["Passage A", "Passage B"]   # optional
        }]
      }]
    }
"""

from __future__ import annotations

import json
from pathlib import Path

import jsonschema
import numpy as np

from ..data_io import open_text
from ..domain import (
    CandidateList,
    Dataset,
    Document,
    Preference,
    PreferenceSet,
    ScoreKind,
    ScoreVector,
    Verdict,
    normalize_labels,
)
from .base import MissingPreference, PairMemo

_DOC = {
    "type": "object",
    "required": ["doc_id"],
    "properties": {
        "doc_id": {"type": ["string", "integer"]},
        "text": {"type": ["string", "null"]},
        "label": {"type": ["integer", "null"], "minimum": 0},
        "retrieval_rank": {"type": ["integer", "null"], "minimum": 1},
        "retrieval_score": {"type": ["number", "null"]},
        "relevance_score": {"type": ["number", "null"], "minimum": 0, "maximum": 1},
    },
}

_PAIR = {
    "type": "object",
    "required": ["doc_i", "doc_j", "verdict"],
    "properties": {
        "doc_i": {"type": ["string", "integer"]},
        "doc_j": {"type": ["string", "integer"]},
        "verdict": {"enum": ["i", "j", "inconsistent"]},
        "prompts": {"type": "array", "items": {"type": "string"}},
        "generations": {"type": "array", "items": {"type": "string"}},
    },
}

CACHE_SCHEMA = {
    "type": "object",
    "required": ["queries"],
    "properties": {
        "max_grade": {"type": "integer", "minimum": 1},
        "queries": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["query_id", "docs"],
                "properties": {
                    "query_id": {"type": ["string", "integer"]},
                    "query": {"type": ["string", "null"]},
                    "docs": {"type": "array", "items": _DOC},
                    "pairs": {"type": "array", "items": _PAIR},
                },
            },
        },
    },
}


class CacheSchemaError(ValueError):
    def __init__(self, path: str, message: str):
        self.path = path
        super().__init__(f"{path}: {message}")


def _check(doc: dict) -> None:
    err = jsonschema.exceptions.best_match(jsonschema.Draft7Validator(CACHE_SCHEMA).iter_errors(doc))
    if err is not None:
        raise CacheSchemaError(err.json_path, err.message)


def parse_cached(doc: dict) -> tuple[Dataset, dict[str, ScoreVector], dict[str, PreferenceSet]]:
    _check(doc)
    queries = doc["queries"]
    max_grade = doc.get("max_grade")
    if max_grade is None:
        seen = [d["label"] for q in queries for d in q["docs"] if d.get("label") is not None]
        max_grade = max(max(seen, default=1), 1)

    lists, relevance, prefs = [], {}, {}
    for qn, q in enumerate(queries):
        qid = str(q["query_id"])
        docs = q["docs"]
        ids = [str(d["doc_id"]) for d in docs]
        index = {d: k for k, d in enumerate(ids)}
        if len(index) != len(ids):
            raise CacheSchemaError(f"$.queries[{qn}].docs", "duplicate doc_id")

        labels = [d.get("label") for d in docs]
        has_labels = bool(docs) and all(l is not None for l in labels)
        ranks = [d.get("retrieval_rank") for d in docs]
        if all(r is not None for r in ranks) and sorted(ranks) == list(range(1, len(docs) + 1)):
            initial = np.array(ranks)
        else:
            initial = np.arange(1, len(docs) + 1)
        scores = [d.get("retrieval_score") for d in docs]

        lists.append(
            CandidateList(
                query_id=qid,
                docs=tuple(Document(i, d.get("text")) for i, d in zip(ids, docs)),
                initial_rank=initial,
                labels=np.array(labels, dtype=np.int64) if has_labels else None,
                normalized_labels=normalize_labels(labels, max_grade) if has_labels else None,
                query_text=q.get("query"),
                retrieval_scores=(
                    np.array(scores, dtype=float) if docs and all(s is not None for s in scores) else None
                ),
            )
        )

        rel = [d.get("relevance_score") for d in docs]
        if docs and all(r is not None for r in rel):
            relevance[qid] = ScoreVector(qid, ScoreKind.RELEVANCE, rel)

        plist = []
        seen_pairs = set()
        for pn, p in enumerate(q.get("pairs") or []):
            where = f"$.queries[{qn}].pairs[{pn}]"
            a, b = str(p["doc_i"]), str(p["doc_j"])
            if a not in index or b not in index:
                raise CacheSchemaError(where, f"unknown doc id in pair ({a!r}, {b!r})")
            if a == b:
                raise CacheSchemaError(where, "pair compares a document with itself")
            key = frozenset((a, b))
            if key in seen_pairs:
                raise CacheSchemaError(where, f"duplicate pair ({a!r}, {b!r})")
            seen_pairs.add(key)
            plist.append(Preference(index[a], index[b], Verdict(p["verdict"])))
        if plist:
            prefs[qid] = PreferenceSet.from_preferences(qid, len(docs), plist)

    return Dataset(tuple(lists), max_grade=max_grade, name=str(doc.get("dataset", ""))), relevance, prefs


def cached_oracle_load(path) -> tuple[Dataset, dict[str, ScoreVector], dict[str, PreferenceSet]]:
    """Load a release file; raises :class:`CacheSchemaError` naming the JSON path."""
    with open_text(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise CacheSchemaError("$", f"invalid JSON: {exc}") from exc
    return parse_cached(doc)


def dump_cached(
    dataset: Dataset,
    relevance: dict[str, ScoreVector] | None = None,
    prefs: dict[str, PreferenceSet] | None = None,
) -> dict:
    """Inverse of :func:`parse_cached` for the fields this package tracks."""
    relevance = relevance or {}
    prefs = prefs or {}
    queries = []
    for cl in dataset:
        docs = []
        for k, d in enumerate(cl.docs):
            rec = {"doc_id": d.doc_id, "retrieval_rank": int(cl.initial_rank[k])}
            if d.text is not None:
                rec["text"] = d.text
            if cl.labels is not None:
                rec["label"] = int(cl.labels[k])
            if cl.retrieval_scores is not None:
                rec["retrieval_score"] = float(cl.retrieval_scores[k])
            if cl.query_id in relevance:
                rec["relevance_score"] = float(relevance[cl.query_id].values[k])
            docs.append(rec)
        q = {"query_id": cl.query_id, "docs": docs}
        if cl.query_text is not None:
            q["query"] = cl.query_text
        if cl.query_id in prefs:
            q["pairs"] = [
                {"doc_i": cl.docs[p.i].doc_id, "doc_j": cl.docs[p.j].doc_id, "verdict": p.verdict.value}
                for p in prefs[cl.query_id]
            ]
        queries.append(q)
    out = {"queries": queries}
    if dataset.max_grade is not None:
        out["max_grade"] = dataset.max_grade
    if dataset.name:
        out["dataset"] = dataset.name
    return out


class CachedOracle:
    """Serves stored verdicts and relevance scores; never calls a model."""

    def __init__(self, relevance: dict[str, ScoreVector], prefs: dict[str, PreferenceSet]):
        self._relevance = relevance
        self.preferences = prefs
        self._memo = PairMemo(None, preload=prefs)

    @classmethod
    def from_file(cls, path: str | Path) -> tuple[Dataset, "CachedOracle"]:
        dataset, rel, prefs = cached_oracle_load(path)
        return dataset, cls(rel, prefs)

    def relevance(self, cl: CandidateList) -> ScoreVector:
        try:
            return self._relevance[cl.query_id]
        except KeyError:
            raise MissingPreference(f"no cached relevance scores for query {cl.query_id!r}") from None

    def compare(self, cl: CandidateList, i: int, j: int) -> Verdict:
        return self._memo.compare(cl, i, j)
