"""Reading TREC run/qrels files and persisting experiments as JSON."""

from __future__ import annotations

import gzip
import io
import json
import os
import tempfile
import warnings
from contextlib import contextmanager
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

from .domain import (
    CandidateList,
    Dataset,
    Document,
    Preference,
    PreferenceSet,
    Ranking,
    ScoreKind,
    ScoreVector,
    Verdict,
    normalize_labels,
)

FORMAT = "rankcons/experiment"
VERSION = 1


class FormatError(ValueError):
    def __init__(self, path, lineno: int | None, message: str):
        self.path = str(path)
        self.lineno = lineno
        where = f"{path}:{lineno}" if lineno is not None else str(path)
        super().__init__(f"{where}: {message}")


@contextmanager
def open_text(path, mode: str = "r"):
    """Open a text file, transparently gzip-compressed when the name ends in .gz."""
    path = Path(path)
    if path.suffix == ".gz":
        with gzip.open(path, mode + "t", encoding="utf-8") as fh:
            yield fh
    else:
        with open(path, mode, encoding="utf-8") as fh:
            yield fh


def load_qrels(path) -> dict[str, dict[str, int]]:
    """Parse ``qid iter docid grade`` lines into ``{qid: {docid: grade}}``.

    Negative grades are clamped to 0 and duplicated (qid, docid) lines keep the
    last value; both emit a warning.
    """
    qrels: dict[str, dict[str, int]] = {}
    with open_text(path) as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            parts = line.split()
            if len(parts) != 4:
                raise FormatError(path, lineno, f"expected 4 fields, got {len(parts)}")
            qid, _, docid, grade_s = parts
            try:
                grade = int(grade_s)
            except ValueError:
                raise FormatError(path, lineno, f"grade {grade_s!r} is not an integer") from None
            if grade < 0:
                warnings.warn(f"{path}:{lineno}: negative grade {grade} clamped to 0")
                grade = 0
            per_q = qrels.setdefault(qid, {})
            if docid in per_q:
                warnings.warn(f"{path}:{lineno}: duplicate judgment for ({qid}, {docid}); last wins")
            per_q[docid] = grade
    return qrels


def load_run(
    path,
    top_n: int = 100,
    qrels: dict[str, dict[str, int]] | None = None,
    max_grade: int | None = None,
) -> Dataset:
    """Read a TREC run (``qid Q0 docid rank score tag``) into candidate lists.

    Keeps the ``top_n`` best-ranked docs per query and re-densifies their
    ranks to 1..n by descending score. With ``qrels``, unjudged docs get
    label 0 and ``max_grade`` defaults to the largest grade in the qrels.
    """
    rows: dict[str, list[tuple[int, float, str, int]]] = {}
    with open_text(path) as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            parts = line.split()
            if len(parts) != 6:
                raise FormatError(path, lineno, f"expected 6 fields, got {len(parts)}")
            qid, _, docid, rank_s, score_s, _tag = parts
            try:
                rank = int(rank_s)
                score = float(score_s)
            except ValueError:
                raise FormatError(path, lineno, "rank must be an integer and score a number") from None
            if not np.isfinite(score):
                raise FormatError(path, lineno, f"non-finite score {score_s!r}")
            rows.setdefault(qid, []).append((rank, score, docid, lineno))

    if qrels is not None and max_grade is None:
        max_grade = max((g for per_q in qrels.values() for g in per_q.values()), default=1)
        max_grade = max(max_grade, 1)

    lists = []
    for qid in sorted(rows):
        entries = sorted(rows[qid], key=lambda r: (r[0], -r[1]))
        kept, seen = [], set()
        for rank, score, docid, lineno in entries:
            if docid in seen:
                warnings.warn(f"{path}:{lineno}: doc {docid!r} repeated for query {qid}; keeping best rank")
                continue
            seen.add(docid)
            kept.append((rank, score, docid))
            if len(kept) == top_n:
                break
        kept.sort(key=lambda r: (-r[1], r[0]))
        ids = [r[2] for r in kept]
        scores = np.array([r[1] for r in kept])
        labels = norm = None
        if qrels is not None:
            judged = qrels.get(qid, {})
            labels = np.array([judged.get(d, 0) for d in ids], dtype=np.int64)
            norm = normalize_labels(labels, max_grade)
        lists.append(
            CandidateList(
                query_id=qid,
                docs=tuple(Document(d) for d in ids),
                initial_rank=np.arange(1, len(ids) + 1),
                labels=labels,
                normalized_labels=norm,
                retrieval_scores=scores,
            )
        )
    return Dataset(tuple(lists), max_grade=max_grade, name=Path(path).name)


def write_run(lists, path, tag: str = "rankcons") -> None:
    with open_text(path, "w") as fh:
        for cl in lists:
            scores = cl.retrieval_scores
            for idx in cl.initial_ranking().sorted_indices:
                score = float(scores[idx]) if scores is not None else -float(cl.initial_rank[idx])
                rank = int(cl.initial_rank[idx])
                fh.write(f"{cl.query_id} Q0 {cl.docs[idx].doc_id} {rank} {score!r} {tag}\n")


def write_qrels(lists, path) -> None:
    with open_text(path, "w") as fh:
        for cl in lists:
            if cl.labels is None:
                continue
            for d, y in zip(cl.docs, cl.labels):
                fh.write(f"{cl.query_id} 0 {d.doc_id} {int(y)}\n")


def dataset_stats(lists) -> dict:
    """Query count, label alphabets and mean list length."""
    lists = list(lists)
    labels = sorted({int(y) for cl in lists if cl.labels is not None for y in cl.labels})
    norm = sorted(
        {float(y) for cl in lists if cl.normalized_labels is not None for y in cl.normalized_labels}
    )
    return {
        "n_queries": len(lists),
        "labels": labels,
        "normalized_labels": norm,
        "normalized_labels_fraction": [str(Fraction(y).limit_denominator(1000)) for y in norm],
        "mean_list_length": float(np.mean([len(cl) for cl in lists])) if lists else 0.0,
    }


@dataclass
class Experiment:
    """A dataset plus everything computed on it, keyed by method name then query id."""

    dataset: Dataset
    scores: dict[str, dict[str, ScoreVector]] = field(default_factory=dict)
    rankings: dict[str, dict[str, Ranking]] = field(default_factory=dict)
    preferences: dict[str, dict[str, PreferenceSet]] = field(default_factory=dict)
    stats: dict[str, dict[str, dict]] = field(default_factory=dict)
    config: dict = field(default_factory=dict)
    failures: dict[str, str] = field(default_factory=dict)


def _list_to_json(cl: CandidateList) -> dict:
    def arr(a):
        return None if a is None else a.tolist()

    return {
        "query_id": cl.query_id,
        "query_text": cl.query_text,
        "docs": [{"doc_id": d.doc_id, "text": d.text} for d in cl.docs],
        "initial_rank": arr(cl.initial_rank),
        "labels": arr(cl.labels),
        "normalized_labels": arr(cl.normalized_labels),
        "retrieval_scores": arr(cl.retrieval_scores),
    }


def _list_from_json(d: dict) -> CandidateList:
    return CandidateList(
        query_id=d["query_id"],
        docs=tuple(Document(x["doc_id"], x.get("text")) for x in d["docs"]),
        initial_rank=d["initial_rank"],
        labels=d.get("labels"),
        normalized_labels=d.get("normalized_labels"),
        query_text=d.get("query_text"),
        retrieval_scores=d.get("retrieval_scores"),
    )


def experiment_to_json(exp: Experiment) -> dict:
    return {
        "format": FORMAT,
        "version": VERSION,
        "name": exp.dataset.name,
        "max_grade": exp.dataset.max_grade,
        "config": exp.config,
        "queries": [_list_to_json(cl) for cl in exp.dataset],
        "scores": {
            m: {q: {"kind": sv.kind.value, "values": sv.values.tolist()} for q, sv in per.items()}
            for m, per in exp.scores.items()
        },
        "rankings": {m: {q: r.rank_of.tolist() for q, r in per.items()} for m, per in exp.rankings.items()},
        "preferences": {
            m: {
                q: {"n_docs": ps.n_docs, "pairs": [[p.i, p.j, p.verdict.value] for p in ps]}
                for q, ps in per.items()
            }
            for m, per in exp.preferences.items()
        },
        "stats": exp.stats,
        "failures": exp.failures,
    }


def experiment_from_json(doc: dict) -> Experiment:
    if doc.get("format") != FORMAT:
        raise FormatError("<json>", None, f"not a {FORMAT} document")
    dataset = Dataset(
        tuple(_list_from_json(q) for q in doc["queries"]),
        max_grade=doc.get("max_grade"),
        name=doc.get("name", ""),
    )
    scores = {
        m: {q: ScoreVector(q, ScoreKind(v["kind"]), v["values"]) for q, v in per.items()}
        for m, per in doc.get("scores", {}).items()
    }
    rankings = {m: {q: Ranking(q, r) for q, r in per.items()} for m, per in doc.get("rankings", {}).items()}
    prefs = {
        m: {
            q: PreferenceSet.from_preferences(q, v["n_docs"], (Preference(i, j, Verdict(x)) for i, j, x in v["pairs"]))
            for q, v in per.items()
        }
        for m, per in doc.get("preferences", {}).items()
    }
    return Experiment(
        dataset=dataset,
        scores=scores,
        rankings=rankings,
        preferences=prefs,
        stats=doc.get("stats", {}),
        config=doc.get("config", {}),
        failures=doc.get("failures", {}),
    )


def atomic_write_text(path, text: str) -> None:
    """Write via a temp file in the same directory, then rename over ``path``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as raw:
            data = text.encode("utf-8")
            if path.suffix == ".gz":
                buf = io.BytesIO()
                with gzip.GzipFile(fileobj=buf, mode="wb", mtime=0) as gz:
                    gz.write(data)
                data = buf.getvalue()
            raw.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def save_experiment(exp: Experiment, path) -> None:
    atomic_write_text(path, json.dumps(experiment_to_json(exp), indent=1, sort_keys=False))


def load_experiment(path) -> Experiment:
    with open_text(path) as fh:
        doc = json.load(fh)
    try:
        return experiment_from_json(doc)
    except FormatError as exc:
        raise FormatError(path, None, str(exc).split(": ", 1)[-1]) from None


def save_dataset(dataset: Dataset, path, config: dict | None = None) -> None:
    save_experiment(Experiment(dataset, config=config or {}), path)


def load_dataset(path) -> Dataset:
    return load_experiment(path).dataset
