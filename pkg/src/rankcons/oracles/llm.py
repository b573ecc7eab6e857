"""Minimal HTTP client for an LLM scoring endpoint.

Wire format, one POST per prompt::

    request:  {"prompt": str, "mode": "score" | "generate", "continuations": [str]}
    response: {"scores": [float]}   # log-probability of each continuation
          or  {"text": str}         # generated text

A backend that cannot score continuations may answer a ``score`` request
with ``{"text": ...}`` or HTTP 400/404/422/501; the client then falls back to
``generate``.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
import re
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import httpx
import numpy as np

from ..data_io import atomic_write_text
from ..domain import CandidateList, ScoreKind, ScoreVector, Verdict

ENV_ENDPOINT = "RC_LLM_ENDPOINT"
ENV_TIMEOUT = "RC_LLM_TIMEOUT_MS"

_UNSUPPORTED_STATUS = {400, 404, 422, 501}


class LLMConfigError(ValueError):
    pass


class LLMError(RuntimeError):
    pass


def load_prompt(name: str) -> str:
    return resources.files(__package__).joinpath("prompts", f"{name}.txt").read_text(encoding="utf-8")


RELEVANCE_TEMPLATE = load_prompt("relevance")
PREFERENCE_TEMPLATE = load_prompt("preference")


def relevance_prompt(query: str, passage: str) -> str:
    return RELEVANCE_TEMPLATE.replace("{passage}", passage).replace("{query}", query)


def preference_prompt(query: str, passage_1: str, passage_2: str) -> str:
    # fill passages last so braces inside user text are never re-substituted
    out = PREFERENCE_TEMPLATE.replace("{query}", "\x00q\x00")
    out = out.replace("{passage_1}", "\x00a\x00").replace("{passage_2}", "\x00b\x00")
    return out.replace("\x00q\x00", query).replace("\x00a\x00", passage_1).replace("\x00b\x00", passage_2)


@dataclass(frozen=True)
class LLMClientConfig:
    endpoint: str
    timeout_ms: int = 30_000
    attempts: int = 3
    backoff_s: float = 0.5
    max_in_flight: int = 4
    cache_dir: str | None = None

    @classmethod
    def from_env(cls, **overrides) -> "LLMClientConfig":
        endpoint = overrides.pop("endpoint", None) or os.environ.get(ENV_ENDPOINT)
        if not endpoint:
            raise LLMConfigError(f"no LLM endpoint configured; set {ENV_ENDPOINT}")
        if "timeout_ms" not in overrides and os.environ.get(ENV_TIMEOUT):
            overrides["timeout_ms"] = int(os.environ[ENV_TIMEOUT])
        return cls(endpoint=endpoint, **overrides)


class LLMClient:
    """Thread-safe client with retries, an in-flight cap and an optional disk cache."""

    def __init__(self, cfg: LLMClientConfig, transport: httpx.BaseTransport | None = None):
        self.cfg = cfg
        self._http = httpx.Client(timeout=cfg.timeout_ms / 1000.0, transport=transport)
        self._slots = threading.BoundedSemaphore(cfg.max_in_flight)
        self.requests_sent = 0
        self._count_lock = threading.Lock()

    def close(self) -> None:
        self._http.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def _cache_path(self, payload: dict) -> Path | None:
        if not self.cfg.cache_dir:
            return None
        key = hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()
        return Path(self.cfg.cache_dir) / f"{key}.json"

    def request(self, payload: dict) -> dict:
        """POST ``payload``; transport errors and 5xx/429 are retried with backoff."""
        cache = self._cache_path(payload)
        if cache is not None and cache.exists():
            return json.loads(cache.read_text(encoding="utf-8"))

        last: Exception | None = None
        for attempt in range(self.cfg.attempts):
            if attempt:
                time.sleep(self.cfg.backoff_s * 2 ** (attempt - 1))
            try:
                with self._slots:
                    with self._count_lock:
                        self.requests_sent += 1
                    resp = self._http.post(self.cfg.endpoint, json=payload)
            except httpx.TransportError as exc:
                last = exc
                continue
            if resp.status_code in _UNSUPPORTED_STATUS:
                return {"unsupported": True, "status": resp.status_code}
            if resp.status_code == 429 or resp.status_code >= 500:
                last = LLMError(f"HTTP {resp.status_code}")
                continue
            if resp.status_code >= 400:
                raise LLMError(f"HTTP {resp.status_code}: {resp.text[:200]}")
            try:
                body = resp.json()
            except ValueError as exc:
                raise LLMError(f"endpoint returned non-JSON body: {resp.text[:200]!r}") from exc
            if cache is not None:
                atomic_write_text(cache, json.dumps(body))
            return body
        raise LLMError(f"request failed after {self.cfg.attempts} attempts: {last}")

    def score(self, prompt: str, continuations: list[str]) -> list[float] | None:
        """Log-probabilities of ``continuations``, or None if the backend cannot score."""
        body = self.request({"prompt": prompt, "mode": "score", "continuations": continuations})
        scores = body.get("scores")
        if scores is None:
            return None
        if len(scores) != len(continuations):
            raise LLMError(f"expected {len(continuations)} scores, got {len(scores)}")
        return [float(s) for s in scores]

    def generate(self, prompt: str) -> str:
        body = self.request({"prompt": prompt, "mode": "generate", "continuations": []})
        if "text" not in body:
            raise LLMError(f"generate response has no text: {body!r}")
        return str(body["text"])


def _require_text(**texts: str | None) -> None:
    for name, t in texts.items():
        if not t or not t.strip():
            raise ValueError(f"{name} is empty")


def llm_relevance(client: LLMClient, query_text: str, passage_text: str) -> float:
    """P(Yes) / (P(Yes) + P(No)); 1.0 / 0.0 from a generated Yes / No if scores are unavailable."""
    _require_text(query_text=query_text, passage_text=passage_text)
    prompt = relevance_prompt(query_text, passage_text)
    scores = client.score(prompt, ["Yes", "No"])
    if scores is not None:
        log_yes, log_no = scores
        if math.isinf(log_yes) and math.isinf(log_no):
            raise LLMError("both continuations have zero probability")
        return 1.0 / (1.0 + math.exp(log_no - log_yes)) if log_no - log_yes < 700 else 0.0
    text = client.generate(prompt).strip().lower()
    if text.startswith("yes"):
        return 1.0
    if text.startswith("no"):
        return 0.0
    raise LLMError(f"cannot parse relevance answer {text!r}")


_PASSAGE_RE = re.compile(r"passage\s*([ab])\b", re.IGNORECASE)


def _pick_passage(client: LLMClient, prompt: str) -> str | None:
    scores = client.score(prompt, ["Passage A", "Passage B"])
    if scores is not None:
        if scores[0] > scores[1]:
            return "A"
        if scores[1] > scores[0]:
            return "B"
        return None
    text = client.generate(prompt)
    m = _PASSAGE_RE.search(text)
    if m is None:
        raise LLMError(f"cannot parse preference answer {text!r}")
    return m.group(1).upper()


def llm_preference(client: LLMClient, query_text: str, passage_a: str, passage_b: str) -> Verdict:
    """Ask twice with the passages swapped; only an answer stable under the swap counts."""
    _require_text(query_text=query_text, passage_a=passage_a, passage_b=passage_b)
    first = _pick_passage(client, preference_prompt(query_text, passage_a, passage_b))
    second = _pick_passage(client, preference_prompt(query_text, passage_b, passage_a))
    choice_1 = {"A": "a", "B": "b"}.get(first)
    choice_2 = {"A": "b", "B": "a"}.get(second)
    if choice_1 is not None and choice_1 == choice_2:
        return Verdict.I_WINS if choice_1 == "a" else Verdict.J_WINS
    return Verdict.INCONSISTENT


class LLMOracle:
    """Relevance and preference oracle backed by :class:`LLMClient`."""

    def __init__(self, client: LLMClient, max_workers: int | None = None):
        self.client = client
        self.max_workers = max_workers or client.cfg.max_in_flight

    def _query(self, cl: CandidateList) -> str:
        if not cl.query_text:
            raise ValueError(f"query {cl.query_id!r} has no text")
        return cl.query_text

    def relevance(self, cl: CandidateList) -> ScoreVector:
        query = self._query(cl)
        with ThreadPoolExecutor(self.max_workers) as pool:
            values = list(pool.map(lambda d: llm_relevance(self.client, query, d.text or ""), cl.docs))
        return ScoreVector(cl.query_id, ScoreKind.RELEVANCE, np.array(values))

    def compare(self, cl: CandidateList, i: int, j: int) -> Verdict:
        return llm_preference(self.client, self._query(cl), cl.docs[i].text or "", cl.docs[j].text or "")
