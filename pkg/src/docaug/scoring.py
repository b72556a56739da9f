"""Entailment scoring: four-way logit fusion and pluggable backends.

The generative NLI checkpoint decides "Entailment" vs "No entailment" by
generating one of two sequences; the interesting logits are those of the
four decoder subsequences "_0", "_</s>", "10", "1</s>". Fusion takes a
softmax over the four, reads P(no entailment) from "_0" and
P(entailment) from "1</s>", and subtracts the former from the latter.

Backends either return raw four-logit vectors (fused here, client-side)
or precomputed probability pairs, which are consumed as-is.
"""
from __future__ import annotations

import logging
import re
import time
from dataclasses import dataclass
from typing import Protocol, Sequence, Union

import numpy as np
import requests

from .errors import BackendError, BackendProtocolError

logger = logging.getLogger(__name__)

SEQUENCE_LABELS = ("_0", "_</s>", "10", "1</s>")


@dataclass(frozen=True)
class RawNliLogits:
    """Logits of the four decoder subsequences, in wire order."""

    no_entail: float  # "_0"
    cross_a: float  # "_</s>"
    cross_b: float  # "10"
    entail: float  # "1</s>"

    def as_array(self) -> np.ndarray:
        return np.array(
            [self.no_entail, self.cross_a, self.cross_b, self.entail], dtype=np.float64
        )


@dataclass(frozen=True)
class EntailmentScore:
    p_entail: float
    p_no_entail: float
    fused: float  # p_entail - p_no_entail, in [-1, 1]

    @classmethod
    def from_probs(cls, p_entail: float, p_no_entail: float) -> "EntailmentScore":
        if not (0.0 <= p_entail <= 1.0 and 0.0 <= p_no_entail <= 1.0):
            raise BackendProtocolError(
                f"probabilities out of range: ({p_entail}, {p_no_entail})"
            )
        if p_entail + p_no_entail > 1.0 + 1e-9:
            raise BackendProtocolError(
                f"probabilities sum above 1: ({p_entail}, {p_no_entail})"
            )
        return cls(p_entail, p_no_entail, p_entail - p_no_entail)


def fuse_scores(logits: RawNliLogits) -> EntailmentScore:
    """Softmax the four logits and fuse P(entail) - P(no entail)."""
    x = logits.as_array()
    if not np.all(np.isfinite(x)):
        raise ValueError(f"logits must be finite, got {x.tolist()}")
    e = np.exp(x - np.max(x))
    p = e / e.sum()
    return EntailmentScore(float(p[3]), float(p[0]), float(p[3] - p[0]))


@dataclass(frozen=True)
class ScoreRequest:
    """One premise/hypothesis pair to score.

    `exclude_terms` carries the entity surfaces appearing in both sides;
    only the lexical mock backend uses it (the wire format sends just
    the two sentences).
    """

    premise: str
    hypothesis: str
    exclude_terms: tuple[str, ...] = ()


BackendResult = Union[RawNliLogits, tuple[float, float]]  # or (p_entail, p_no_entail)


class NliBackend(Protocol):
    def score_many(self, requests_: Sequence[ScoreRequest]) -> list[BackendResult]:
        ...


@dataclass(frozen=True)
class ScoredPair:
    score: EntailmentScore | None
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.score is not None


def _to_score(result: BackendResult) -> EntailmentScore:
    if isinstance(result, RawNliLogits):
        return fuse_scores(result)
    p_entail, p_no_entail = result
    return EntailmentScore.from_probs(float(p_entail), float(p_no_entail))


def _coerce(pair: ScoreRequest | tuple) -> ScoreRequest:
    if isinstance(pair, ScoreRequest):
        return pair
    premise, hypothesis = pair
    return ScoreRequest(premise, hypothesis)


class ScorerGateway:
    """Batches pairs through a backend with retries and failure isolation.

    A failed batch is retried whole, then split into single pairs so one
    poisoned pair cannot take down its batch mates. Failed pairs come
    back as markers, never exceptions. Safe for concurrent use.
    """

    def __init__(
        self,
        backend: NliBackend,
        batch_size: int = 32,
        retries: int = 2,
        backoff: float = 0.1,
    ):
        if batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        self.backend = backend
        self.batch_size = batch_size
        self.retries = retries
        self.backoff = backoff

    def _call(self, chunk: Sequence[ScoreRequest]) -> list[BackendResult]:
        last: Exception | None = None
        for attempt in range(self.retries + 1):
            try:
                results = self.backend.score_many(chunk)
                if len(results) != len(chunk):
                    raise BackendProtocolError(
                        f"backend returned {len(results)} results for "
                        f"{len(chunk)} pairs"
                    )
                return results
            except BackendError as exc:
                last = exc
                if attempt < self.retries:
                    time.sleep(self.backoff * (2**attempt))
        assert last is not None
        raise last

    def score(self, pairs: Sequence[ScoreRequest | tuple]) -> list[ScoredPair]:
        reqs = [_coerce(p) for p in pairs]
        out: list[ScoredPair] = []
        for start in range(0, len(reqs), self.batch_size):
            chunk = reqs[start : start + self.batch_size]
            try:
                results = self._call(chunk)
            except BackendError as exc:
                if len(chunk) == 1:
                    logger.warning("scoring failed for one pair: %s", exc)
                    out.append(ScoredPair(None, str(exc)))
                    continue
                # isolate the failing pair(s)
                for req in chunk:
                    try:
                        (single,) = self._call([req])
                        out.append(ScoredPair(_to_score(single)))
                    except BackendError as single_exc:
                        logger.warning("scoring failed for one pair: %s", single_exc)
                        out.append(ScoredPair(None, str(single_exc)))
                continue
            out.extend(ScoredPair(_to_score(r)) for r in results)
        return out


def score_batch(
    pairs: Sequence[ScoreRequest | tuple],
    backend: NliBackend,
    batch_size: int = 32,
    retries: int = 2,
    backoff: float = 0.1,
) -> list[ScoredPair]:
    """Score premise/hypothesis pairs, preserving order and length."""
    return ScorerGateway(backend, batch_size, retries, backoff).score(pairs)


_TOKEN_RE = re.compile(r"[a-z0-9]+")


def _mock_tokens(text: str) -> set[str]:
    return set(_TOKEN_RE.findall(text.lower()))


class LexicalMockBackend:
    """Deterministic test backend: fused = 2*J - 1.

    J is the Jaccard overlap of the normalized token sets of premise and
    hypothesis after removing the excluded entity terms (which appear in
    both sides and would otherwise dominate). Returned as the
    precomputed-probability form with p_entail = J.
    """

    def score_many(self, requests_: Sequence[ScoreRequest]) -> list[BackendResult]:
        out: list[BackendResult] = []
        for req in requests_:
            exclude: set[str] = set()
            for term in req.exclude_terms:
                exclude |= _mock_tokens(term)
            a = _mock_tokens(req.premise) - exclude
            b = _mock_tokens(req.hypothesis) - exclude
            union = a | b
            j = len(a & b) / len(union) if union else 0.0
            out.append((j, 1.0 - j))
        return out


class HttpNliBackend:
    """Client for an entailment-scoring HTTP service.

    Wire contract: POST {pairs: [{premise, hypothesis}]} returning
    {results: [{logits: [4 floats]} | {p_entail, p_no_entail}]}.
    """

    def __init__(self, endpoint: str, timeout: float = 60.0):
        self.endpoint = endpoint
        self.timeout = timeout

    def score_many(self, requests_: Sequence[ScoreRequest]) -> list[BackendResult]:
        payload = {
            "pairs": [
                {"premise": r.premise, "hypothesis": r.hypothesis} for r in requests_
            ]
        }
        try:
            resp = requests.post(self.endpoint, json=payload, timeout=self.timeout)
            resp.raise_for_status()
            data = resp.json()
        except requests.RequestException as exc:
            raise BackendError(f"NLI endpoint failure: {exc}") from exc
        except ValueError as exc:
            raise BackendProtocolError(f"NLI endpoint sent invalid JSON: {exc}") from exc
        results = data.get("results")
        if not isinstance(results, list):
            raise BackendProtocolError("NLI response missing 'results' array")
        out: list[BackendResult] = []
        for item in results:
            if not isinstance(item, dict):
                raise BackendProtocolError("NLI result entries must be objects")
            if "logits" in item:
                logits = item["logits"]
                if not isinstance(logits, list) or len(logits) != 4:
                    raise BackendProtocolError("'logits' must be a 4-element array")
                out.append(RawNliLogits(*(float(v) for v in logits)))
            elif "p_entail" in item and "p_no_entail" in item:
                out.append((float(item["p_entail"]), float(item["p_no_entail"])))
            else:
                raise BackendProtocolError(
                    "NLI result needs 'logits' or 'p_entail'/'p_no_entail'"
                )
        return out
