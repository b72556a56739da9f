"""Free-form triple elicitation from a chat-completion endpoint.

Builds generation prompts (demonstration + document + entity list),
iterates continuation rounds feeding previous answers back, parses the
free-form "(subject, relation, object)" lines out of the responses, and
links/filters the results against the document's entity list. Triples
whose entities fall outside the provided list are removed.
"""
from __future__ import annotations

import logging
import os
import re
import time
from dataclasses import dataclass, field, replace
from typing import Protocol, Sequence

import requests

from .corpus import Document, document_text, entity_surface_index, normalize_surface
from .errors import BackendError, BackendProtocolError, ConfigError

logger = logging.getLogger(__name__)

INITIAL_INSTRUCTION = (
    "Please generate at least 20 triples using only the given entities "
    "from the entity list. Write one triple per line in the form "
    "(subject, relation, object)."
)
CONTINUATION_INSTRUCTION = (
    "Please keep generating 20 more triples using only the given entities "
    "from the entity list."
)


@dataclass(frozen=True)
class PromptBundle:
    """An alternating user/assistant conversation, first turn user."""

    system_text: str | None
    turns: tuple[tuple[str, str], ...]

    def __post_init__(self) -> None:
        if not self.turns:
            raise ValueError("prompt bundle needs at least one turn")
        for i, (role, _text) in enumerate(self.turns):
            expected = "user" if i % 2 == 0 else "assistant"
            if role != expected:
                raise ValueError(
                    f"turn {i} must have role {expected!r}, got {role!r}"
                )


@dataclass(frozen=True)
class ProposalTriple:
    subject_surface: str
    relation_phrase: str
    object_surface: str
    doc_title: str = ""
    round: int = 0
    line_index: int = 0
    subject_idx: int | None = None
    object_idx: int | None = None
    subject_type: str | None = None
    object_type: str | None = None

    @property
    def linked(self) -> bool:
        return self.subject_idx is not None and self.object_idx is not None


@dataclass(frozen=True)
class LlmConfig:
    endpoint: str = ""
    model: str = ""
    temperature: float = 0.0  # deterministic by default
    rounds: int = 0  # continuation rounds after the initial prompt
    timeout: float = 60.0
    retries: int = 2
    backoff: float = 0.5
    api_key_env: str = "LLM_API_KEY"
    max_document_tokens: int | None = None

    def __post_init__(self) -> None:
        if self.temperature < 0:
            raise ConfigError("temperature must be >= 0")
        if self.rounds < 0:
            raise ConfigError("rounds must be >= 0")
        if self.retries < 0:
            raise ConfigError("retries must be >= 0")


def build_initial_prompt(
    doc: Document, demonstration: str, max_document_tokens: int | None = None
) -> PromptBundle:
    """One user turn: demonstration, document text, entity list, instruction."""
    if not demonstration.strip():
        raise ConfigError("demonstration text must be non-empty")
    text = document_text(doc)
    if max_document_tokens is not None:
        tokens = text.split(" ")
        if len(tokens) > max_document_tokens:
            logger.warning(
                "document %r truncated from %d to %d tokens",
                doc.title,
                len(tokens),
                max_document_tokens,
            )
            text = " ".join(tokens[:max_document_tokens])
    entity_lines = "\n".join(e.canonical_name for e in doc.vertex_set)
    content = (
        f"{demonstration.rstrip()}\n\n"
        f"Document:\n{text}\n\n"
        f"Entity list:\n{entity_lines}\n\n"
        f"{INITIAL_INSTRUCTION}"
    )
    return PromptBundle(system_text=None, turns=(("user", content),))


def build_continuation_prompt(previous: PromptBundle, previous_answer: str) -> PromptBundle:
    """Append the assistant's answer and ask for 20 more triples."""
    if not previous_answer.strip():
        raise ValueError("previous answer must be non-empty")
    turns = previous.turns + (
        ("assistant", previous_answer),
        ("user", CONTINUATION_INSTRUCTION),
    )
    return PromptBundle(system_text=previous.system_text, turns=turns)


_NUMBER_PREFIX = re.compile(r"^\d+\s*[.)]\s*")
_COMPONENT_QUOTES = "\"'‘’“”"
_BRACKETS = {"(": ")", "<": ">"}
_OPENERS = {"(": ")", "[": "]", "{": "}", "<": ">"}


def _split_top_level(text: str) -> list[str]:
    """Split on commas not nested inside any bracket pair."""
    parts: list[str] = []
    depth: list[str] = []
    current: list[str] = []
    for ch in text:
        if ch in _OPENERS:
            depth.append(_OPENERS[ch])
            current.append(ch)
        elif depth and ch == depth[-1]:
            depth.pop()
            current.append(ch)
        elif ch == "," and not depth:
            parts.append("".join(current))
            current = []
        else:
            current.append(ch)
    parts.append("".join(current))
    return parts


def _clean_component(text: str) -> str:
    return text.strip().strip(_COMPONENT_QUOTES).strip()


@dataclass
class ParseResult:
    proposals: list[ProposalTriple]
    skipped_lines: list[str] = field(default_factory=list)

    @property
    def skip_count(self) -> int:
        return len(self.skipped_lines)


def parse_triples(response_text: str) -> ParseResult:
    """Extract "(s, r, o)" / "<s, r, o>" lines, optionally numbered.

    Lenient: lines that do not carry a well-formed triple are skipped
    and reported, never fatal. Components are trimmed of whitespace and
    surrounding quotes; commas nested in brackets do not split.
    """
    proposals: list[ProposalTriple] = []
    skipped: list[str] = []
    for line_index, raw_line in enumerate(response_text.splitlines()):
        line = raw_line.strip()
        if not line:
            continue
        body = _NUMBER_PREFIX.sub("", line)
        closer = _BRACKETS.get(body[:1])
        if closer is None or not body.endswith(closer):
            skipped.append(raw_line)
            continue
        components = [_clean_component(c) for c in _split_top_level(body[1:-1])]
        if len(components) != 3 or not all(components):
            skipped.append(raw_line)
            continue
        subject, relation, object_ = components
        proposals.append(
            ProposalTriple(subject, relation, object_, line_index=line_index)
        )
    return ParseResult(proposals, skipped)


@dataclass
class FilterResult:
    kept: list[ProposalTriple]
    dropped: list[tuple[ProposalTriple, str]] = field(default_factory=list)


def link_and_filter(
    proposals: Sequence[ProposalTriple], doc: Document
) -> FilterResult:
    """Resolve proposal surfaces to entity indices; drop what cannot link.

    Drops proposals whose subject or object is outside the entity list,
    self-relations, and duplicates by (subject, normalized relation
    phrase, object), keeping the first occurrence.
    """
    index = entity_surface_index(doc)
    kept: list[ProposalTriple] = []
    dropped: list[tuple[ProposalTriple, str]] = []
    seen: set[tuple[int, str, int]] = set()
    for p in proposals:
        s_idx = index.get(normalize_surface(p.subject_surface))
        o_idx = index.get(normalize_surface(p.object_surface))
        if s_idx is None:
            dropped.append((p, "subject not in entity list"))
            continue
        if o_idx is None:
            dropped.append((p, "object not in entity list"))
            continue
        if s_idx == o_idx:
            dropped.append((p, "subject and object resolve to the same entity"))
            continue
        key = (s_idx, " ".join(p.relation_phrase.lower().split()), o_idx)
        if key in seen:
            dropped.append((p, "duplicate of an earlier proposal"))
            continue
        seen.add(key)
        kept.append(
            replace(
                p,
                doc_title=doc.title,
                subject_idx=s_idx,
                object_idx=o_idx,
                subject_type=doc.vertex_set[s_idx].entity_type,
                object_type=doc.vertex_set[o_idx].entity_type,
            )
        )
    return FilterResult(kept, dropped)


class ChatClient(Protocol):
    def complete(self, title: str, bundle: PromptBundle) -> str:
        ...


class HttpChatClient:
    """Chat-completions client: POST {model, temperature, messages}."""

    def __init__(self, config: LlmConfig):
        if not config.endpoint:
            raise ConfigError("LLM endpoint address is required")
        if not config.model:
            raise ConfigError("LLM model name is required")
        self.config = config

    def complete(self, title: str, bundle: PromptBundle) -> str:
        messages = []
        if bundle.system_text:
            messages.append({"role": "system", "content": bundle.system_text})
        messages.extend({"role": r, "content": t} for r, t in bundle.turns)
        headers = {}
        api_key = os.environ.get(self.config.api_key_env)
        if api_key:
            headers["Authorization"] = f"Bearer {api_key}"
        try:
            resp = requests.post(
                self.config.endpoint,
                json={
                    "model": self.config.model,
                    "temperature": self.config.temperature,
                    "messages": messages,
                },
                headers=headers,
                timeout=self.config.timeout,
            )
            resp.raise_for_status()
            data = resp.json()
        except requests.RequestException as exc:
            raise BackendError(f"LLM endpoint failure: {exc}") from exc
        except ValueError as exc:
            raise BackendProtocolError(f"LLM endpoint sent invalid JSON: {exc}") from exc
        try:
            return data["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError):
            if isinstance(data.get("content"), str):
                return data["content"]
            raise BackendProtocolError(
                "LLM response carries no assistant message text"
            ) from None


@dataclass
class TranscriptRound:
    prompt_turns: list[list[str]]
    answer: str


def transcript_filename(title: str) -> str:
    import hashlib

    slug = re.sub(r"[^A-Za-z0-9]+", "-", title).strip("-").lower()[:40] or "doc"
    digest = hashlib.sha1(title.encode("utf-8")).hexdigest()[:8]
    return f"{slug}-{digest}.json"


class ReplayChatClient:
    """Serves stored per-document transcripts instead of the network.

    A document's answers are consumed in round order; a missing
    transcript or exhausted round list behaves like a transport failure,
    so the document is reported failed exactly as with a live endpoint.
    """

    def __init__(self, transcript_dir: str | os.PathLike):
        from pathlib import Path

        self.transcript_dir = Path(transcript_dir)
        self._cursors: dict[str, int] = {}
        self._answers: dict[str, list[str]] = {}

    def _load(self, title: str) -> list[str]:
        if title not in self._answers:
            import json

            path = self.transcript_dir / transcript_filename(title)
            if not path.exists():
                raise BackendError(f"no stored transcript for document {title!r}")
            data = json.loads(path.read_text(encoding="utf-8"))
            rounds = data.get("rounds", [])
            self._answers[title] = [r["answer"] for r in rounds]
        return self._answers[title]

    def complete(self, title: str, bundle: PromptBundle) -> str:
        answers = self._load(title)
        cursor = self._cursors.get(title, 0)
        if cursor >= len(answers):
            raise BackendError(
                f"stored transcript for {title!r} has only {len(answers)} rounds"
            )
        self._cursors[title] = cursor + 1
        return answers[cursor]


@dataclass
class ProposeResult:
    doc_title: str
    proposals: list[ProposalTriple] = field(default_factory=list)
    dropped: list[tuple[ProposalTriple, str]] = field(default_factory=list)
    skipped_lines: list[str] = field(default_factory=list)
    transcript: list[TranscriptRound] = field(default_factory=list)
    failed: bool = False
    failure: str | None = None


def _call_with_retry(
    client: ChatClient, title: str, bundle: PromptBundle, config: LlmConfig
) -> str:
    last_error = "no attempts made"
    for attempt in range(config.retries + 1):
        try:
            answer = client.complete(title, bundle)
            if answer.strip():
                return answer
            last_error = "empty response"
        except BackendError as exc:
            last_error = str(exc)
        if attempt < config.retries:
            time.sleep(config.backoff * (2**attempt))
    raise BackendError(last_error)


def propose(doc: Document, config: LlmConfig, client: ChatClient, demonstration: str) -> ProposeResult:
    """Run the initial prompt plus `config.rounds` continuations for one doc.

    Transport failures are retried with exponential backoff up to the
    retry budget; on exhaustion the document is marked failed and yields
    no proposals (the pipeline continues with the rest).
    """
    result = ProposeResult(doc_title=doc.title)
    bundle = build_initial_prompt(doc, demonstration, config.max_document_tokens)
    raw: list[ProposalTriple] = []
    for round_index in range(config.rounds + 1):
        try:
            answer = _call_with_retry(client, doc.title, bundle, config)
        except BackendError as exc:
            logger.warning("document %r failed at round %d: %s", doc.title, round_index, exc)
            result.failed = True
            result.failure = str(exc)
            result.proposals = []
            return result  # partial transcript kept for audit
        result.transcript.append(
            TranscriptRound([list(t) for t in bundle.turns], answer)
        )
        parsed = parse_triples(answer)
        result.skipped_lines.extend(parsed.skipped_lines)
        raw.extend(replace(p, doc_title=doc.title, round=round_index) for p in parsed.proposals)
        if round_index < config.rounds:
            bundle = build_continuation_prompt(bundle, answer)
    filtered = link_and_filter(raw, doc)
    result.proposals = filtered.kept
    result.dropped = filtered.dropped
    return result
