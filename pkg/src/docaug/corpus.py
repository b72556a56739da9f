"""DocRED-schema corpus model: load, validate, index, diff, and emit.

A corpus is an ordered list of documents. Each document carries tokenized
sentences, a vertex set of entities (clusters of surface mentions with
sentence/token spans), and labeled relation triples between entity
indices. Documents are immutable after load and safe to share across
threads; documents are keyed across corpus versions by their title.
"""
from __future__ import annotations

import json
import logging
import unicodedata
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Collection, Iterable, Sequence

from .errors import CorpusError

logger = logging.getLogger(__name__)

ENTITY_TYPES = frozenset({"PER", "ORG", "LOC", "TIME", "NUM", "MISC"})

_QUOTE_CHARS = "\"'`‘’“”«»‹›"


def normalize_surface(surface: str) -> str:
    """Normalize an entity surface form for matching.

    Unicode NFC, lowercase, internal whitespace collapsed, surrounding
    quotes and trailing periods stripped. LLM output rarely reproduces
    mention casing/punctuation exactly, so raw string equality would
    drop valid proposals.
    """
    s = unicodedata.normalize("NFC", surface)
    while True:
        before = s
        s = s.strip().strip(_QUOTE_CHARS).rstrip(".")
        if s == before:
            break
    return " ".join(s.split()).lower()


@dataclass(frozen=True)
class Mention:
    name: str
    sent_id: int
    pos: tuple[int, int]  # half-open token span [start, end)
    entity_type: str


@dataclass(frozen=True)
class Entity:
    mentions: tuple[Mention, ...]
    entity_type: str  # majority mention type
    canonical_name: str  # longest mention surface, ties to first occurring


@dataclass(frozen=True)
class GoldTriple:
    h: int
    t: int
    r: str
    evidence: tuple[int, ...] = ()

    @property
    def key(self) -> tuple[int, int, str]:
        return (self.h, self.t, self.r)


@dataclass(frozen=True)
class Document:
    title: str
    sents: tuple[tuple[str, ...], ...]
    vertex_set: tuple[Entity, ...]
    labels: tuple[GoldTriple, ...]


@dataclass(frozen=True)
class CorpusStats:
    doc_count: int
    entity_count: int
    triple_count: int
    per_relation: dict[str, int]


def build_entity(mentions: Sequence[Mention]) -> Entity:
    """Derive the entity-level type and canonical name from its mentions."""
    if not mentions:
        raise CorpusError("entity has no mentions")
    counts = Counter(m.entity_type for m in mentions)
    first_seen = {m.entity_type: i for i, m in reversed(list(enumerate(mentions)))}
    entity_type = max(counts, key=lambda t: (counts[t], -first_seen[t]))
    max_len = max(len(m.name) for m in mentions)
    canonical = next(m for m in mentions if len(m.name) == max_len)
    return Entity(tuple(mentions), entity_type, canonical.name)


def _default_relation_ids() -> frozenset[str]:
    from .registry import load_registry

    return frozenset(load_registry().relation_ids())


def _parse_mention(raw: object, where: str) -> Mention:
    if not isinstance(raw, dict):
        raise CorpusError(f"{where}: mention must be an object")
    try:
        name = raw["name"]
        sent_id = raw["sent_id"]
        pos = raw["pos"]
        entity_type = raw["type"]
    except KeyError as exc:
        raise CorpusError(f"{where}: mention missing field {exc.args[0]!r}") from None
    if not isinstance(name, str) or not name.strip():
        raise CorpusError(f"{where}: mention name must be non-empty text")
    if not isinstance(sent_id, int) or sent_id < 0:
        raise CorpusError(f"{where}: sent_id must be a nonnegative integer")
    if (
        not isinstance(pos, (list, tuple))
        or len(pos) != 2
        or not all(isinstance(x, int) for x in pos)
    ):
        raise CorpusError(f"{where}: pos must be a [start, end] integer pair")
    if entity_type not in ENTITY_TYPES:
        raise CorpusError(
            f"{where}: type {entity_type!r} not one of {sorted(ENTITY_TYPES)}"
        )
    return Mention(name, sent_id, (pos[0], pos[1]), entity_type)


def _parse_document(
    raw: object, doc_index: int, known_relations: Collection[str] | None
) -> Document:
    where = f"document {doc_index}"
    if not isinstance(raw, dict):
        raise CorpusError(f"{where}: expected an object")
    title = raw.get("title")
    if not isinstance(title, str) or not title:
        raise CorpusError(f"{where}: field 'title' must be non-empty text")
    sents_raw = raw.get("sents")
    if not isinstance(sents_raw, list) or not all(
        isinstance(s, list) and all(isinstance(t, str) for t in s) for s in sents_raw
    ):
        raise CorpusError(f"{where}: field 'sents' must be a list of token lists")
    sents = tuple(tuple(s) for s in sents_raw)

    vertex_raw = raw.get("vertexSet")
    if not isinstance(vertex_raw, list):
        raise CorpusError(f"{where}: field 'vertexSet' must be a list")
    entities = []
    for ei, ent_raw in enumerate(vertex_raw):
        if not isinstance(ent_raw, list) or not ent_raw:
            raise CorpusError(f"{where}: entity {ei} must be a non-empty mention list")
        mentions = []
        for mi, m_raw in enumerate(ent_raw):
            m = _parse_mention(m_raw, f"{where}: entity {ei}, mention {mi}")
            if m.sent_id >= len(sents):
                raise CorpusError(
                    f"{where}: entity {ei}, mention {mi}: sent_id {m.sent_id} "
                    f"outside {len(sents)} sentences"
                )
            start, end = m.pos
            if not (0 <= start < end <= len(sents[m.sent_id])):
                raise CorpusError(
                    f"{where}: entity {ei}, mention {mi}: pos [{start}, {end}) "
                    f"invalid for sentence of {len(sents[m.sent_id])} tokens"
                )
            mentions.append(m)
        entities.append(build_entity(mentions))

    labels_raw = raw.get("labels", [])
    if not isinstance(labels_raw, list):
        raise CorpusError(f"{where}: field 'labels' must be a list")
    labels: list[GoldTriple] = []
    seen: set[tuple[int, int, str]] = set()
    for li, l_raw in enumerate(labels_raw):
        lwhere = f"{where}: label {li}"
        if not isinstance(l_raw, dict):
            raise CorpusError(f"{lwhere}: expected an object")
        try:
            h, t, r = l_raw["h"], l_raw["t"], l_raw["r"]
        except KeyError as exc:
            raise CorpusError(f"{lwhere}: missing field {exc.args[0]!r}") from None
        evidence = l_raw.get("evidence", [])
        if not isinstance(h, int) or not (0 <= h < len(entities)):
            raise CorpusError(f"{lwhere}: h={h!r} not a valid entity index")
        if not isinstance(t, int) or not (0 <= t < len(entities)):
            raise CorpusError(f"{lwhere}: t={t!r} not a valid entity index")
        if h == t:
            raise CorpusError(f"{lwhere}: h and t must differ")
        if not isinstance(r, str) or not r:
            raise CorpusError(f"{lwhere}: r must be a relation id")
        if known_relations is not None and r not in known_relations:
            raise CorpusError(f"{lwhere}: unknown relation id {r!r}")
        if not isinstance(evidence, list) or not all(
            isinstance(e, int) for e in evidence
        ):
            raise CorpusError(f"{lwhere}: evidence must be a list of sentence ids")
        key = (h, t, r)
        if key in seen:
            logger.warning("%s: dropping duplicate label (%d, %d, %s)", where, h, t, r)
            continue
        seen.add(key)
        labels.append(GoldTriple(h, t, r, tuple(evidence)))

    return Document(title, sents, tuple(entities), tuple(labels))


def load_corpus(
    path: str | Path, known_relations: Collection[str] | None = None
) -> list[Document]:
    """Load a DocRED-schema JSON file into validated documents.

    Relation ids are checked against `known_relations`, defaulting to the
    shipped 96-type registry. Duplicate (h, t, r) labels are dropped with
    a warning; any other invariant violation raises CorpusError naming
    the document index and offending field.
    """
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise CorpusError(f"cannot read corpus file {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise CorpusError(f"corpus file {path} is not valid JSON: {exc}") from exc
    if not isinstance(raw, list):
        raise CorpusError(f"corpus file {path}: top level must be an array")
    if known_relations is None:
        known_relations = _default_relation_ids()
    return [_parse_document(doc, i, known_relations) for i, doc in enumerate(raw)]


def document_to_json(doc: Document) -> dict:
    return {
        "title": doc.title,
        "sents": [list(s) for s in doc.sents],
        "vertexSet": [
            [
                {
                    "name": m.name,
                    "sent_id": m.sent_id,
                    "pos": list(m.pos),
                    "type": m.entity_type,
                }
                for m in entity.mentions
            ]
            for entity in doc.vertex_set
        ],
        "labels": [
            {"h": l.h, "t": l.t, "r": l.r, "evidence": list(l.evidence)}
            for l in doc.labels
        ],
    }


def save_corpus(documents: Sequence[Document], path: str | Path) -> None:
    """Emit documents using the same field names and conventions as input."""
    path = Path(path)
    payload = [document_to_json(d) for d in documents]
    with path.open("w", encoding="utf-8") as f:
        json.dump(payload, f, ensure_ascii=False)
        f.write("\n")


def dataset_stats(documents: Sequence[Document]) -> CorpusStats:
    """Exact document/entity/triple counts plus a per-relation breakdown."""
    per_relation: Counter[str] = Counter()
    entity_count = 0
    for doc in documents:
        entity_count += len(doc.vertex_set)
        per_relation.update(l.r for l in doc.labels)
    ordered = {r: per_relation[r] for r in sorted(per_relation)}
    return CorpusStats(
        doc_count=len(documents),
        entity_count=entity_count,
        triple_count=sum(ordered.values()),
        per_relation=ordered,
    )


def diff_triples(
    superset: Sequence[Document], base: Sequence[Document]
) -> list[tuple[str, GoldTriple]]:
    """Triples present in `superset` and absent from `base`.

    Both corpora must cover the same documents; identity of a triple is
    (title, h, t, r). Order follows the superset corpus.
    """
    base_by_title = {d.title: d for d in base}
    if len(base_by_title) != len(base):
        raise CorpusError("base corpus has duplicate titles")
    super_titles = {d.title for d in superset}
    if len(super_titles) != len(superset):
        raise CorpusError("superset corpus has duplicate titles")
    for title in super_titles - set(base_by_title):
        raise CorpusError(f"document {title!r} present only in the superset corpus")
    for title in set(base_by_title) - super_titles:
        raise CorpusError(f"document {title!r} present only in the base corpus")

    out: list[tuple[str, GoldTriple]] = []
    for doc in superset:
        base_keys = {l.key for l in base_by_title[doc.title].labels}
        out.extend((doc.title, l) for l in doc.labels if l.key not in base_keys)
    return out


def entity_surface_index(doc: Document) -> dict[str, int]:
    """Map every normalized mention surface to its entity index.

    Collisions (the same surface naming two entities) resolve to the
    lower entity index.
    """
    index: dict[str, int] = {}
    for ei, entity in enumerate(doc.vertex_set):
        for m in entity.mentions:
            key = normalize_surface(m.name)
            # entities iterate in ascending order, so first wins = lowest
            if key:
                index.setdefault(key, ei)
    return index


def document_text(doc: Document) -> str:
    """The document body with sentences (and their tokens) joined by spaces."""
    return " ".join(" ".join(s) for s in doc.sents)


def sentence_text_and_offsets(
    tokens: Sequence[str],
) -> tuple[str, list[tuple[int, int]]]:
    """Join tokens with single spaces, returning per-token char spans."""
    text_parts: list[str] = []
    offsets: list[tuple[int, int]] = []
    pos = 0
    for i, tok in enumerate(tokens):
        if i > 0:
            text_parts.append(" ")
            pos += 1
        offsets.append((pos, pos + len(tok)))
        text_parts.append(tok)
        pos += len(tok)
    return "".join(text_parts), offsets


def with_added_labels(
    documents: Sequence[Document],
    additions: Iterable[tuple[str, int, int, str]],
) -> tuple[list[Document], int, int]:
    """Append (title, h, t, r) triples as labels with empty evidence.

    Returns (new corpus, added count, duplicate count). Existing labels
    are untouched; additions duplicating an existing or earlier-added
    triple are skipped. Unknown titles raise CorpusError.
    """
    by_title = {d.title: i for i, d in enumerate(documents)}
    pending: dict[int, list[GoldTriple]] = {}
    seen: dict[int, set[tuple[int, int, str]]] = {}
    added = duplicates = 0
    for title, h, t, r in additions:
        if title not in by_title:
            raise CorpusError(f"cannot add triple to unknown document {title!r}")
        di = by_title[title]
        doc = documents[di]
        if not (0 <= h < len(doc.vertex_set)) or not (0 <= t < len(doc.vertex_set)):
            raise CorpusError(
                f"document {title!r}: triple ({h}, {t}, {r}) has invalid entity index"
            )
        if h == t:
            raise CorpusError(f"document {title!r}: triple has h == t == {h}")
        keys = seen.setdefault(di, {l.key for l in doc.labels})
        if (h, t, r) in keys:
            duplicates += 1
            continue
        keys.add((h, t, r))
        pending.setdefault(di, []).append(GoldTriple(h, t, r, ()))
        added += 1

    out = []
    for i, doc in enumerate(documents):
        if i in pending:
            doc = Document(
                doc.title, doc.sents, doc.vertex_set, doc.labels + tuple(pending[i])
            )
        out.append(doc)
    return out, added, duplicates
