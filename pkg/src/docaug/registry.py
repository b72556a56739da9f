"""Predefined relation inventory: verbalization templates and type constraints.

Each relation type carries a natural-language hypothesis template with
the two placeholder tokens "sub." and "obj." (exactly once each), plus
optional entity-type constraints over {PER, ORG, LOC, TIME, NUM, MISC}.
The shipped inventory has 96 types. Registries are immutable after load;
every operation here is pure.
"""
from __future__ import annotations

import json
from collections import defaultdict
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import TYPE_CHECKING, Iterable, Iterator, Literal, Sequence

from .errors import RegistryError, UnknownRelationError

if TYPE_CHECKING:
    from .corpus import Document

SUBJECT_PLACEHOLDER = "sub."
OBJECT_PLACEHOLDER = "obj."

Direction = Literal["forward", "inverse"]


@dataclass(frozen=True)
class RelationType:
    id: str
    name: str
    hypothesis_template: str
    subject_types: frozenset[str] = frozenset()  # empty = unconstrained
    object_types: frozenset[str] = frozenset()


@dataclass(frozen=True)
class Hypothesis:
    relation_id: str
    direction: Direction
    sentence: str


def _validate_template(rel_id: str, template: str) -> None:
    for placeholder in (SUBJECT_PLACEHOLDER, OBJECT_PLACEHOLDER):
        n = template.count(placeholder)
        if n != 1:
            raise RegistryError(
                f"relation {rel_id}: template must contain {placeholder!r} "
                f"exactly once, found {n}"
            )


class Registry:
    """An ordered, immutable collection of relation types."""

    def __init__(self, types: Sequence[RelationType]):
        by_id: dict[str, RelationType] = {}
        name_index: dict[str, str] = {}
        for rel in types:
            _validate_template(rel.id, rel.hypothesis_template)
            if rel.id in by_id:
                raise RegistryError(f"duplicate relation id {rel.id!r}")
            by_id[rel.id] = rel
            name_index.setdefault(rel.name.lower(), rel.id)
        self.types: tuple[RelationType, ...] = tuple(types)
        self._by_id = by_id
        self.name_index = name_index

    def __len__(self) -> int:
        return len(self.types)

    def __iter__(self) -> Iterator[RelationType]:
        return iter(self.types)

    def get(self, rel_id: str) -> RelationType:
        try:
            return self._by_id[rel_id]
        except KeyError:
            raise UnknownRelationError(f"unknown relation id {rel_id!r}") from None

    def __contains__(self, rel_id: str) -> bool:
        return rel_id in self._by_id

    def relation_ids(self) -> tuple[str, ...]:
        return tuple(rel.id for rel in self.types)

    def restricted_to(self, rel_ids: Iterable[str]) -> "Registry":
        wanted = set(rel_ids)
        missing = wanted - set(self._by_id)
        if missing:
            raise UnknownRelationError(f"unknown relation ids {sorted(missing)}")
        return Registry([rel for rel in self.types if rel.id in wanted])

    def check_type_constraint(
        self, rel_id: str, subject_type: str, object_type: str
    ) -> bool:
        return check_type_constraint(self.get(rel_id), subject_type, object_type)


def _read_entries(path: str | Path | None, default_name: str) -> list[dict]:
    if path is None:
        text = (
            resources.files("docaug").joinpath("data", default_name).read_text("utf-8")
        )
        source = f"packaged {default_name}"
    else:
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise RegistryError(f"cannot read {path}: {exc}") from exc
        source = str(path)
    try:
        entries = json.loads(text)
    except json.JSONDecodeError as exc:
        raise RegistryError(f"{source} is not valid JSON: {exc}") from exc
    if not isinstance(entries, list):
        raise RegistryError(f"{source}: top level must be an array")
    return entries


def load_type_constraints(
    path: str | Path | None = None,
) -> dict[str, tuple[frozenset[str], frozenset[str]]]:
    """Load a constraint table: relation id -> (subject types, object types)."""
    table: dict[str, tuple[frozenset[str], frozenset[str]]] = {}
    for entry in _read_entries(path, "type_constraints.json"):
        rel_id = entry.get("id")
        if not isinstance(rel_id, str):
            raise RegistryError("constraint entry missing relation id")
        table[rel_id] = (
            frozenset(entry.get("subject_types", [])),
            frozenset(entry.get("object_types", [])),
        )
    return table


def load_registry(
    path: str | Path | None = None,
    constraints_path: str | Path | None = None,
) -> Registry:
    """Load the relation inventory, folding in the type-constraint table.

    Both arguments default to the packaged data files. Constraint entries
    override any types carried by the registry file itself; relations
    absent from the table are unconstrained.
    """
    constraints = load_type_constraints(constraints_path)
    types = []
    for entry in _read_entries(path, "relation_types.json"):
        rel_id = entry.get("id")
        name = entry.get("name")
        template = entry.get("template")
        if not isinstance(rel_id, str) or not rel_id:
            raise RegistryError("registry entry missing id")
        if not isinstance(name, str) or not name:
            raise RegistryError(f"relation {rel_id}: missing name")
        if not isinstance(template, str):
            raise RegistryError(f"relation {rel_id}: missing template")
        subject_types = frozenset(entry.get("subject_types", []))
        object_types = frozenset(entry.get("object_types", []))
        if rel_id in constraints:
            subject_types, object_types = constraints[rel_id]
        types.append(RelationType(rel_id, name, template, subject_types, object_types))
    return Registry(types)


def verbalize_premise(subject: str, relation_phrase: str, object_: str) -> str:
    """Concatenate a free-form triple into a sentence: "<s> <r> <o>"."""
    parts = [subject.strip(), relation_phrase.strip(), object_.strip()]
    if not all(parts):
        raise ValueError("premise parts must be non-empty")
    return " ".join(parts) + "."


def verbalize_hypothesis(
    rel: RelationType, subject_name: str, object_name: str
) -> str:
    """Instantiate the relation template with the given entity names.

    Single-pass substitution: placeholder positions come from the
    template alone, so names containing the literal placeholder tokens
    are never re-expanded. The placeholder tokens carry a period; when a
    template ends in one, that period is the sentence's full stop and is
    kept ("The father of sub. is obj." -> "The father of X is Y.").
    """
    if not subject_name or not object_name:
        raise ValueError("entity names must be non-empty")
    template = rel.hypothesis_template
    i = template.find(SUBJECT_PLACEHOLDER)
    j = template.find(OBJECT_PLACEHOLDER)
    slots = sorted(
        [(i, SUBJECT_PLACEHOLDER, subject_name), (j, OBJECT_PLACEHOLDER, object_name)]
    )
    out = []
    pos = 0
    for start, token, name in slots:
        out.append(template[pos:start])
        out.append(name)
        pos = start + len(token)
    out.append(template[pos:])
    if pos == len(template):
        out.append(".")
    return "".join(out)


def enumerate_hypotheses(
    subject_name: str, object_name: str, registry: Registry
) -> list[Hypothesis]:
    """All candidate hypotheses for one proposal: 2 per relation type.

    In registry order, forward (names as given) first, then inverse
    (names swapped) -- the generated relation may correspond to an
    inverse predefined type.
    """
    out: list[Hypothesis] = []
    for rel in registry:
        out.append(
            Hypothesis(rel.id, "forward", verbalize_hypothesis(rel, subject_name, object_name))
        )
        out.append(
            Hypothesis(rel.id, "inverse", verbalize_hypothesis(rel, object_name, subject_name))
        )
    return out


def check_type_constraint(
    rel: RelationType, subject_type: str, object_type: str
) -> bool:
    """True iff both entity types are allowed (empty set = unconstrained)."""
    if rel.subject_types and subject_type not in rel.subject_types:
        return False
    if rel.object_types and object_type not in rel.object_types:
        return False
    return True


def derive_type_constraints(
    documents: Iterable["Document"],
) -> dict[str, tuple[frozenset[str], frozenset[str]]]:
    """Scan gold labels for the entity-type pairs observed per relation.

    The brute-force co-occurrence table: a relation's constraint sets are
    exactly the subject/object types it is seen with. Used to regenerate
    the shipped table from a labeled training corpus.
    """
    subj: dict[str, set[str]] = defaultdict(set)
    obj: dict[str, set[str]] = defaultdict(set)
    for doc in documents:
        for label in doc.labels:
            subj[label.r].add(doc.vertex_set[label.h].entity_type)
            obj[label.r].add(doc.vertex_set[label.t].entity_type)
    return {
        r: (frozenset(subj[r]), frozenset(obj[r])) for r in sorted(subj)
    }


def save_type_constraints(
    table: dict[str, tuple[frozenset[str], frozenset[str]]], path: str | Path
) -> None:
    entries = [
        {
            "id": rel_id,
            "subject_types": sorted(types[0]),
            "object_types": sorted(types[1]),
        }
        for rel_id, types in sorted(table.items())
    ]
    Path(path).write_text(
        json.dumps(entries, ensure_ascii=False, indent=1) + "\n", encoding="utf-8"
    )
