from __future__ import annotations

from pathlib import Path

import pytest

from docaug.corpus import Document, GoldTriple, Mention, build_entity
from docaug.registry import Registry, load_registry

FIXTURE_DIR = Path(__file__).parent / "data" / "fixture5"


def make_doc(
    title: str,
    sents: list[list[str]],
    entities: list[list[tuple[str, int, tuple[int, int], str]]],
    labels: list[tuple[int, int, str]] | None = None,
) -> Document:
    """Compact document builder: entities are lists of
    (name, sent_id, (start, end), type) mention tuples."""
    vertex_set = tuple(
        build_entity([Mention(*m) for m in mentions]) for mentions in entities
    )
    gold = tuple(GoldTriple(h, t, r) for h, t, r in (labels or []))
    return Document(title, tuple(tuple(s) for s in sents), vertex_set, gold)


@pytest.fixture(scope="session")
def registry() -> Registry:
    return load_registry()


@pytest.fixture(scope="session")
def unconstrained_registry() -> Registry:
    """The shipped inventory with every relation left unconstrained."""
    base = load_registry()
    from docaug.registry import RelationType

    return Registry(
        [RelationType(r.id, r.name, r.hypothesis_template) for r in base]
    )


@pytest.fixture
def simple_doc() -> Document:
    return make_doc(
        "Test Doc",
        [
            ["David", "Lean", "worked", "for", "London", "Films", "."],
            ["He", "was", "born", "in", "Croydon", "."],
        ],
        [
            [("David Lean", 0, (0, 2), "PER")],
            [("London Films", 0, (4, 6), "ORG")],
            [("Croydon", 1, (4, 5), "LOC")],
        ],
        labels=[(0, 2, "P19")],
    )
