"""Map linked proposals onto the predefined relation inventory.

A proposal whose relation phrase literally names a predefined type is
adopted directly, with no scoring, threshold, or constraint check.
Everything else goes through entailment scoring of the full candidate
hypothesis set (2 per relation type, forward and inverse): candidates
failing the entity-type constraints are discarded first, then the single
highest fused score wins, and it is emitted only above the threshold.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Literal, Sequence

from .corpus import Document
from .errors import ScoringUnavailableError
from .proposer import ProposalTriple
from .registry import (
    Registry,
    check_type_constraint,
    enumerate_hypotheses,
    verbalize_hypothesis,
    verbalize_premise,
)
from .scoring import ScorerGateway, ScoreRequest

logger = logging.getLogger(__name__)

DIRECT_MATCH_SCORE = 1.0  # sentinel fused score for direct adoptions

Provenance = Literal["direct", "nli"]


@dataclass(frozen=True)
class AlignedTriple:
    doc_title: str
    h: int
    t: int
    r: str
    fused_score: float
    provenance: Provenance
    premise: str
    chosen_hypothesis: str

    @property
    def key(self) -> tuple[int, int, str]:
        return (self.h, self.t, self.r)


@dataclass(frozen=True)
class AlignConfig:
    threshold: float = 0.6
    apply_type_constraints: bool = True

    def __post_init__(self) -> None:
        if not (-1.0 < self.threshold < 1.0):
            raise ValueError(f"threshold must lie in (-1, 1), got {self.threshold}")


def direct_match(proposal: ProposalTriple, registry: Registry) -> str | None:
    """The relation id whose name equals the proposal's phrase, if any."""
    key = " ".join(proposal.relation_phrase.lower().split())
    return registry.name_index.get(key)


def _require_linked(proposal: ProposalTriple) -> None:
    if not proposal.linked:
        raise ValueError("proposal must be linked before alignment")


def align(
    proposal: ProposalTriple,
    registry: Registry,
    scorer: ScorerGateway,
    config: AlignConfig = AlignConfig(),
) -> AlignedTriple | None:
    """Select at most one predefined relation for a linked proposal.

    Raises ScoringUnavailableError when any hypothesis could not be
    scored; returns None when no candidate passes the constraint filter
    or clears the threshold.
    """
    _require_linked(proposal)
    premise = verbalize_premise(
        proposal.subject_surface, proposal.relation_phrase, proposal.object_surface
    )

    direct_id = direct_match(proposal, registry)
    if direct_id is not None:
        rel = registry.get(direct_id)
        return AlignedTriple(
            doc_title=proposal.doc_title,
            h=proposal.subject_idx,
            t=proposal.object_idx,
            r=direct_id,
            fused_score=DIRECT_MATCH_SCORE,
            provenance="direct",
            premise=premise,
            chosen_hypothesis=verbalize_hypothesis(
                rel, proposal.subject_surface, proposal.object_surface
            ),
        )

    hypotheses = enumerate_hypotheses(
        proposal.subject_surface, proposal.object_surface, registry
    )
    exclude = (proposal.subject_surface, proposal.object_surface)
    outcomes = scorer.score(
        [ScoreRequest(premise, h.sentence, exclude) for h in hypotheses]
    )
    failures = [o.error for o in outcomes if not o.ok]
    if failures:
        raise ScoringUnavailableError(
            f"{len(failures)} of {len(outcomes)} hypotheses unscored "
            f"(first: {failures[0]})"
        )

    best = None  # (fused, hypothesis) -- strict > keeps the earliest on ties
    for hyp, outcome in zip(hypotheses, outcomes):
        if config.apply_type_constraints:
            rel = registry.get(hyp.relation_id)
            if hyp.direction == "forward":
                s_type, o_type = proposal.subject_type, proposal.object_type
            else:
                s_type, o_type = proposal.object_type, proposal.subject_type
            if not check_type_constraint(rel, s_type, o_type):
                continue
        if best is None or outcome.score.fused > best[0]:
            best = (outcome.score.fused, hyp)

    if best is None or best[0] <= config.threshold:
        return None
    fused, winner = best
    if winner.direction == "forward":
        h, t = proposal.subject_idx, proposal.object_idx
    else:
        h, t = proposal.object_idx, proposal.subject_idx
    return AlignedTriple(
        doc_title=proposal.doc_title,
        h=h,
        t=t,
        r=winner.relation_id,
        fused_score=fused,
        provenance="nli",
        premise=premise,
        chosen_hypothesis=winner.sentence,
    )


@dataclass
class AlignDocumentResult:
    triples: list[AlignedTriple]
    unscored: list[tuple[ProposalTriple, str]]


def align_document(
    proposals: Sequence[ProposalTriple],
    doc: Document,
    registry: Registry,
    scorer: ScorerGateway,
    config: AlignConfig = AlignConfig(),
) -> AlignDocumentResult:
    """Align all of a document's proposals into new candidate triples.

    Deduplicates by (h, t, r) keeping the highest fused score, removes
    triples already present in the gold labels, and orders the output by
    (h, t, r).
    """
    for p in proposals:
        if p.doc_title != doc.title:
            raise ValueError(
                f"proposal for {p.doc_title!r} aligned against {doc.title!r}"
            )
    best: dict[tuple[int, int, str], AlignedTriple] = {}
    unscored: list[tuple[ProposalTriple, str]] = []
    for p in proposals:
        try:
            aligned = align(p, registry, scorer, config)
        except ScoringUnavailableError as exc:
            logger.warning("proposal unscored in %r: %s", doc.title, exc)
            unscored.append((p, str(exc)))
            continue
        if aligned is None:
            continue
        current = best.get(aligned.key)
        if current is None or aligned.fused_score > current.fused_score:
            best[aligned.key] = aligned
    gold = {l.key for l in doc.labels}
    triples = sorted(
        (t for t in best.values() if t.key not in gold), key=lambda t: t.key
    )
    return AlignDocumentResult(triples, unscored)
