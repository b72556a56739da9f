"""How one free-form triple becomes a predefined relation.

Walks a single LLM-style proposal through parsing, entity linking,
premise/hypothesis construction, entailment scoring (with the
deterministic lexical mock), and the post-processing principles:
type constraints, argmax, threshold.

Run from the repository root:  python demos/02_alignment_walkthrough.py
"""
from docaug import (
    AlignConfig,
    LexicalMockBackend,
    ScorerGateway,
    align,
    enumerate_hypotheses,
    link_and_filter,
    load_registry,
    parse_triples,
    verbalize_premise,
)
from docaug.corpus import Document, Entity, GoldTriple, Mention, build_entity
from docaug.scoring import ScoreRequest

doc = Document(
    title="Demo Doc",
    sents=(
        ("Iris", "Kane", "runs", "the", "charity", "Open", "Hands", "."),
        ("Open", "Hands", "was", "created", "in", "Bristol", "."),
    ),
    vertex_set=(
        build_entity([Mention("Iris Kane", 0, (0, 2), "PER")]),
        build_entity([Mention("Open Hands", 0, (5, 7), "ORG"),
                      Mention("Open Hands", 1, (0, 2), "ORG")]),
        build_entity([Mention("Bristol", 1, (5, 6), "LOC")]),
    ),
    labels=(GoldTriple(0, 1, "P108"),),
)

response = """Here are the triples I found:
1. (Open Hands, the location where the group or organization was formed is, Bristol)
2. (Iris Kane, runs, Open Hands)
3. (Open Hands, helps, needy families)
"""
parsed = parse_triples(response)
print(f"parsed {len(parsed.proposals)} triples, skipped {parsed.skip_count} line(s)")

linked = link_and_filter(parsed.proposals, doc)
print(f"linked {len(linked.kept)} proposals; dropped:")
for proposal, reason in linked.dropped:
    print(f"  ({proposal.subject_surface}, {proposal.relation_phrase}, "
          f"{proposal.object_surface}) -> {reason}")

registry = load_registry()
proposal = linked.kept[0]  # the location-of-formation paraphrase
premise = verbalize_premise(
    proposal.subject_surface, proposal.relation_phrase, proposal.object_surface
)
print(f"\npremise: {premise}")

hypotheses = enumerate_hypotheses(
    proposal.subject_surface, proposal.object_surface, registry
)
print(f"candidate hypotheses: {len(hypotheses)} (two directions per relation)")

scorer = ScorerGateway(LexicalMockBackend(), batch_size=64)
exclude = (proposal.subject_surface, proposal.object_surface)
scores = scorer.score(
    [ScoreRequest(premise, h.sentence, exclude) for h in hypotheses]
)
ranked = sorted(zip(hypotheses, scores), key=lambda hs: -hs[1].score.fused)
print("top 3 by fused entailment score:")
for hyp, scored in ranked[:3]:
    print(f"  {scored.score.fused:+.3f}  {hyp.relation_id} {hyp.direction}: "
          f"{hyp.sentence}")

result = align(proposal, registry, scorer, AlignConfig(threshold=0.6))
if result is None:
    print("\nno candidate cleared the threshold")
else:
    print(f"\naligned: ({result.h}, {result.t}, {result.r}) "
          f"score={result.fused_score:.3f} provenance={result.provenance}")
    print(f"chosen hypothesis: {result.chosen_hypothesis}")
