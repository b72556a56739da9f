from __future__ import annotations

import pytest

from docaug.aligner import (
    AlignConfig,
    align,
    align_document,
    direct_match,
)
from docaug.errors import BackendError, ScoringUnavailableError
from docaug.proposer import ProposalTriple
from docaug.registry import verbalize_hypothesis
from docaug.scoring import LexicalMockBackend, ScorerGateway

from conftest import make_doc


def linked_proposal(
    s="David Lean",
    r="worked for",
    o="London Films",
    s_idx=0,
    o_idx=1,
    s_type="PER",
    o_type="ORG",
    title="Test Doc",
):
    return ProposalTriple(
        subject_surface=s,
        relation_phrase=r,
        object_surface=o,
        doc_title=title,
        subject_idx=s_idx,
        object_idx=o_idx,
        subject_type=s_type,
        object_type=o_type,
    )


class SentenceScoreBackend:
    """Scores by hypothesis sentence lookup; everything else gets `default`."""

    def __init__(self, scores: dict[str, float], default=-1.0, fail_sentences=()):
        self.scores = scores
        self.default = default
        self.fail_sentences = set(fail_sentences)

    def score_many(self, requests_):
        out = []
        for req in requests_:
            if req.hypothesis in self.fail_sentences:
                raise BackendError("backend down")
            fused = self.scores.get(req.hypothesis, self.default)
            p_entail = (fused + 1) / 2
            out.append((p_entail, 1 - p_entail))
        return out


def gateway(backend):
    return ScorerGateway(backend, batch_size=64, retries=0, backoff=0.0)


class TestDirectMatch:
    def test_exact_name(self, registry):
        assert direct_match(linked_proposal(r="country"), registry) == "P17"

    def test_case_and_whitespace_normalized(self, registry):
        assert direct_match(linked_proposal(r=" Country "), registry) == "P17"

    def test_free_form_phrase_misses(self, registry):
        assert direct_match(linked_proposal(r="worked for"), registry) is None


class TestAlign:
    def test_direct_match_bypasses_scoring_and_constraints(self, registry):
        # P26 wants PER/PER; the ORG object must not matter for a direct hit,
        # and no scorer is consulted at all
        class ExplodingBackend:
            def score_many(self, requests_):
                raise AssertionError("scorer must not be called")

        proposal = linked_proposal(r="spouse", s_type="PER", o_type="ORG")
        result = align(proposal, registry, gateway(ExplodingBackend()))
        assert result is not None
        assert result.provenance == "direct"
        assert result.r == "P26"
        assert result.fused_score == 1.0
        assert (result.h, result.t) == (0, 1)
        assert result.premise == "David Lean spouse London Films."
        assert result.chosen_hypothesis == "The spouse of David Lean is London Films."

    def test_nli_winner_forward(self, registry):
        target = verbalize_hypothesis(
            registry.get("P108"), "David Lean", "London Films"
        )
        backend = SentenceScoreBackend({target: 0.9})
        result = align(linked_proposal(), registry, gateway(backend))
        assert result is not None
        assert (result.h, result.t, result.r) == (0, 1, "P108")
        assert result.provenance == "nli"
        assert result.fused_score == pytest.approx(0.9)
        assert result.chosen_hypothesis == target

    def test_nli_winner_inverse_swaps_indices(self, registry):
        # employer read in the other direction: London Films works for Lean
        target = verbalize_hypothesis(
            registry.get("P108"), "London Films", "David Lean"
        )
        backend = SentenceScoreBackend({target: 0.9})
        result = align(
            linked_proposal(s_type="ORG", o_type="PER"), registry, gateway(backend)
        )
        assert result is not None
        assert (result.h, result.t) == (1, 0)
        assert result.r == "P108"

    def test_all_scores_below_threshold_yield_none(self, registry):
        backend = SentenceScoreBackend({}, default=0.55)
        result = align(linked_proposal(), registry, gateway(backend))
        assert result is None

    def test_score_at_threshold_is_rejected(self, registry):
        # 0.5 survives the probability round-trip exactly, unlike 0.6
        target = verbalize_hypothesis(registry.get("P108"), "David Lean", "London Films")
        backend = SentenceScoreBackend({target: 0.5}, default=-1.0)
        config = AlignConfig(threshold=0.5)
        assert align(linked_proposal(), registry, gateway(backend), config) is None

    def test_constraint_violating_top_candidate_loses_to_runner_up(self, registry):
        # top score on P19 (LOC object required) with an ORG object;
        # runner-up P108 passes and clears the threshold
        p19 = verbalize_hypothesis(registry.get("P19"), "David Lean", "London Films")
        p108 = verbalize_hypothesis(registry.get("P108"), "David Lean", "London Films")
        backend = SentenceScoreBackend({p19: 0.95, p108: 0.7})
        result = align(linked_proposal(), registry, gateway(backend))
        assert result is not None
        assert result.r == "P108"
        assert result.fused_score == pytest.approx(0.7)

    def test_constraints_disabled_lets_top_candidate_win(self, registry):
        p19 = verbalize_hypothesis(registry.get("P19"), "Acme", "London Films")
        backend = SentenceScoreBackend({p19: 0.95})
        proposal = linked_proposal(s="Acme", s_type="ORG", o_type="ORG")
        config = AlignConfig(apply_type_constraints=False)
        result = align(proposal, registry, gateway(backend), config)
        assert result is not None
        assert result.r == "P19"

    def test_tie_breaks_to_lower_registry_index_forward_first(self, registry):
        small = registry.restricted_to(["P22", "P25"])
        backend = SentenceScoreBackend({}, default=0.8)  # every hypothesis ties
        result = align(
            linked_proposal(s_type="PER", o_type="PER"), small, gateway(backend)
        )
        assert result is not None
        assert result.r == "P22"  # first in registry order
        assert (result.h, result.t) == (0, 1)  # forward beats inverse

    def test_unlinked_proposal_rejected(self, registry):
        with pytest.raises(ValueError):
            align(ProposalTriple("A", "b", "C"), registry, gateway(SentenceScoreBackend({})))

    def test_scoring_failure_raises_unavailable(self, registry):
        target = verbalize_hypothesis(registry.get("P22"), "David Lean", "London Films")
        backend = SentenceScoreBackend({}, fail_sentences={target})
        with pytest.raises(ScoringUnavailableError):
            align(linked_proposal(), registry, gateway(backend))

    def test_emitted_nli_score_always_above_threshold(self, registry):
        config = AlignConfig(threshold=0.3)
        for default in (0.1, 0.29, 0.3, 0.31, 0.8):
            backend = SentenceScoreBackend({}, default=default)
            result = align(
                linked_proposal(), registry, gateway(backend), config
            )
            if result is not None:
                assert result.fused_score > config.threshold

    def test_threshold_validation(self):
        with pytest.raises(ValueError):
            AlignConfig(threshold=1.0)
        with pytest.raises(ValueError):
            AlignConfig(threshold=-1.0)

    def test_argmax_invariant_under_per_hypothesis_logit_shift(self, registry):
        # shifting all four logits of each hypothesis by its own constant
        # leaves every fused score, and hence the selection, unchanged
        import random

        from docaug.scoring import RawNliLogits

        class LogitBackend:
            def __init__(self, shift_seed=None):
                self.shift_seed = shift_seed

            def score_many(self, requests_):
                out = []
                rng = random.Random(self.shift_seed)
                for req in requests_:
                    base = float(len(req.hypothesis) % 13) / 2.0
                    logits = [0.0, base, 1.0, base + 1.5]
                    if self.shift_seed is not None:
                        shift = rng.uniform(-30, 30)
                        logits = [x + shift for x in logits]
                    out.append(RawNliLogits(*logits))
                return out

        config = AlignConfig(threshold=0.0)
        plain = align(
            linked_proposal(), registry, gateway(LogitBackend()), config
        )
        shifted = align(
            linked_proposal(), registry, gateway(LogitBackend(shift_seed=5)), config
        )
        assert plain is not None and shifted is not None
        assert (plain.h, plain.t, plain.r) == (shifted.h, shifted.t, shifted.r)


@pytest.fixture
def two_entity_doc():
    return make_doc(
        "Test Doc",
        [["David", "Lean", "worked", "for", "London", "Films", "."]],
        [
            [("David Lean", 0, (0, 2), "PER")],
            [("London Films", 0, (4, 6), "ORG")],
        ],
        labels=[(0, 1, "P108")],
    )


class TestAlignDocument:
    def test_empty_proposals(self, registry, two_entity_doc):
        result = align_document([], two_entity_doc, registry, gateway(SentenceScoreBackend({})))
        assert result.triples == [] and result.unscored == []

    def test_duplicate_alignments_keep_highest_score(self, registry, two_entity_doc):
        p26 = verbalize_hypothesis(registry.get("P26"), "David Lean", "London Films")
        backend = SentenceScoreBackend({p26: 0.9})
        proposals = [
            linked_proposal(r="partner of", s_type="PER", o_type="PER"),
            linked_proposal(r="companion of", s_type="PER", o_type="PER"),
        ]
        result = align_document(
            proposals, two_entity_doc, registry, gateway(backend)
        )
        assert len(result.triples) == 1
        assert result.triples[0].r == "P26"

    def test_existing_gold_label_excluded(self, registry, two_entity_doc):
        proposal = linked_proposal(r="employer")  # direct match to P108 = gold
        result = align_document(
            [proposal], two_entity_doc, registry, gateway(SentenceScoreBackend({}))
        )
        assert result.triples == []

    def test_output_disjoint_from_gold(self, registry, two_entity_doc):
        proposals = [
            linked_proposal(r="employer"),
            linked_proposal(r="spouse"),
        ]
        result = align_document(
            proposals, two_entity_doc, registry, gateway(SentenceScoreBackend({}))
        )
        gold = {l.key for l in two_entity_doc.labels}
        assert all(t.key not in gold for t in result.triples)

    def test_stable_ordering_by_key(self, registry, two_entity_doc):
        proposals = [
            linked_proposal(r="spouse"),  # P26
            linked_proposal(r="sibling"),  # P3373
            linked_proposal(r="father"),  # P22
        ]
        result = align_document(
            proposals, two_entity_doc, registry, gateway(SentenceScoreBackend({}))
        )
        keys = [t.key for t in result.triples]
        assert keys == sorted(keys)

    def test_unscored_proposals_reported_not_dropped_silently(
        self, registry, two_entity_doc
    ):
        target = verbalize_hypothesis(registry.get("P22"), "David Lean", "London Films")
        backend = SentenceScoreBackend({}, fail_sentences={target})
        result = align_document(
            [linked_proposal()], two_entity_doc, registry, gateway(backend)
        )
        assert result.triples == []
        assert len(result.unscored) == 1

    def test_wrong_document_rejected(self, registry, two_entity_doc):
        with pytest.raises(ValueError):
            align_document(
                [linked_proposal(title="Other Doc")],
                two_entity_doc,
                registry,
                gateway(SentenceScoreBackend({})),
            )


class TestBruteForceEquivalence:
    """align() must match a straight-line scan: enumerate both directions
    for every relation, filter by type constraints, take the argmax, and
    apply the threshold."""

    def oracle(self, proposal, registry, fused_by_sentence, config):
        candidates = []
        for rel in registry:
            for direction in ("forward", "inverse"):
                if direction == "forward":
                    names = (proposal.subject_surface, proposal.object_surface)
                    types = (proposal.subject_type, proposal.object_type)
                    ht = (proposal.subject_idx, proposal.object_idx)
                else:
                    names = (proposal.object_surface, proposal.subject_surface)
                    types = (proposal.object_type, proposal.subject_type)
                    ht = (proposal.object_idx, proposal.subject_idx)
                sentence = verbalize_hypothesis(rel, *names)
                fused = fused_by_sentence(sentence)
                if config.apply_type_constraints:
                    if rel.subject_types and types[0] not in rel.subject_types:
                        continue
                    if rel.object_types and types[1] not in rel.object_types:
                        continue
                candidates.append((fused, rel.id, direction, ht))
        if not candidates:
            return None
        best = max(candidates, key=lambda c: c[0])  # max() keeps the earliest
        if best[0] <= config.threshold:
            return None
        return (best[3][0], best[3][1], best[1])

    def test_agreement_with_lexical_mock(self, registry):
        config = AlignConfig()
        backend = LexicalMockBackend()
        scorer = gateway(backend)

        def fused_by(proposal):
            def inner(sentence):
                import re

                def toks(text):
                    return set(re.findall(r"[a-z0-9]+", text.lower()))

                exclude = toks(proposal.subject_surface) | toks(
                    proposal.object_surface
                )
                premise = (
                    f"{proposal.subject_surface} {proposal.relation_phrase} "
                    f"{proposal.object_surface}."
                )
                a = toks(premise) - exclude
                b = toks(sentence) - exclude
                union = a | b
                j = len(a & b) / len(union) if union else 0.0
                return j - (1 - j)

            return inner

        phrases = [
            "the spouse of is",
            "has as their sibling",
            "the father of is",
            "is located in or next to body of water",
            "nonsense phrase entirely",
        ]
        for i, phrase in enumerate(phrases):
            proposal = linked_proposal(r=phrase, s_type="PER", o_type="PER")
            got = align(proposal, registry, scorer, config)
            expected = self.oracle(proposal, registry, fused_by(proposal), config)
            got_key = None if got is None else (got.h, got.t, got.r)
            assert got_key == expected, f"disagreement on phrase {phrase!r}"
