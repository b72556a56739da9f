"""Augment document-level relation-extraction datasets.

Free-form relation triples are elicited from a chat-completion LLM
endpoint, aligned to a 96-type relation inventory by natural-language-
inference entailment scoring, and either merged into training sets as
distant labels or routed through a two-annotator-plus-adjudicator human
verification workflow for test sets.
"""
from .aligner import AlignConfig, AlignedTriple, align, align_document, direct_match
from .corpus import (
    CorpusStats,
    Document,
    Entity,
    GoldTriple,
    Mention,
    dataset_stats,
    diff_triples,
    entity_surface_index,
    load_corpus,
    normalize_surface,
    save_corpus,
)
from .evaluation import EvalReport, exact_match_prf, f1_from_pr, recall_on_subset
from .pipeline import PipelineConfig, RunManifest, merge_into_dataset, run_pipeline
from .proposer import (
    LlmConfig,
    PromptBundle,
    ProposalTriple,
    build_continuation_prompt,
    build_initial_prompt,
    link_and_filter,
    parse_triples,
    propose,
)
from .registry import (
    Hypothesis,
    Registry,
    RelationType,
    check_type_constraint,
    derive_type_constraints,
    enumerate_hypotheses,
    load_registry,
    verbalize_hypothesis,
    verbalize_premise,
)
from .scoring import (
    EntailmentScore,
    LexicalMockBackend,
    RawNliLogits,
    ScorerGateway,
    fuse_scores,
    score_batch,
)
from .verification import (
    AdjudicationOutcome,
    AdjudicationReport,
    Decision,
    VerificationStore,
    VerificationTask,
    adjudicate,
    apply_verification,
    export_tasks,
)

__version__ = "0.1.0"

__all__ = [
    "AlignConfig",
    "AlignedTriple",
    "AdjudicationOutcome",
    "AdjudicationReport",
    "CorpusStats",
    "Decision",
    "Document",
    "EntailmentScore",
    "Entity",
    "EvalReport",
    "GoldTriple",
    "Hypothesis",
    "LexicalMockBackend",
    "LlmConfig",
    "Mention",
    "PipelineConfig",
    "PromptBundle",
    "ProposalTriple",
    "RawNliLogits",
    "Registry",
    "RelationType",
    "RunManifest",
    "ScorerGateway",
    "VerificationStore",
    "VerificationTask",
    "adjudicate",
    "align",
    "align_document",
    "apply_verification",
    "build_continuation_prompt",
    "build_initial_prompt",
    "check_type_constraint",
    "dataset_stats",
    "derive_type_constraints",
    "diff_triples",
    "direct_match",
    "entity_surface_index",
    "enumerate_hypotheses",
    "exact_match_prf",
    "export_tasks",
    "f1_from_pr",
    "fuse_scores",
    "link_and_filter",
    "load_corpus",
    "load_registry",
    "merge_into_dataset",
    "normalize_surface",
    "parse_triples",
    "propose",
    "recall_on_subset",
    "run_pipeline",
    "save_corpus",
    "score_batch",
    "verbalize_hypothesis",
    "verbalize_premise",
]
