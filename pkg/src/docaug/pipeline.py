"""Full-run orchestration: propose, align, merge, and run reports.

A run loads the corpus and registry, elicits proposals per document
(bounded concurrency, order-stable assembly), aligns them, writes the
candidate file, and then either merges the new triples into the dataset
(train mode, distant labels with empty evidence) or exports them as
human verification tasks (test mode). All data outputs are deterministic
given replayed transcripts.
"""
from __future__ import annotations

import json
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Sequence

from .aligner import AlignConfig, AlignedTriple, AlignDocumentResult, align_document
from .corpus import (
    Document,
    load_corpus,
    save_corpus,
    with_added_labels,
)
from .errors import BackendExhaustedError, ConfigError
from .proposer import (
    ChatClient,
    HttpChatClient,
    LlmConfig,
    ProposeResult,
    ReplayChatClient,
    propose,
    transcript_filename,
)
from .registry import Registry, load_registry
from .scoring import HttpNliBackend, LexicalMockBackend, NliBackend, ScorerGateway
from .verification import export_tasks, write_tasks

logger = logging.getLogger(__name__)


@dataclass
class NliSettings:
    backend: str = "http"  # "http" | "lexical"
    endpoint: str = ""
    batch_size: int = 32
    retries: int = 2
    backoff: float = 0.1


@dataclass
class LlmSettings:
    backend: str = "http"  # "http" | "replay"
    transcript_dir: str = ""
    concurrency: int = 4
    config: LlmConfig = field(default_factory=LlmConfig)


@dataclass
class PipelineConfig:
    corpus_path: str
    output_dir: str
    mode: str = "train"  # "train" | "test"
    registry_path: str | None = None
    constraints_path: str | None = None
    demonstration_path: str | None = None
    threshold: float = 0.6
    apply_type_constraints: bool = True
    force_distant: bool = False
    llm: LlmSettings = field(default_factory=LlmSettings)
    nli: NliSettings = field(default_factory=NliSettings)

    @classmethod
    def from_file(cls, path: str | Path) -> "PipelineConfig":
        try:
            raw = json.loads(Path(path).read_text(encoding="utf-8"))
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
        return cls.from_dict(raw, base_dir=Path(path).parent)

    @classmethod
    def from_dict(cls, raw: dict, base_dir: Path | None = None) -> "PipelineConfig":
        def resolve(p: str | None) -> str | None:
            if p is None or base_dir is None:
                return p
            return str((base_dir / p).resolve()) if not Path(p).is_absolute() else p

        for key in ("corpus", "output_dir"):
            if key not in raw:
                raise ConfigError(f"config missing required key {key!r}")
        mode = raw.get("mode", "train")
        if mode not in ("train", "test"):
            raise ConfigError(f"mode must be 'train' or 'test', got {mode!r}")
        llm_raw = dict(raw.get("llm", {}))
        llm_backend = llm_raw.pop("backend", "http")
        transcript_dir = resolve(llm_raw.pop("transcript_dir", "")) or ""
        concurrency = llm_raw.pop("concurrency", 4)
        if llm_backend not in ("http", "replay"):
            raise ConfigError(f"llm backend must be 'http' or 'replay', got {llm_backend!r}")
        try:
            llm_config = LlmConfig(**llm_raw)
        except TypeError as exc:
            raise ConfigError(f"bad llm settings: {exc}") from exc
        nli_raw = dict(raw.get("nli", {}))
        if nli_raw.get("backend", "http") not in ("http", "lexical"):
            raise ConfigError(f"nli backend must be 'http' or 'lexical'")
        try:
            nli = NliSettings(**nli_raw)
        except TypeError as exc:
            raise ConfigError(f"bad nli settings: {exc}") from exc
        try:
            return cls(
                corpus_path=resolve(raw["corpus"]),
                output_dir=resolve(raw["output_dir"]),
                mode=mode,
                registry_path=resolve(raw.get("registry")),
                constraints_path=resolve(raw.get("constraints")),
                demonstration_path=resolve(raw.get("demonstration")),
                threshold=raw.get("threshold", 0.6),
                apply_type_constraints=raw.get("apply_type_constraints", True),
                force_distant=raw.get("force_distant", False),
                llm=LlmSettings(llm_backend, transcript_dir, concurrency, llm_config),
                nli=nli,
            )
        except TypeError as exc:
            raise ConfigError(f"bad config: {exc}") from exc


def default_demonstration() -> str:
    return resources.files("docaug").joinpath("data", "demonstration.txt").read_text("utf-8")


def build_chat_client(settings: LlmSettings) -> ChatClient:
    if settings.backend == "replay":
        if not settings.transcript_dir:
            raise ConfigError("replay mode needs llm.transcript_dir")
        return ReplayChatClient(settings.transcript_dir)
    return HttpChatClient(settings.config)


def build_nli_backend(settings: NliSettings) -> NliBackend:
    if settings.backend == "lexical":
        return LexicalMockBackend()
    if not settings.endpoint:
        raise ConfigError("http NLI backend needs nli.endpoint")
    return HttpNliBackend(settings.endpoint)


def merge_into_dataset(
    documents: Sequence[Document], aligned: Sequence[AlignedTriple]
) -> list[Document]:
    """Append aligned triples as distant labels with empty evidence.

    Original labels are untouched; duplicates (against gold or among the
    aligned set) are skipped; unknown titles raise.
    """
    merged, added, duplicates = with_added_labels(
        documents, ((a.doc_title, a.h, a.t, a.r) for a in aligned)
    )
    if duplicates:
        logger.info("merge skipped %d duplicate triples", duplicates)
    logger.info("merged %d new triples", added)
    return merged


@dataclass
class DocumentOutcome:
    title: str
    proposals: int
    aligned: int
    skipped_lines: int
    dropped: int
    unscored: int
    failed: bool
    failure: str | None = None


@dataclass
class RunManifest:
    config: dict
    documents: list[DocumentOutcome]
    totals: dict
    outputs: dict
    started_at: str
    wall_seconds: float

    def to_json(self) -> dict:
        return {
            "config": self.config,
            "documents": [vars(d) for d in self.documents],
            "totals": self.totals,
            "outputs": self.outputs,
            "started_at": self.started_at,
            "wall_seconds": self.wall_seconds,
        }


def _candidate_record(a: AlignedTriple) -> dict:
    return {
        "title": a.doc_title,
        "h": a.h,
        "t": a.t,
        "r": a.r,
        "score": a.fused_score,
        "provenance": a.provenance,
        "premise": a.premise,
        "hypothesis": a.chosen_hypothesis,
    }


def read_candidates(path: str | Path) -> list[AlignedTriple]:
    out = []
    with Path(path).open("r", encoding="utf-8") as f:
        for line in f:
            if not line.strip():
                continue
            rec = json.loads(line)
            out.append(
                AlignedTriple(
                    doc_title=rec["title"],
                    h=rec["h"],
                    t=rec["t"],
                    r=rec["r"],
                    fused_score=rec["score"],
                    provenance=rec["provenance"],
                    premise=rec.get("premise", ""),
                    chosen_hypothesis=rec.get("hypothesis", ""),
                )
            )
    return out


def write_candidates(candidates: Sequence[AlignedTriple], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8") as f:
        for a in candidates:
            f.write(json.dumps(_candidate_record(a), ensure_ascii=False) + "\n")


def _write_jsonl(records: Sequence[dict], path: Path) -> None:
    with path.open("w", encoding="utf-8") as f:
        for rec in records:
            f.write(json.dumps(rec, ensure_ascii=False) + "\n")


def _process_document(
    doc: Document,
    config: PipelineConfig,
    client: ChatClient,
    scorer: ScorerGateway,
    registry: Registry,
    demonstration: str,
) -> tuple[ProposeResult, AlignDocumentResult]:
    proposed = propose(doc, config.llm.config, client, demonstration)
    if proposed.failed:
        return proposed, AlignDocumentResult([], [])
    align_config = AlignConfig(config.threshold, config.apply_type_constraints)
    aligned = align_document(proposed.proposals, doc, registry, scorer, align_config)
    return proposed, aligned


def run_pipeline(config: PipelineConfig) -> RunManifest:
    """Execute propose -> align -> merge/export and write all artifacts."""
    started = time.time()
    started_at = time.strftime("%Y-%m-%dT%H:%M:%S%z", time.localtime(started))

    # fail fast on unreadable inputs before any network traffic
    registry = load_registry(config.registry_path, config.constraints_path)
    documents = load_corpus(config.corpus_path, frozenset(registry.relation_ids()))
    demonstration = (
        Path(config.demonstration_path).read_text(encoding="utf-8")
        if config.demonstration_path
        else default_demonstration()
    )
    if not demonstration.strip():
        raise ConfigError("demonstration text must be non-empty")
    out_dir = Path(config.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    client = build_chat_client(config.llm)
    scorer = ScorerGateway(
        build_nli_backend(config.nli),
        batch_size=config.nli.batch_size,
        retries=config.nli.retries,
        backoff=config.nli.backoff,
    )

    workers = max(1, config.llm.concurrency)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        results = list(
            pool.map(
                lambda doc: _process_document(
                    doc, config, client, scorer, registry, demonstration
                ),
                documents,
            )
        )

    transcripts_dir = out_dir / "transcripts"
    transcripts_dir.mkdir(exist_ok=True)
    outcomes: list[DocumentOutcome] = []
    all_candidates: list[AlignedTriple] = []
    failures: list[dict] = []
    unscored_records: list[dict] = []
    for doc, (proposed, aligned) in zip(documents, results):
        if proposed.transcript:
            payload = {
                "title": doc.title,
                "rounds": [
                    {"prompt": tr.prompt_turns, "answer": tr.answer}
                    for tr in proposed.transcript
                ],
            }
            (transcripts_dir / transcript_filename(doc.title)).write_text(
                json.dumps(payload, ensure_ascii=False, indent=1) + "\n",
                encoding="utf-8",
            )
        if proposed.failed:
            failures.append({"title": doc.title, "error": proposed.failure})
        for p, reason in aligned.unscored:
            unscored_records.append(
                {
                    "title": doc.title,
                    "subject": p.subject_surface,
                    "relation": p.relation_phrase,
                    "object": p.object_surface,
                    "reason": reason,
                }
            )
        all_candidates.extend(aligned.triples)
        outcomes.append(
            DocumentOutcome(
                title=doc.title,
                proposals=len(proposed.proposals),
                aligned=len(aligned.triples),
                skipped_lines=len(proposed.skipped_lines),
                dropped=len(proposed.dropped),
                unscored=len(aligned.unscored),
                failed=proposed.failed,
                failure=proposed.failure,
            )
        )

    attempted = len(documents)
    failed_count = sum(1 for o in outcomes if o.failed)
    if attempted and failed_count == attempted:
        raise BackendExhaustedError(
            f"all {attempted} documents failed; first error: {failures[0]['error']}"
        )

    outputs = {"candidates": str(out_dir / "candidates.jsonl")}
    write_candidates(all_candidates, out_dir / "candidates.jsonl")
    _write_jsonl(failures, out_dir / "failures.jsonl")
    _write_jsonl(unscored_records, out_dir / "unscored.jsonl")
    outputs["failures"] = str(out_dir / "failures.jsonl")
    outputs["unscored"] = str(out_dir / "unscored.jsonl")

    merge_now = config.mode == "train" or config.force_distant
    if config.mode == "test":
        tasks = export_tasks(all_candidates, documents, registry)
        write_tasks(tasks, out_dir / "verification_tasks.jsonl")
        outputs["verification_tasks"] = str(out_dir / "verification_tasks.jsonl")
    if merge_now:
        merged = merge_into_dataset(documents, all_candidates)
        save_corpus(merged, out_dir / "augmented.json")
        outputs["augmented"] = str(out_dir / "augmented.json")

    totals = {
        "documents": attempted,
        "failed_documents": failed_count,
        "proposals": sum(o.proposals for o in outcomes),
        "aligned": sum(o.aligned for o in outcomes),
        "skipped_lines": sum(o.skipped_lines for o in outcomes),
        "dropped": sum(o.dropped for o in outcomes),
        "unscored": sum(o.unscored for o in outcomes),
    }
    config_snapshot = {
        "corpus": config.corpus_path,
        "mode": config.mode,
        "threshold": config.threshold,
        "apply_type_constraints": config.apply_type_constraints,
        "rounds": config.llm.config.rounds,
        "llm_backend": config.llm.backend,
        "nli_backend": config.nli.backend,
        "force_distant": config.force_distant,
    }
    manifest = RunManifest(
        config=config_snapshot,
        documents=outcomes,
        totals=totals,
        outputs=outputs,
        started_at=started_at,
        wall_seconds=round(time.time() - started, 3),
    )
    (out_dir / "manifest.json").write_text(
        json.dumps(manifest.to_json(), ensure_ascii=False, indent=1) + "\n",
        encoding="utf-8",
    )
    return manifest
