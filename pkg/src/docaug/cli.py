"""Command-line interface.

Subcommands: propose, align, merge, run, stats, diff, eval,
export-verify, import-verify, adjudicate, serve. Exit codes: 0 success,
1 usage/config error, 2 data error, 3 backend exhaustion.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import pipeline as pl
from .aligner import AlignConfig, align_document
from .corpus import dataset_stats, diff_triples, load_corpus, save_corpus
from .errors import (
    BackendExhaustedError,
    ConfigError,
    DataError,
    DocaugError,
)
from .evaluation import exact_match_prf, format_pct
from .proposer import ProposalTriple
from .registry import load_registry
from .scoring import ScorerGateway
from .verification import (
    VerificationStore,
    adjudicate,
    apply_verification,
    export_tasks,
    read_decisions,
    read_tasks,
    write_decisions,
    write_tasks,
)

logger = logging.getLogger(__name__)


def _cmd_stats(args: argparse.Namespace) -> int:
    docs = load_corpus(args.corpus)
    stats = dataset_stats(docs)
    if args.json:
        print(
            json.dumps(
                {
                    "doc_count": stats.doc_count,
                    "entity_count": stats.entity_count,
                    "triple_count": stats.triple_count,
                    "per_relation": stats.per_relation,
                },
                ensure_ascii=False,
            )
        )
    else:
        print(f"documents: {stats.doc_count}")
        print(f"entities:  {stats.entity_count}")
        print(f"triples:   {stats.triple_count}")
        if args.per_relation:
            for r, n in sorted(stats.per_relation.items(), key=lambda kv: -kv[1]):
                print(f"  {r}: {n}")
    return 0


def _cmd_diff(args: argparse.Namespace) -> int:
    superset = load_corpus(args.superset)
    base = load_corpus(args.base)
    delta = diff_triples(superset, base)
    print(f"triples in superset and not in base: {len(delta)}")
    if args.out:
        with open(args.out, "w", encoding="utf-8") as f:
            for title, triple in delta:
                f.write(
                    json.dumps(
                        {"title": title, "h": triple.h, "t": triple.t, "r": triple.r},
                        ensure_ascii=False,
                    )
                    + "\n"
                )
        print(f"wrote {args.out}")
    return 0


def _cmd_run(args: argparse.Namespace) -> int:
    config = pl.PipelineConfig.from_file(args.config)
    if args.force_distant:
        config.force_distant = True
    manifest = pl.run_pipeline(config)
    totals = manifest.totals
    print(
        f"documents={totals['documents']} failed={totals['failed_documents']} "
        f"proposals={totals['proposals']} aligned={totals['aligned']}"
    )
    for name, path in manifest.outputs.items():
        print(f"{name}: {path}")
    return 0


def _cmd_propose(args: argparse.Namespace) -> int:
    config = pl.PipelineConfig.from_file(args.config)
    registry = load_registry(config.registry_path, config.constraints_path)
    docs = load_corpus(
        args.corpus or config.corpus_path, frozenset(registry.relation_ids())
    )
    demonstration = (
        Path(config.demonstration_path).read_text(encoding="utf-8")
        if config.demonstration_path
        else pl.default_demonstration()
    )
    client = pl.build_chat_client(config.llm)
    out = Path(args.out)
    n_ok = n_failed = 0
    with out.open("w", encoding="utf-8") as f:
        for doc in docs:
            result = pl.propose(doc, config.llm.config, client, demonstration)
            if result.failed:
                n_failed += 1
                logger.warning("document %r failed: %s", doc.title, result.failure)
                continue
            n_ok += 1
            for p in result.proposals:
                f.write(
                    json.dumps(
                        {
                            "title": p.doc_title,
                            "round": p.round,
                            "line_index": p.line_index,
                            "subject": p.subject_surface,
                            "relation": p.relation_phrase,
                            "object": p.object_surface,
                            "subject_idx": p.subject_idx,
                            "object_idx": p.object_idx,
                            "subject_type": p.subject_type,
                            "object_type": p.object_type,
                        },
                        ensure_ascii=False,
                    )
                    + "\n"
                )
    print(f"proposed for {n_ok} documents ({n_failed} failed); wrote {out}")
    if n_ok == 0 and n_failed > 0:
        raise BackendExhaustedError("every document failed during proposal")
    return 0


def _read_proposals(path: str) -> dict[str, list[ProposalTriple]]:
    by_title: dict[str, list[ProposalTriple]] = {}
    with open(path, "r", encoding="utf-8") as f:
        for line in f:
            if not line.strip():
                continue
            rec = json.loads(line)
            p = ProposalTriple(
                subject_surface=rec["subject"],
                relation_phrase=rec["relation"],
                object_surface=rec["object"],
                doc_title=rec["title"],
                round=rec.get("round", 0),
                line_index=rec.get("line_index", 0),
                subject_idx=rec.get("subject_idx"),
                object_idx=rec.get("object_idx"),
                subject_type=rec.get("subject_type"),
                object_type=rec.get("object_type"),
            )
            by_title.setdefault(p.doc_title, []).append(p)
    return by_title


def _cmd_align(args: argparse.Namespace) -> int:
    config = pl.PipelineConfig.from_file(args.config)
    registry = load_registry(config.registry_path, config.constraints_path)
    docs = load_corpus(
        args.corpus or config.corpus_path, frozenset(registry.relation_ids())
    )
    by_title = {d.title: d for d in docs}
    proposals = _read_proposals(args.proposals)
    scorer = ScorerGateway(
        pl.build_nli_backend(config.nli),
        batch_size=config.nli.batch_size,
        retries=config.nli.retries,
        backoff=config.nli.backoff,
    )
    align_config = AlignConfig(config.threshold, config.apply_type_constraints)
    candidates = []
    for title in (d.title for d in docs):
        if title not in proposals:
            continue
        doc = by_title[title]
        result = align_document(proposals[title], doc, registry, scorer, align_config)
        candidates.extend(result.triples)
    pl.write_candidates(candidates, args.out)
    print(f"aligned {len(candidates)} candidate triples; wrote {args.out}")
    return 0


def _cmd_merge(args: argparse.Namespace) -> int:
    docs = load_corpus(args.corpus)
    candidates = pl.read_candidates(args.candidates)
    merged = pl.merge_into_dataset(docs, candidates)
    save_corpus(merged, args.out)
    before = dataset_stats(docs).triple_count
    after = dataset_stats(merged).triple_count
    print(f"triples: {before} -> {after} (+{after - before}); wrote {args.out}")
    return 0


def _read_predictions(path: str) -> list[tuple[str, int, int, str]]:
    preds = []
    with open(path, "r", encoding="utf-8") as f:
        for line in f:
            if not line.strip():
                continue
            rec = json.loads(line)
            preds.append((rec["title"], rec["h"], rec["t"], rec["r"]))
    return preds


def _cmd_eval(args: argparse.Namespace) -> int:
    docs = load_corpus(args.gold)
    predictions = _read_predictions(args.pred)
    subsets = {}
    for spec in args.subset or []:
        if "=" not in spec:
            raise ConfigError(f"--subset expects NAME=FILE, got {spec!r}")
        name, path = spec.split("=", 1)
        subsets[name] = set(_read_predictions(path))
    report = exact_match_prf(predictions, docs, subsets or None)
    print(report.render())
    if args.out:
        Path(args.out).write_text(
            json.dumps(report.to_json(), ensure_ascii=False, indent=1) + "\n",
            encoding="utf-8",
        )
    return 0


def _cmd_export_verify(args: argparse.Namespace) -> int:
    registry = load_registry()
    docs = load_corpus(args.corpus, frozenset(registry.relation_ids()))
    candidates = pl.read_candidates(args.candidates)
    tasks = export_tasks(candidates, docs, registry)
    write_tasks(tasks, args.out)
    if args.store:
        store = VerificationStore.open(args.store)
        added = store.add_tasks(tasks)
        print(f"store {args.store}: {added} new tasks")
    print(f"exported {len(tasks)} verification tasks to {args.out}")
    return 0


def _cmd_import_verify(args: argparse.Namespace) -> int:
    store = VerificationStore.open(args.store)
    if args.tasks:
        added = store.add_tasks(read_tasks(args.tasks))
        print(f"added {added} tasks")
    imported = skipped = 0
    if args.decisions:
        for d in read_decisions(args.decisions):
            try:
                store.record_decision(
                    d.annotator_id,
                    args.role,
                    d.task_id,
                    d.verdict,
                    d.request_id,
                )
                imported += 1
            except DocaugError as exc:
                skipped += 1
                logger.warning("skipped decision on %s: %s", d.task_id, exc)
        print(f"imported {imported} decisions ({skipped} skipped)")
    return 0


def _cmd_adjudicate(args: argparse.Namespace) -> int:
    if args.store:
        store = VerificationStore.load(args.store)
        decisions = store.decisions()
        tasks = {t.task_id: t for t in store.tasks()}
    elif args.decisions:
        decisions = read_decisions(args.decisions)
        tasks = {}
    else:
        raise ConfigError("adjudicate needs --store or --decisions")
    report = adjudicate(decisions)
    print(
        f"resolved={report.resolved} accepted={report.accepted} "
        f"rejected={report.rejected} conflicted={len(report.conflicted)} "
        f"pending={len(report.pending)}"
    )
    print(f"acceptance rate: {format_pct(100.0 * report.acceptance_rate)}%")
    by_provenance: dict[str, list[int]] = {}
    for outcome in report.outcomes:
        task = tasks.get(outcome.task_id)
        if task is None:
            continue
        counts = by_provenance.setdefault(task.provenance, [0, 0])
        counts[0] += 1
        if outcome.final == "accept":
            counts[1] += 1
    for provenance, (total, accepted) in sorted(by_provenance.items()):
        print(
            f"  {provenance}: {accepted}/{total} accepted "
            f"({format_pct(100.0 * accepted / total)}%)"
        )
    if args.out_outcomes:
        with open(args.out_outcomes, "w", encoding="utf-8") as f:
            for o in report.outcomes:
                f.write(
                    json.dumps(
                        {"task_id": o.task_id, "final": o.final, "path": o.path}
                    )
                    + "\n"
                )
    if args.apply:
        if not (args.corpus and args.candidates and args.out):
            raise ConfigError("--apply needs --corpus, --candidates, and --out")
        docs = load_corpus(args.corpus)
        candidates = pl.read_candidates(args.candidates)
        merged, apply_report = apply_verification(docs, report.outcomes, candidates)
        save_corpus(merged, args.out)
        print(
            f"applied: +{apply_report.added} triples "
            f"({apply_report.rejected} rejected, "
            f"{apply_report.unresolved} unresolved, "
            f"{apply_report.duplicates} duplicates); wrote {args.out}"
        )
    return 0


def _cmd_serve(args: argparse.Namespace) -> int:
    from .service import serve

    if args.tasks:
        store = VerificationStore.open(args.store)
        store.add_tasks(read_tasks(args.tasks))
    serve(args.store, args.roster, host=args.host, port=args.port)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="docaug",
        description=(
            "Augment document-level relation-extraction datasets with "
            "LLM-proposed, NLI-aligned triples."
        ),
    )
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("stats", help="corpus statistics")
    p.add_argument("corpus")
    p.add_argument("--per-relation", action="store_true")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=_cmd_stats)

    p = sub.add_parser("diff", help="triples in a superset corpus missing from a base")
    p.add_argument("superset")
    p.add_argument("base")
    p.add_argument("--out")
    p.set_defaults(func=_cmd_diff)

    p = sub.add_parser("run", help="full pipeline: propose, align, merge/export")
    p.add_argument("--config", required=True)
    p.add_argument(
        "--force-distant",
        action="store_true",
        help="merge test-mode candidates without verification (watermarked)",
    )
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("propose", help="elicit proposals only")
    p.add_argument("--config", required=True)
    p.add_argument("--corpus")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_propose)

    p = sub.add_parser("align", help="align stored proposals to relation types")
    p.add_argument("--config", required=True)
    p.add_argument("--proposals", required=True)
    p.add_argument("--corpus")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_align)

    p = sub.add_parser("merge", help="merge candidate triples into a corpus")
    p.add_argument("--corpus", required=True)
    p.add_argument("--candidates", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_merge)

    p = sub.add_parser("eval", help="exact-match P/R/F1 of predictions vs gold")
    p.add_argument("--pred", required=True)
    p.add_argument("--gold", required=True)
    p.add_argument("--subset", action="append", metavar="NAME=FILE")
    p.add_argument("--out")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("export-verify", help="turn candidates into verification tasks")
    p.add_argument("--candidates", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--store")
    p.set_defaults(func=_cmd_export_verify)

    p = sub.add_parser("import-verify", help="ingest external tasks/decisions")
    p.add_argument("--store", required=True)
    p.add_argument("--tasks")
    p.add_argument("--decisions")
    p.add_argument("--role", default="annotator", choices=["annotator", "adjudicator"])
    p.set_defaults(func=_cmd_import_verify)

    p = sub.add_parser("adjudicate", help="resolve decisions with the 2+1 rule")
    p.add_argument("--store")
    p.add_argument("--decisions")
    p.add_argument("--out-outcomes")
    p.add_argument("--apply", action="store_true")
    p.add_argument("--corpus")
    p.add_argument("--candidates")
    p.add_argument("--out")
    p.set_defaults(func=_cmd_adjudicate)

    p = sub.add_parser("serve", help="run the annotation service")
    p.add_argument("--store", required=True)
    p.add_argument("--roster", required=True)
    p.add_argument("--tasks")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8321)
    p.set_defaults(func=_cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code in (0, None) else 1
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except BackendExhaustedError as exc:
        print(f"backend exhausted: {exc}", file=sys.stderr)
        return 3
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
