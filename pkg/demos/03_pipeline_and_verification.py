"""The full loop on the bundled fixture: pipeline run in test mode,
verification tasks, two annotators plus an adjudicator, and the final
verified corpus.

Run from the repository root:  python demos/03_pipeline_and_verification.py
"""
import tempfile
from pathlib import Path

from docaug import (
    PipelineConfig,
    VerificationStore,
    adjudicate,
    apply_verification,
    dataset_stats,
    load_corpus,
    run_pipeline,
)
from docaug.pipeline import read_candidates
from docaug.verification import read_tasks

FIXTURE = Path(__file__).parent.parent / "tests" / "data" / "fixture5"

with tempfile.TemporaryDirectory() as tmp:
    config = PipelineConfig.from_file(FIXTURE / "config.json")
    config.mode = "test"  # candidates go to human verification, not merge
    config.output_dir = tmp

    manifest = run_pipeline(config)
    print("pipeline totals:", manifest.totals)

    tasks = read_tasks(Path(tmp) / "verification_tasks.jsonl")
    print(f"\n{len(tasks)} verification tasks, e.g.:")
    print(f"  statement: {tasks[0].statement}")
    print(f"  document:  {tasks[0].text[:90]}...")

    # two annotators work through the queue; they disagree on one task
    store = VerificationStore(Path(tmp) / "store.json")
    store.add_tasks(tasks)
    for i, task in enumerate(tasks):
        first = "accept" if i != 1 else "accept"
        second = "accept" if i != 1 else "reject"
        store.record_decision("ann-1", "annotator", task.task_id, first)
        store.record_decision("ann-2", "annotator", task.task_id, second)
    conflicted = [t for t in store.tasks() if t.status == "conflicted"]
    print(f"\nafter two annotators: {len(conflicted)} conflict(s)")

    # the adjudicator resolves the conflict
    for task in conflicted:
        store.record_decision("judge", "adjudicator", task.task_id, "reject")

    report = adjudicate(store.decisions())
    print(f"resolved {report.resolved} tasks "
          f"({report.accepted} accepted, {report.rejected} rejected); "
          f"acceptance rate {100 * report.acceptance_rate:.2f}%")

    # merge the accepted candidates into the test corpus
    docs = load_corpus(FIXTURE / "corpus.json")
    candidates = read_candidates(Path(tmp) / "candidates.jsonl")
    verified, apply_report = apply_verification(docs, report.outcomes, candidates)
    print(f"\nverified corpus: {dataset_stats(docs).triple_count} -> "
          f"{dataset_stats(verified).triple_count} triples "
          f"(+{apply_report.added}, {apply_report.rejected} rejected)")
