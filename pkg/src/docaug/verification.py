"""Human verification workflow: tasks, decisions, and 2+1 adjudication.

Candidate triples become verification tasks shown to two annotators;
matching verdicts resolve a task, a conflict calls in an adjudicator
whose verdict is final. Accepted candidates are merged into the test
corpus. Tasks and an append-only decision log live in a single-file
store that the annotation service mutates under a lock.
"""
from __future__ import annotations

import hashlib
import json
import logging
import os
import tempfile
import threading
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable, Literal, Sequence

from .aligner import AlignedTriple
from .corpus import Document, sentence_text_and_offsets, with_added_labels
from .errors import (
    DuplicateDecisionError,
    TaskStateError,
    UnknownTaskError,
    VerificationError,
)
from .registry import Registry, verbalize_hypothesis

logger = logging.getLogger(__name__)

Verdict = Literal["accept", "reject"]
TaskStatus = Literal["open", "conflicted", "resolved"]

VERDICTS = ("accept", "reject")


def task_id_for(title: str, h: int, t: int, r: str) -> str:
    """Stable task id: hash of the candidate triple's identity."""
    digest = hashlib.sha256(f"{title}\t{h}\t{t}\t{r}".encode("utf-8")).hexdigest()
    return digest[:16]


@dataclass
class Highlight:
    start: int
    end: int
    role: Literal["subject", "object"]


@dataclass
class TaskParagraph:
    text: str
    highlights: list[Highlight] = field(default_factory=list)


@dataclass
class VerificationTask:
    task_id: str
    doc_title: str
    text: str  # sentences joined, subject/object mentions delimited
    paragraphs: list[TaskParagraph]
    subject: str
    object: str
    relation_id: str
    relation_name: str
    statement: str  # the relation template instantiated with the names
    h: int
    t: int
    provenance: str = "nli"
    status: TaskStatus = "open"
    final_verdict: Verdict | None = None

    def to_json(self) -> dict:
        return {
            "task_id": self.task_id,
            "title": self.doc_title,
            "text": self.text,
            "paragraphs": [
                {
                    "text": p.text,
                    "highlights": [
                        {"start": hl.start, "end": hl.end, "role": hl.role}
                        for hl in p.highlights
                    ],
                }
                for p in self.paragraphs
            ],
            "subject": self.subject,
            "object": self.object,
            "r": self.relation_id,
            "relation_name": self.relation_name,
            "statement": self.statement,
            "h": self.h,
            "t": self.t,
            "provenance": self.provenance,
            "status": self.status,
            "final_verdict": self.final_verdict,
        }

    @classmethod
    def from_json(cls, data: dict) -> "VerificationTask":
        return cls(
            task_id=data["task_id"],
            doc_title=data["title"],
            text=data["text"],
            paragraphs=[
                TaskParagraph(
                    p["text"],
                    [Highlight(h["start"], h["end"], h["role"]) for h in p["highlights"]],
                )
                for p in data.get("paragraphs", [])
            ],
            subject=data["subject"],
            object=data["object"],
            relation_id=data["r"],
            relation_name=data.get("relation_name", data["r"]),
            statement=data["statement"],
            h=data["h"],
            t=data["t"],
            provenance=data.get("provenance", "nli"),
            status=data.get("status", "open"),
            final_verdict=data.get("final_verdict"),
        )


@dataclass(frozen=True)
class Decision:
    task_id: str
    annotator_id: str
    verdict: Verdict
    timestamp: str
    request_id: str | None = None

    def to_json(self) -> dict:
        return {
            "task_id": self.task_id,
            "annotator_id": self.annotator_id,
            "verdict": self.verdict,
            "timestamp": self.timestamp,
            "request_id": self.request_id,
        }

    @classmethod
    def from_json(cls, data: dict) -> "Decision":
        return cls(
            task_id=data["task_id"],
            annotator_id=data["annotator_id"],
            verdict=data["verdict"],
            timestamp=data.get("timestamp", ""),
            request_id=data.get("request_id"),
        )


@dataclass(frozen=True)
class AdjudicationOutcome:
    task_id: str
    final: Verdict
    path: Literal["unanimous", "adjudicated"]


@dataclass
class AdjudicationReport:
    outcomes: list[AdjudicationOutcome]
    acceptance_rate: float  # accepted / resolved, in [0, 1]; 0.0 when none resolved
    accepted: int
    rejected: int
    conflicted: list[str]  # awaiting a third decision
    pending: list[str]  # fewer than two decisions

    @property
    def resolved(self) -> int:
        return self.accepted + self.rejected


def _mention_paragraphs(
    doc: Document, h: int, t: int
) -> tuple[list[TaskParagraph], str]:
    """Per-sentence paragraphs with char-offset highlights, plus a joined
    plain-text rendering with the subject/object mentions delimited."""
    spans: dict[int, list[tuple[int, int, str]]] = {}
    for idx, role in ((h, "subject"), (t, "object")):
        for m in doc.vertex_set[idx].mentions:
            spans.setdefault(m.sent_id, []).append((m.pos[0], m.pos[1], role))
    paragraphs: list[TaskParagraph] = []
    marked_sentences: list[str] = []
    for sent_id, tokens in enumerate(doc.sents):
        text, offsets = sentence_text_and_offsets(tokens)
        highlights = []
        for start_tok, end_tok, role in sorted(spans.get(sent_id, [])):
            highlights.append(
                Highlight(offsets[start_tok][0], offsets[end_tok - 1][1], role)
            )
        paragraphs.append(TaskParagraph(text, highlights))
        marked = list(tokens)
        for start_tok, end_tok, role in sorted(
            spans.get(sent_id, []), key=lambda s: -s[0]
        ):
            tag = "S" if role == "subject" else "O"
            marked[start_tok] = f"[{tag}]{marked[start_tok]}"
            marked[end_tok - 1] = f"{marked[end_tok - 1]}[/{tag}]"
        marked_sentences.append(" ".join(marked))
    return paragraphs, " ".join(marked_sentences)


def export_tasks(
    candidates: Sequence[AlignedTriple],
    documents: Sequence[Document],
    registry: Registry,
) -> list[VerificationTask]:
    """One verification task per candidate triple.

    The claim is rendered through the relation's hypothesis template so
    annotators read a plain statement rather than a relation id; ids are
    stable hashes of (title, h, t, r), so re-exports are identical.
    """
    by_title = {d.title: d for d in documents}
    tasks = []
    for cand in candidates:
        doc = by_title.get(cand.doc_title)
        if doc is None:
            raise VerificationError(
                f"candidate references unknown document {cand.doc_title!r}"
            )
        rel = registry.get(cand.r)
        subject = doc.vertex_set[cand.h].canonical_name
        object_ = doc.vertex_set[cand.t].canonical_name
        paragraphs, marked_text = _mention_paragraphs(doc, cand.h, cand.t)
        tasks.append(
            VerificationTask(
                task_id=task_id_for(cand.doc_title, cand.h, cand.t, cand.r),
                doc_title=cand.doc_title,
                text=marked_text,
                paragraphs=paragraphs,
                subject=subject,
                object=object_,
                relation_id=cand.r,
                relation_name=rel.name,
                statement=verbalize_hypothesis(rel, subject, object_),
                h=cand.h,
                t=cand.t,
                provenance=cand.provenance,
            )
        )
    return tasks


def _dedupe_decisions(decisions: Iterable[Decision]) -> list[Decision]:
    seen: set[tuple[str, str]] = set()
    out = []
    for d in decisions:
        key = (d.task_id, d.annotator_id)
        if key in seen:
            logger.warning(
                "ignoring duplicate decision by %r on task %s",
                d.annotator_id,
                d.task_id,
            )
            continue
        seen.add(key)
        out.append(d)
    return out


def resolve_task(
    decisions: Sequence[Decision],
) -> tuple[TaskStatus, Verdict | None, str | None]:
    """Apply the 2+1 rule to one task's decisions, in arrival order.

    Two matching verdicts resolve immediately; a conflicting pair needs
    one decision from a third annotator, which is final.
    """
    unique = _dedupe_decisions(decisions)
    if len(unique) < 2:
        return "open", None, None
    first, second = unique[0], unique[1]
    if first.verdict == second.verdict:
        return "resolved", first.verdict, "unanimous"
    for d in unique[2:]:
        return "resolved", d.verdict, "adjudicated"
    return "conflicted", None, None


def adjudicate(decisions: Sequence[Decision]) -> AdjudicationReport:
    """Batch-apply the 2+1 rule over a full decision log.

    Conflicted tasks lacking a third decision are excluded from the
    acceptance rate and reported separately, as are tasks with fewer
    than two decisions.
    """
    by_task: dict[str, list[Decision]] = {}
    for d in decisions:
        if d.verdict not in VERDICTS:
            raise VerificationError(f"unknown verdict {d.verdict!r}")
        by_task.setdefault(d.task_id, []).append(d)

    outcomes: list[AdjudicationOutcome] = []
    conflicted: list[str] = []
    pending: list[str] = []
    accepted = rejected = 0
    for task_id, task_decisions in by_task.items():
        status, final, path = resolve_task(task_decisions)
        if status == "resolved":
            outcomes.append(AdjudicationOutcome(task_id, final, path))
            if final == "accept":
                accepted += 1
            else:
                rejected += 1
        elif status == "conflicted":
            conflicted.append(task_id)
        else:
            pending.append(task_id)
    resolved = accepted + rejected
    rate = accepted / resolved if resolved else 0.0
    return AdjudicationReport(outcomes, rate, accepted, rejected, conflicted, pending)


@dataclass
class ApplyReport:
    added: int
    duplicates: int
    rejected: int
    unresolved: int


def apply_verification(
    documents: Sequence[Document],
    outcomes: Sequence[AdjudicationOutcome],
    candidates: Sequence[AlignedTriple],
) -> tuple[list[Document], ApplyReport]:
    """Merge accepted candidates into the corpus; rejected ones are dropped."""
    final_by_task = {o.task_id: o.final for o in outcomes}
    additions = []
    rejected = unresolved = 0
    for cand in candidates:
        final = final_by_task.get(task_id_for(cand.doc_title, cand.h, cand.t, cand.r))
        if final is None:
            unresolved += 1
        elif final == "accept":
            additions.append((cand.doc_title, cand.h, cand.t, cand.r))
        else:
            rejected += 1
    merged, added, duplicates = with_added_labels(documents, additions)
    return merged, ApplyReport(added, duplicates, rejected, unresolved)


def write_tasks(tasks: Sequence[VerificationTask], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8") as f:
        for task in tasks:
            f.write(json.dumps(task.to_json(), ensure_ascii=False) + "\n")


def read_tasks(path: str | Path) -> list[VerificationTask]:
    tasks = []
    with Path(path).open("r", encoding="utf-8") as f:
        for line in f:
            if line.strip():
                tasks.append(VerificationTask.from_json(json.loads(line)))
    return tasks


def write_decisions(decisions: Sequence[Decision], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8") as f:
        for d in decisions:
            f.write(json.dumps(d.to_json(), ensure_ascii=False) + "\n")


def read_decisions(path: str | Path) -> list[Decision]:
    out = []
    with Path(path).open("r", encoding="utf-8") as f:
        for line in f:
            if line.strip():
                out.append(Decision.from_json(json.loads(line)))
    return out


def _utc_now() -> str:
    return datetime.now(timezone.utc).isoformat()


class VerificationStore:
    """Tasks plus an append-only decision log in one JSON file.

    Decision ingestion is serialized under a lock; task statuses are
    updated incrementally on each submission (the batch `adjudicate`
    over the exported log must agree -- that equivalence is tested, not
    assumed). A store without a path is purely in-memory.
    """

    def __init__(self, path: str | Path | None = None):
        self.path = Path(path) if path is not None else None
        self._lock = threading.Lock()
        self._tasks: dict[str, VerificationTask] = {}
        self._decisions: list[Decision] = []
        self._assigned: dict[str, set[str]] = {}  # task_id -> annotators serving it

    # -- persistence --

    @classmethod
    def load(cls, path: str | Path) -> "VerificationStore":
        store = cls(path)
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        for raw in data.get("tasks", []):
            task = VerificationTask.from_json(raw)
            store._tasks[task.task_id] = task
        store._decisions = [Decision.from_json(d) for d in data.get("decisions", [])]
        return store

    @classmethod
    def open(cls, path: str | Path) -> "VerificationStore":
        if Path(path).exists():
            return cls.load(path)
        return cls(path)

    def _save_locked(self) -> None:
        if self.path is None:
            return
        payload = {
            "tasks": [t.to_json() for t in self._tasks.values()],
            "decisions": [d.to_json() for d in self._decisions],
        }
        fd, tmp = tempfile.mkstemp(
            dir=str(self.path.parent), prefix=self.path.name, suffix=".tmp"
        )
        try:
            with os.fdopen(fd, "w", encoding="utf-8") as f:
                json.dump(payload, f, ensure_ascii=False)
            os.replace(tmp, self.path)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise

    # -- task and decision access --

    def add_tasks(self, tasks: Iterable[VerificationTask]) -> int:
        with self._lock:
            added = 0
            for task in tasks:
                if task.task_id not in self._tasks:
                    self._tasks[task.task_id] = task
                    added += 1
            self._save_locked()
            return added

    def tasks(self) -> list[VerificationTask]:
        with self._lock:
            return list(self._tasks.values())

    def decisions(self) -> list[Decision]:
        with self._lock:
            return list(self._decisions)

    def _decisions_for(self, task_id: str) -> list[Decision]:
        return [d for d in self._decisions if d.task_id == task_id]

    def decided_by(self, annotator_id: str) -> set[str]:
        with self._lock:
            return {d.task_id for d in self._decisions if d.annotator_id == annotator_id}

    def next_task(
        self, annotator_id: str, role: str, skip_task_id: str | None = None
    ) -> VerificationTask | None:
        """The least-loaded task this actor may still decide, if any.

        Requesting a new task releases the actor's previous assignment
        (a skip puts the slot back in the pool without any decision);
        a just-skipped task is only re-served when nothing else is left.
        """
        with self._lock:
            for assigned in self._assigned.values():
                assigned.discard(annotator_id)
            decided = {
                d.task_id for d in self._decisions if d.annotator_id == annotator_id
            }
            wanted_status = "conflicted" if role == "adjudicator" else "open"
            candidates = [
                t
                for t in self._tasks.values()
                if t.status == wanted_status and t.task_id not in decided
            ]
            if not candidates:
                return None
            preferred = [t for t in candidates if t.task_id != skip_task_id]

            def load(task: VerificationTask) -> tuple[int, int]:
                n_decisions = len(self._decisions_for(task.task_id))
                n_assigned = len(self._assigned.get(task.task_id, set()) - {annotator_id})
                return (n_decisions + n_assigned, list(self._tasks).index(task.task_id))

            chosen = min(preferred or candidates, key=load)
            self._assigned.setdefault(chosen.task_id, set()).add(annotator_id)
            return chosen

    def record_decision(
        self,
        annotator_id: str,
        role: str,
        task_id: str,
        verdict: str,
        request_id: str | None = None,
    ) -> tuple[VerificationTask, bool]:
        """Append one decision and recompute the task status.

        Returns (task, replayed). A resubmission carrying the same
        request_id is acknowledged without a second append, so network
        retries cannot double-count; a genuine duplicate raises.
        """
        if verdict not in VERDICTS:
            raise VerificationError(f"unknown verdict {verdict!r}")
        with self._lock:
            task = self._tasks.get(task_id)
            if task is None:
                raise UnknownTaskError(f"unknown task {task_id!r}")
            previous = [
                d for d in self._decisions
                if d.task_id == task_id and d.annotator_id == annotator_id
            ]
            if previous:
                if request_id is not None and previous[0].request_id == request_id:
                    return task, True
                raise DuplicateDecisionError(
                    f"annotator {annotator_id!r} already decided task {task_id}"
                )
            if role == "adjudicator":
                if task.status != "conflicted":
                    raise TaskStateError(
                        f"task {task_id} is {task.status}, not awaiting adjudication"
                    )
            else:
                if task.status != "open":
                    raise TaskStateError(f"task {task_id} is already {task.status}")
            self._decisions.append(
                Decision(task_id, annotator_id, verdict, _utc_now(), request_id)
            )
            status, final, _path = resolve_task(self._decisions_for(task_id))
            task.status = status
            task.final_verdict = final
            self._assigned.get(task_id, set()).discard(annotator_id)
            self._save_locked()
            return task, False

    def progress(self) -> dict:
        with self._lock:
            counts = {"open": 0, "conflicted": 0, "resolved": 0}
            accepted = 0
            for task in self._tasks.values():
                counts[task.status] += 1
                if task.status == "resolved" and task.final_verdict == "accept":
                    accepted += 1
            resolved = counts["resolved"]
            return {
                "total": len(self._tasks),
                "by_status": counts,
                "accepted": accepted,
                "rejected": resolved - accepted,
                "acceptance_rate": accepted / resolved if resolved else 0.0,
                "decisions": len(self._decisions),
            }

    def export(self) -> dict:
        with self._lock:
            return {
                "tasks": [t.to_json() for t in self._tasks.values()],
                "decisions": [d.to_json() for d in self._decisions],
            }
