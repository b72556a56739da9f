"""Exact-match precision/recall/F1 and subset-recall reports.

Match identity is (title, h, t, r) with entity indices: predictions must
be linked to the corpus before evaluation. Percentages render to two
decimals with half-up rounding. All functions here are pure.
"""
from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from decimal import ROUND_HALF_UP, Decimal
from typing import Iterable, Mapping, Sequence

from .corpus import Document
from .errors import EvalError

PredictionKey = tuple[str, int, int, str]  # (title, h, t, r)


def format_pct(value: float) -> str:
    """Two-decimal percentage string, half-up."""
    return str(Decimal(repr(value)).quantize(Decimal("0.01"), rounding=ROUND_HALF_UP))


def f1_from_pr(p: float, r: float) -> float:
    """Harmonic mean of precision and recall; 0 when both are 0."""
    if p < 0 or r < 0:
        raise ValueError("precision and recall must be nonnegative")
    if p + r == 0:
        return 0.0
    return 2 * p * r / (p + r)


@dataclass(frozen=True)
class EvalReport:
    precision: float  # percent scale
    recall: float
    f1: float
    true_positive: int
    predicted: int
    gold: int
    per_relation: dict[str, tuple[int, int, int]]  # r -> (tp, predicted, gold)
    subset_recalls: dict[str, float] = field(default_factory=dict)

    def render(self) -> str:
        lines = [
            f"P={format_pct(self.precision)} R={format_pct(self.recall)} "
            f"F1={format_pct(self.f1)} "
            f"(tp={self.true_positive} predicted={self.predicted} gold={self.gold})"
        ]
        for name, recall in self.subset_recalls.items():
            lines.append(f"recall[{name}]={format_pct(recall)}")
        return "\n".join(lines)

    def to_json(self) -> dict:
        return {
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "true_positive": self.true_positive,
            "predicted": self.predicted,
            "gold": self.gold,
            "per_relation": {
                r: {"tp": tp, "predicted": pred, "gold": gold}
                for r, (tp, pred, gold) in self.per_relation.items()
            },
            "subset_recalls": dict(self.subset_recalls),
        }


def gold_triple_set(documents: Sequence[Document]) -> set[PredictionKey]:
    return {
        (doc.title, l.h, l.t, l.r) for doc in documents for l in doc.labels
    }


def _validate_predictions(
    predictions: Iterable[PredictionKey], documents: Sequence[Document]
) -> set[PredictionKey]:
    by_title = {d.title: d for d in documents}
    out = set()
    for pred in predictions:
        title, h, t, r = pred
        doc = by_title.get(title)
        if doc is None:
            raise EvalError(f"prediction references unknown document {title!r}")
        n = len(doc.vertex_set)
        if not (0 <= h < n) or not (0 <= t < n):
            raise EvalError(
                f"prediction ({title!r}, {h}, {t}, {r}) has an entity index "
                f"outside the document's {n} entities"
            )
        out.add(pred)
    return out


def exact_match_prf(
    predictions: Iterable[PredictionKey],
    gold_corpus: Sequence[Document],
    subsets: Mapping[str, set[PredictionKey]] | None = None,
) -> EvalReport:
    """Micro-averaged exact-match P/R/F1 over the whole corpus.

    Optional named gold subsets get their own recall figures (e.g. the
    supplementary-triples slice of an augmented test set).
    """
    pred_set = _validate_predictions(predictions, gold_corpus)
    gold_set = gold_triple_set(gold_corpus)
    tp_set = pred_set & gold_set

    per_tp: dict[str, int] = defaultdict(int)
    per_pred: dict[str, int] = defaultdict(int)
    per_gold: dict[str, int] = defaultdict(int)
    for _, _, _, r in tp_set:
        per_tp[r] += 1
    for _, _, _, r in pred_set:
        per_pred[r] += 1
    for _, _, _, r in gold_set:
        per_gold[r] += 1

    tp, predicted, gold = len(tp_set), len(pred_set), len(gold_set)
    precision = 100.0 * tp / predicted if predicted else 0.0
    recall = 100.0 * tp / gold if gold else 0.0
    subset_recalls = {}
    if subsets:
        for name, subset in subsets.items():
            subset_recalls[name] = recall_on_subset(pred_set, subset)
    return EvalReport(
        precision=precision,
        recall=recall,
        f1=f1_from_pr(precision, recall),
        true_positive=tp,
        predicted=predicted,
        gold=gold,
        per_relation={
            r: (per_tp[r], per_pred[r], per_gold[r])
            for r in sorted(set(per_tp) | set(per_pred) | set(per_gold))
        },
        subset_recalls=subset_recalls,
    )


def recall_on_subset(
    predictions: Iterable[PredictionKey], subset: set[PredictionKey]
) -> float:
    """Percent of the subset's triples recovered by the predictions."""
    if not subset:
        raise EvalError("recall subset must be non-empty")
    pred_set = set(predictions)
    return 100.0 * len(pred_set & subset) / len(subset)
