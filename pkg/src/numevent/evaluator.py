"""
Event-level scoring.

A predicted event matches a gold event when at least ``min_slots`` of the four
AAOD slots agree. Predictions and golds are paired by a maximum-cardinality
bipartite matching, pooled per calendar month, and precision/recall are
averaged over months.
"""

import logging
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy.optimize import linear_sum_assignment

from .generator import PairedDataset
from .vocab import SLOT_ORDER, AaodEvent, EventSet

logger = logging.getLogger(__name__)


class MatchRule(BaseModel):
    model_config = ConfigDict(frozen=True)

    min_slots: int = Field(default=3, ge=1, le=4)
    """Slots that must agree for a prediction to count as correct."""


class Pairing(BaseModel):
    """Matched (pred index, gold index, slot count) triples, indices into the inputs."""

    model_config = ConfigDict(frozen=True)

    pairs: Tuple[Tuple[int, int, int], ...] = ()

    def __len__(self) -> int:
        return len(self.pairs)


class MonthScore(BaseModel):
    model_config = ConfigDict(frozen=True)

    precision: Optional[float]
    recall: Optional[float]
    matched: int
    n_pred: int
    n_gold: int


class MonthlyReport(BaseModel):
    """Per-month scores and their unweighted means; None marks an undefined value."""

    model_config = ConfigDict(frozen=True)

    per_month: Dict[str, MonthScore]
    overall: Tuple[Optional[float], Optional[float]]
    min_slots: int = 3

    def summary(self) -> str:
        precision, recall = (("n/a" if x is None else f"{x:.2f}") for x in self.overall)
        return f"precision {precision} recall {recall}"


def slot_match_count(pred: AaodEvent, gold: AaodEvent) -> int:
    """Number of slots whose normalized tokens are equal."""
    return sum(pred.slot(kind) == gold.slot(kind) for kind in SLOT_ORDER)


def _canonical_order(events: Sequence[AaodEvent]) -> List[int]:
    return sorted(range(len(events)), key=lambda i: (events[i].key, events[i].time, i))


def match_sets(preds: EventSet, golds: EventSet, rule: MatchRule) -> Tuple[int, Pairing]:
    """Maximum-cardinality matching over edges with at least ``rule.min_slots`` equal slots.

    Among maximum matchings the one with the larger total slot count wins.
    Both sides are put in tuple order before solving, so the result does not
    depend on input order.
    """
    pred_order = _canonical_order(preds.events)
    gold_order = _canonical_order(golds.events)
    if not pred_order or not gold_order:
        return 0, Pairing()

    counts = np.array(
        [
            [slot_match_count(preds.events[i], golds.events[j]) for j in gold_order]
            for i in pred_order
        ],
        dtype=np.int64,
    )
    allowable = counts >= rule.min_slots
    # Any extra edge outweighs every possible gain in slot count.
    big = 4 * min(counts.shape) + 1
    scores = np.where(allowable, big + counts, 0)

    rows, cols = linear_sum_assignment(scores, maximize=True)
    valid = allowable[rows, cols]
    rows, cols = rows[valid], cols[valid]

    pairs = tuple(
        sorted(
            (pred_order[r], gold_order[c], int(counts[r, c]))
            for r, c in zip(rows.tolist(), cols.tolist())
        )
    )
    return len(pairs), Pairing(pairs=pairs)


def _mean(values: Iterable[Optional[float]]) -> Optional[float]:
    defined = [v for v in values if v is not None]
    return float(np.mean(defined)) if defined else None


def score_month(preds: EventSet, golds: EventSet, rule: MatchRule) -> MonthScore:
    n_pred, n_gold = len(preds), len(golds)
    if n_pred == 0 and n_gold == 0:
        return MonthScore(precision=1.0, recall=1.0, matched=0, n_pred=0, n_gold=0)
    matched, _ = match_sets(preds, golds, rule)
    return MonthScore(
        precision=matched / n_pred if n_pred else None,
        recall=matched / n_gold if n_gold else None,
        matched=matched,
        n_pred=n_pred,
        n_gold=n_gold,
    )


def monthly_report(
    samples: Iterable[Tuple[str, EventSet, EventSet]], rule: MatchRule
) -> MonthlyReport:
    """Pool each month's predictions and golds, score them, and average over months.

    A month with no predictions has undefined precision and is left out of the
    precision mean; likewise for recall with no golds.
    """
    pooled: Dict[str, Tuple[List[AaodEvent], List[AaodEvent]]] = {}
    for month, preds, golds in samples:
        pred_list, gold_list = pooled.setdefault(month, ([], []))
        pred_list.extend(preds.events)
        gold_list.extend(golds.events)

    per_month = {
        month: score_month(
            EventSet(events=tuple(pooled[month][0]), bucket=month),
            EventSet(events=tuple(pooled[month][1]), bucket=month),
            rule,
        )
        for month in sorted(pooled)
    }
    overall = (
        _mean(s.precision for s in per_month.values()),
        _mean(s.recall for s in per_month.values()),
    )
    logger.debug(f"Scored {len(per_month)} months at min_slots={rule.min_slots}")
    return MonthlyReport(per_month=per_month, overall=overall, min_slots=rule.min_slots)


def evaluate_predictions(
    pred_records: Iterable[Tuple[str, AaodEvent]],
    dataset: PairedDataset,
    rule: MatchRule,
) -> MonthlyReport:
    """Join (sample_id, event) predictions to the dataset's samples and score by month."""
    by_sample: Dict[str, List[AaodEvent]] = {s.sample_id: [] for s in dataset.samples}
    unknown = 0
    for sample_id, event in pred_records:
        if sample_id not in by_sample:
            unknown += 1
            continue
        by_sample[sample_id].append(event)
    if unknown:
        logger.warning(f"Ignored {unknown} predictions with unknown sample ids")

    return monthly_report(
        (
            (s.month, EventSet(events=tuple(by_sample[s.sample_id]), bucket=s.sample_id), s.gold)
            for s in dataset.samples
        ),
        rule,
    )
