from functools import lru_cache

import numpy as np
import pytest
from pydantic import ValidationError

from numevent.evaluator import (
    MatchRule,
    evaluate_predictions,
    match_sets,
    monthly_report,
    score_month,
    slot_match_count,
)
from numevent.generator import PairedDataset, PairedSample, Provenance
from numevent.vocab import AaodEvent, EventSet

RULE = MatchRule()


def ev(actor, action, obj, direction, time=0.0) -> AaodEvent:
    return AaodEvent(actor=actor, action=action, object=obj, direction=direction, time=time)


def events(*items) -> EventSet:
    return EventSet(events=tuple(items))


GOLD = events(
    ev("opec", "cut", "production", "down"),
    ev("saudi arabia", "raise", "output", "up"),
    ev("iran", "raise", "exports", "up"),
)
PRED = events(
    ev("opec", "cut", "production", "up"),
    ev("russia", "hold", "gas", "flat"),
)


def brute_force(preds: EventSet, golds: EventSet, min_slots: int) -> int:
    """Maximum matching size by dynamic programming over used-gold bitmasks."""
    ok = [
        [slot_match_count(p, g) >= min_slots for g in golds.events] for p in preds.events
    ]

    @lru_cache(maxsize=None)
    def best(i: int, used: int) -> int:
        if i == len(ok):
            return 0
        result = best(i + 1, used)
        for j, allowed in enumerate(ok[i]):
            if allowed and not used & (1 << j):
                result = max(result, 1 + best(i + 1, used | (1 << j)))
        return result

    return best(0, 0)


def random_set(rng: np.random.Generator, size: int) -> EventSet:
    pools = (["a", "b"], ["x", "y"], ["p", "q", "r"], ["up", "down"])
    return events(*(ev(*(pool[rng.integers(len(pool))] for pool in pools)) for _ in range(size)))


def test_slot_match_count():
    assert slot_match_count(PRED.events[0], GOLD.events[0]) == 3
    assert slot_match_count(GOLD.events[1], GOLD.events[2]) == 2
    assert slot_match_count(GOLD.events[0], GOLD.events[0]) == 4


def test_match_rule_bounds():
    with pytest.raises(ValidationError):
        MatchRule(min_slots=0)
    with pytest.raises(ValidationError):
        MatchRule(min_slots=5)


def test_hand_built_example():
    score = score_month(PRED, GOLD, RULE)
    assert score.matched == 1
    assert score.precision == pytest.approx(0.5)
    assert score.recall == pytest.approx(1 / 3)


def test_pairing_indices_refer_to_inputs():
    matched, pairing = match_sets(PRED, GOLD, RULE)
    assert matched == 1
    assert pairing.pairs == ((0, 0, 3),)


def test_gold_events_are_not_counted_twice():
    gold = events(ev("opec", "cut", "production", "down"))
    preds = events(
        ev("opec", "cut", "production", "down"),
        ev("opec", "cut", "production", "up"),
        ev("opec", "cut", "oil", "down"),
    )
    score = score_month(preds, gold, RULE)
    assert score.matched == 1
    assert score.precision == pytest.approx(1 / 3)
    assert score.recall == 1.0


def test_exact_match_preferred_among_maximum_matchings():
    gold = events(ev("opec", "cut", "production", "down"))
    preds = events(ev("opec", "cut", "production", "up"), ev("opec", "cut", "production", "down"))
    _, pairing = match_sets(preds, gold, RULE)
    assert pairing.pairs == ((1, 0, 4),)


def test_matching_size_agrees_with_brute_force():
    rng = np.random.default_rng(99)
    for _ in range(500):
        preds = random_set(rng, int(rng.integers(0, 9)))
        golds = random_set(rng, int(rng.integers(0, 9)))
        min_slots = int(rng.integers(1, 5))
        matched, pairing = match_sets(preds, golds, MatchRule(min_slots=min_slots))
        assert matched == brute_force(preds, golds, min_slots)
        assert len({p for p, _, _ in pairing.pairs}) == matched
        assert len({g for _, g, _ in pairing.pairs}) == matched


def test_matching_ignores_input_order():
    rng = np.random.default_rng(5)
    for _ in range(50):
        preds, golds = random_set(rng, 5), random_set(rng, 5)
        shuffled_preds = events(*(preds.events[i] for i in rng.permutation(5)))
        shuffled_golds = events(*(golds.events[i] for i in rng.permutation(5)))
        expected = match_sets(preds, golds, RULE)[0]
        assert match_sets(shuffled_preds, shuffled_golds, RULE)[0] == expected


def test_looser_rule_never_matches_fewer():
    rng = np.random.default_rng(6)
    for _ in range(100):
        preds, golds = random_set(rng, 4), random_set(rng, 4)
        sizes = [match_sets(preds, golds, MatchRule(min_slots=k))[0] for k in (4, 3, 2, 1)]
        assert sizes == sorted(sizes)


def test_empty_month_scores_perfectly():
    score = score_month(events(), events(), RULE)
    assert (score.precision, score.recall) == (1.0, 1.0)


def test_undefined_scores():
    only_gold = score_month(events(), GOLD, RULE)
    assert only_gold.precision is None
    assert only_gold.recall == 0.0
    only_pred = score_month(PRED, events(), RULE)
    assert only_pred.precision == 0.0
    assert only_pred.recall is None


def test_monthly_means_are_unweighted():
    a = ev("opec", "cut", "production", "down")
    b = ev("iran", "raise", "exports", "up")
    report = monthly_report(
        [
            ("2020-01", events(a), events(a)),
            ("2020-02", events(a, ev("russia", "hold", "gas", "flat")), events(a, b)),
        ],
        RULE,
    )
    assert list(report.per_month) == ["2020-01", "2020-02"]
    assert report.overall == (pytest.approx(0.75), pytest.approx(0.75))
    assert report.summary() == "precision 0.75 recall 0.75"


def test_windows_in_the_same_month_are_pooled():
    a = ev("opec", "cut", "production", "down")
    report = monthly_report(
        [("2020-01", events(a), events()), ("2020-01", events(), events(a))], RULE
    )
    assert report.per_month["2020-01"].matched == 1
    assert report.overall == (1.0, 1.0)


def test_undefined_months_drop_out_of_the_mean():
    a = ev("opec", "cut", "production", "down")
    report = monthly_report(
        [("2020-01", events(a), events(a)), ("2020-02", events(), events(a))], RULE
    )
    assert report.overall == (1.0, 0.5)


def test_summary_marks_undefined_values():
    report = monthly_report([("2020-01", events(), GOLD)], RULE)
    assert report.summary() == "precision n/a recall 0.00"


def sample(sample_id: str, month: str, gold: EventSet) -> PairedSample:
    return PairedSample(
        sample_id=sample_id,
        window=(1.0, 2.0),
        window_start=0,
        window_end=1.0,
        month=month,
        gold=gold,
    )


def test_evaluate_predictions_joins_by_sample_id():
    dataset = PairedDataset(
        samples=(sample("s1", "2020-01", GOLD), sample("s2", "2020-02", events())),
        provenance=Provenance(config_hash="abc"),
    )
    records = [("s1", e) for e in PRED.events] + [("missing", PRED.events[0])]
    report = evaluate_predictions(records, dataset, RULE)
    assert report.summary() == "precision 0.75 recall 0.67"
    assert report.per_month["2020-02"].n_pred == 0
