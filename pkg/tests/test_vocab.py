import pytest
from pydantic import ValidationError

from numevent.errors import EmptyToken, InvalidInputError
from numevent.vocab import (
    AaodEvent,
    CompositionRule,
    EventSet,
    SlotKind,
    Suggestion,
    Vocabulary,
    aggregate_suggestions,
    dedup_event_set,
    expand_vocabulary,
    normalize_token,
    validate_event,
)


def event(actor="opec", action="cut", obj="production", direction="down", **kw) -> AaodEvent:
    return AaodEvent(actor=actor, action=action, object=obj, direction=direction, **kw)


def test_normalize_token_collapses_case_and_whitespace():
    assert normalize_token("  Saudi   ARABIA\t") == "saudi arabia"


def test_normalize_token_rejects_blank():
    with pytest.raises(EmptyToken):
        normalize_token("   ")


def test_event_slots_are_normalized():
    e = event(actor=" OPEC ", direction="Down")
    assert e.key == ("opec", "cut", "production", "down")
    assert e.slot(SlotKind.DIRECTION) == "down"


def test_fixture_vocabulary_loads(vocabulary):
    assert vocabulary.tokens(SlotKind.ACTOR) == ("opec",)
    assert vocabulary.version == 0
    assert len(vocabulary.constraints) == 1


def test_vocabulary_dedups_tokens_and_fills_missing_slots():
    v = Vocabulary(allowed={"actor": ["OPEC", "opec", " Opec"]})
    assert v.tokens(SlotKind.ACTOR) == ("opec",)
    assert v.tokens(SlotKind.OBJECT) == ()


def test_validate_accepts_allowed_event(vocabulary):
    verdict = validate_event(event(), vocabulary)
    assert verdict.accepted
    assert verdict.reason == "accepted"


def test_validate_reports_first_failing_slot(vocabulary):
    verdict = validate_event(event(actor="iran", obj="exports"), vocabulary)
    assert not verdict.accepted
    assert verdict.slot == SlotKind.ACTOR


def test_validate_checks_composition_rules(vocabulary):
    verdict = validate_event(event(direction="up"), vocabulary)
    assert not verdict.accepted
    assert verdict.slot is None
    assert verdict.rule.kind == "require_direction"
    assert "require_direction" in verdict.reason


def test_forbid_pair_rule():
    v = Vocabulary(
        allowed={
            "actor": ["opec"],
            "action": ["cut", "raise"],
            "object": ["production"],
            "direction": ["down", "up"],
        }
    )
    rule = CompositionRule(
        kind="forbid_pair",
        operands=[{"slot": "action", "token": "raise"}, {"slot": "direction", "token": "down"}],
    )
    v = v.with_rule(rule)
    assert not validate_event(event(action="raise", direction="down"), v).accepted
    assert validate_event(event(action="raise", direction="up"), v).accepted
    assert validate_event(event(action="cut", direction="down"), v).accepted


def test_rule_arity_is_checked():
    with pytest.raises(ValidationError):
        CompositionRule(kind="forbid_pair", operands=[{"slot": "action", "token": "cut"}])
    with pytest.raises(ValidationError):
        CompositionRule(
            kind="require_direction",
            operands=[{"slot": "action", "token": "cut"}, {"slot": "actor", "token": "opec"}],
        )


def test_rule_operands_must_exist(vocabulary):
    rule = CompositionRule(
        kind="forbid_pair",
        operands=[{"slot": "actor", "token": "iran"}, {"slot": "direction", "token": "up"}],
    )
    with pytest.raises(InvalidInputError):
        vocabulary.with_rule(rule)


def test_dedup_keeps_first_occurrence_in_order():
    a = event(time=1.0)
    b = event(direction="up", time=1.0)
    deduped = dedup_event_set(EventSet(events=(a, b, event(time=2.0)), bucket=1))
    assert deduped.events == (a, b)
    assert deduped.is_deduplicated
    assert deduped.bucket == 1


def test_dedup_is_idempotent():
    s = EventSet(events=(event(), event(), event(direction="up")))
    once = dedup_event_set(s)
    assert dedup_event_set(once) == once


def test_expand_adds_tokens_at_threshold(vocabulary):
    expanded = expand_vocabulary(
        vocabulary,
        [
            (SlotKind.ACTOR, "Saudi Arabia", 0.3),
            (SlotKind.ACTOR, "saudi arabia", 0.3),
            (SlotKind.ACTION, "raise", 0.2),
        ],
        threshold=0.5,
    )
    assert expanded.version == 1
    assert expanded.tokens(SlotKind.ACTOR) == ("opec", "saudi arabia")
    assert not expanded.allows(SlotKind.ACTION, "raise")
    assert vocabulary.diff(expanded)[SlotKind.ACTOR] == ["saudi arabia"]


def test_expand_without_additions_keeps_version(vocabulary):
    assert expand_vocabulary(vocabulary, [], 0.5) is vocabulary
    same = expand_vocabulary(vocabulary, [Suggestion(SlotKind.ACTOR, "OPEC", 5.0)], 0.5)
    assert same.version == vocabulary.version


def test_expand_preserves_existing_order_and_rules(vocabulary):
    expanded = expand_vocabulary(vocabulary, [(SlotKind.DIRECTION, "flat", 1.0)], 0.5)
    assert expanded.tokens(SlotKind.DIRECTION) == ("down", "up", "flat")
    assert expanded.constraints == vocabulary.constraints


def test_negative_scores_and_thresholds_are_rejected(vocabulary):
    with pytest.raises(InvalidInputError):
        aggregate_suggestions([(SlotKind.ACTOR, "iran", -1.0)])
    with pytest.raises(InvalidInputError):
        expand_vocabulary(vocabulary, [], -0.1)


def test_empty_suggestions_are_skipped():
    totals = aggregate_suggestions([(SlotKind.ACTOR, "  ", 1.0), (SlotKind.ACTOR, "Iran", 1.0)])
    assert totals == {(SlotKind.ACTOR, "iran"): 1.0}
