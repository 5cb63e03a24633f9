"""
AAOD event representation and the restricted event vocabulary.

An event is a four-slot tuple (Actor, Action, Object, Direction) stamped with
a series time and a Hawkes event-type index. The vocabulary restricts each
slot to an allow-list, carries composition rules between slots, and grows
only through versioned expansion rounds.

Example usage:
```
    vocab = Vocabulary(allowed={
        "actor": ["OPEC"], "action": ["cut"],
        "object": ["production"], "direction": ["down", "up"],
    })
    event = AaodEvent(actor="opec", action="cut", object="production", direction="down")
    assert validate_event(event, vocab).accepted
```
"""

import logging
from enum import Enum
from typing import Dict, Iterable, List, Literal, NamedTuple, Optional, Tuple, Union

from pydantic import AliasChoices, BaseModel, ConfigDict, Field, field_validator, model_validator

from .errors import EmptyToken, InvalidInputError

logger = logging.getLogger(__name__)


class SlotKind(str, Enum):
    """The four AAOD slot roles, in their fixed order."""

    ACTOR = "actor"
    ACTION = "action"
    OBJECT = "object"
    DIRECTION = "direction"


SLOT_ORDER: Tuple[SlotKind, ...] = (
    SlotKind.ACTOR,
    SlotKind.ACTION,
    SlotKind.OBJECT,
    SlotKind.DIRECTION,
)

AaodKey = Tuple[str, str, str, str]


def normalize_token(raw: str) -> str:
    """Case-fold, trim and collapse internal whitespace.

    Raises:
        EmptyToken: If nothing is left after normalization.
    """
    token = " ".join(str(raw).split()).casefold()
    if not token:
        raise EmptyToken(f"Token {raw!r} is empty after normalization")
    return token


class AaodEvent(BaseModel):
    """One structured event."""

    model_config = ConfigDict(frozen=True)

    actor: str
    action: str
    object: str
    direction: str

    time: float = Field(default=0.0, validation_alias=AliasChoices("t", "time"))
    """Timestamp in series time units; event files call it ``t``."""

    type_index: int = Field(default=0, ge=0, validation_alias=AliasChoices("type", "type_index"))
    """Hawkes event type the tuple maps to."""

    @field_validator("actor", "action", "object", "direction", mode="before")
    @classmethod
    def _normalize(cls, value: str) -> str:
        return normalize_token(value)

    @property
    def key(self) -> AaodKey:
        """The normalized (actor, action, object, direction) tuple."""
        return (self.actor, self.action, self.object, self.direction)

    def slot(self, kind: SlotKind) -> str:
        return getattr(self, SlotKind(kind).value)


class SlotRef(BaseModel):
    """A (slot, token) operand of a composition rule."""

    model_config = ConfigDict(frozen=True)

    slot: SlotKind
    token: str

    @field_validator("token", mode="before")
    @classmethod
    def _normalize(cls, value: str) -> str:
        return normalize_token(value)

    def matches(self, event: AaodEvent) -> bool:
        return event.slot(self.slot) == self.token


class CompositionRule(BaseModel):
    """Structural constraint between slots.

    ``forbid_pair`` rejects events that carry both operands. ``require_direction``
    takes a trigger operand followed by direction operands and rejects events
    that carry the trigger with any other direction.
    """

    model_config = ConfigDict(frozen=True)

    kind: Literal["forbid_pair", "require_direction"]
    operands: Tuple[SlotRef, ...]

    @model_validator(mode="after")
    def _check_arity(self) -> "CompositionRule":
        if self.kind == "forbid_pair":
            if len(self.operands) != 2:
                raise ValueError("forbid_pair needs exactly two operands")
        else:
            if len(self.operands) < 2:
                raise ValueError("require_direction needs a trigger and at least one direction")
            if any(op.slot != SlotKind.DIRECTION for op in self.operands[1:]):
                raise ValueError("require_direction operands after the trigger must be directions")
        return self

    def violated_by(self, event: AaodEvent) -> bool:
        if self.kind == "forbid_pair":
            return all(op.matches(event) for op in self.operands)
        trigger, *directions = self.operands
        if not trigger.matches(event):
            return False
        return event.direction not in {op.token for op in directions}

    def describe(self) -> str:
        ops = ", ".join(f"{op.slot.value}={op.token}" for op in self.operands)
        return f"{self.kind}({ops})"


class Vocabulary(BaseModel):
    """Four slot allow-lists plus composition rules and a version counter.

    Values are immutable; expansion and rule additions return new vocabularies.
    """

    model_config = ConfigDict(frozen=True)

    allowed: Dict[SlotKind, Tuple[str, ...]]
    """Ordered, duplicate-free normalized tokens per slot."""

    constraints: Tuple[CompositionRule, ...] = ()
    """Composition rules, checked in order."""

    version: int = Field(default=0, ge=0)
    """Increases by one per accepted expansion round."""

    @model_validator(mode="before")
    @classmethod
    def _lift_slot_keys(cls, data: object) -> object:
        # Vocabulary files keep the slot arrays at the top level.
        if isinstance(data, dict) and "allowed" not in data:
            data = dict(data)
            data["allowed"] = {kind.value: data.pop(kind.value, ()) for kind in SLOT_ORDER}
        return data

    @field_validator("allowed", mode="before")
    @classmethod
    def _normalize_allowed(cls, value: Dict) -> Dict[SlotKind, Tuple[str, ...]]:
        allowed: Dict[SlotKind, Tuple[str, ...]] = {}
        for kind in SLOT_ORDER:
            raw = value.get(kind, value.get(kind.value, ()))
            tokens: List[str] = []
            for item in raw:
                token = normalize_token(item)
                if token not in tokens:
                    tokens.append(token)
            allowed[kind] = tuple(tokens)
        return allowed

    @model_validator(mode="after")
    def _check_rule_operands(self) -> "Vocabulary":
        for rule in self.constraints:
            self._require_operands(rule)
        return self

    def _require_operands(self, rule: CompositionRule) -> None:
        for op in rule.operands:
            if op.token not in self.allowed[op.slot]:
                raise InvalidInputError(
                    f"Rule {rule.describe()} references {op.slot.value} token "
                    f"{op.token!r} missing from the vocabulary"
                )

    def tokens(self, slot: SlotKind) -> Tuple[str, ...]:
        return self.allowed[SlotKind(slot)]

    def allows(self, slot: SlotKind, token: str) -> bool:
        return token in self.allowed[SlotKind(slot)]

    def with_rule(self, rule: CompositionRule) -> "Vocabulary":
        """Return a copy with ``rule`` appended; its operands must already exist."""
        self._require_operands(rule)
        return Vocabulary(
            allowed=self.allowed,
            constraints=self.constraints + (rule,),
            version=self.version,
        )

    def diff(self, other: "Vocabulary") -> Dict[SlotKind, List[str]]:
        """Tokens present in ``other`` but not in this vocabulary, per slot."""
        return {
            kind: [t for t in other.allowed[kind] if t not in self.allowed[kind]]
            for kind in SLOT_ORDER
        }


class ValidationVerdict(BaseModel):
    """Outcome of checking one event against a vocabulary."""

    model_config = ConfigDict(frozen=True)

    accepted: bool
    slot: Optional[SlotKind] = None
    """First slot whose token is not allowed."""

    rule: Optional[CompositionRule] = None
    """First violated composition rule."""

    @property
    def reason(self) -> str:
        if self.accepted:
            return "accepted"
        if self.slot is not None:
            return f"{self.slot.value} not in vocabulary"
        return f"violates {self.rule.describe()}"


class EventSet(BaseModel):
    """Events belonging to one time bucket (an alignment window)."""

    model_config = ConfigDict(frozen=True)

    events: Tuple[AaodEvent, ...] = ()
    bucket: Union[int, float, str] = 0

    def __len__(self) -> int:
        return len(self.events)

    @property
    def is_deduplicated(self) -> bool:
        keys = [e.key for e in self.events]
        return len(keys) == len(set(keys))


class Suggestion(NamedTuple):
    """A vocabulary suggestion emitted by an extractor backend."""

    slot: SlotKind
    token: str
    score: float


def validate_event(e: AaodEvent, v: Vocabulary) -> ValidationVerdict:
    """Accept iff every slot is allowed and no composition rule is violated."""
    for kind in SLOT_ORDER:
        if not v.allows(kind, e.slot(kind)):
            return ValidationVerdict(accepted=False, slot=kind)
    for rule in v.constraints:
        if rule.violated_by(e):
            return ValidationVerdict(accepted=False, rule=rule)
    return ValidationVerdict(accepted=True)


def dedup_event_set(s: EventSet) -> EventSet:
    """Keep the first occurrence of each normalized AAOD tuple, in input order."""
    seen = set()
    kept: List[AaodEvent] = []
    for event in s.events:
        if event.key in seen:
            continue
        seen.add(event.key)
        kept.append(event)
    return EventSet(events=tuple(kept), bucket=s.bucket)


def aggregate_suggestions(
    suggestions: Iterable[Tuple[SlotKind, str, float]],
) -> Dict[Tuple[SlotKind, str], float]:
    """Sum scores per (slot, normalized token), keeping first-seen order.

    Raises:
        InvalidInputError: If a score is negative.
    """
    totals: Dict[Tuple[SlotKind, str], float] = {}
    for slot, raw, score in suggestions:
        if score < 0:
            raise InvalidInputError(f"Negative suggestion score {score} for {raw!r}")
        try:
            token = normalize_token(raw)
        except EmptyToken:
            logger.warning(f"Ignoring empty {SlotKind(slot).value} suggestion")
            continue
        key = (SlotKind(slot), token)
        totals[key] = totals.get(key, 0.0) + float(score)
    return totals


def expand_vocabulary(
    v: Vocabulary,
    suggestions: Iterable[Tuple[SlotKind, str, float]],
    threshold: float,
) -> Vocabulary:
    """Append tokens whose summed score reaches ``threshold``.

    The version moves by exactly one when at least one token is added;
    otherwise ``v`` itself is returned.
    """
    if threshold < 0:
        raise InvalidInputError(f"Threshold must be >= 0, got {threshold}")

    added: Dict[SlotKind, List[str]] = {kind: [] for kind in SLOT_ORDER}
    for (slot, token), total in aggregate_suggestions(suggestions).items():
        if total >= threshold and not v.allows(slot, token):
            added[slot].append(token)

    if not any(added.values()):
        return v

    summary = ", ".join(
        f"{kind.value}+{tokens}" for kind, tokens in added.items() if tokens
    )
    logger.info(f"Vocabulary v{v.version} -> v{v.version + 1}: {summary}")
    return Vocabulary(
        allowed={kind: v.allowed[kind] + tuple(added[kind]) for kind in SLOT_ORDER},
        constraints=v.constraints,
        version=v.version + 1,
    )
