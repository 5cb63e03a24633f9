"""Deterministic keyword-table extractor.

Each sentence is scanned for keyword phrases; a phrase fills one or more AAOD
slots. A sentence that ends up with all four slots filled yields one candidate
event. Fills naming tokens outside the current vocabulary come back as
suggestions weighted by the keyword's weight.
"""

import logging
import re
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple

from pydantic import BaseModel, ConfigDict, Field, field_validator

from ..age import Document, Extraction, ExtractorBackend
from ..vocab import (
    SLOT_ORDER,
    AaodEvent,
    SlotKind,
    SlotRef,
    Suggestion,
    Vocabulary,
    normalize_token,
)
from . import register_backend

logger = logging.getLogger(__name__)

_SENTENCE_BREAK = re.compile(r"[.;!?\n]+")


class KeywordRule(BaseModel):
    """A phrase and the slot fills it implies."""

    model_config = ConfigDict(frozen=True)

    phrase: str
    fills: Tuple[SlotRef, ...]
    weight: float = Field(default=1.0, ge=0.0)

    @field_validator("phrase", mode="before")
    @classmethod
    def _normalize(cls, value: str) -> str:
        return normalize_token(value)


class RuleBasedBackend(ExtractorBackend):
    """Keyword-table backend; pure and safe to call concurrently."""

    name = "rule_based"

    def __init__(
        self,
        keywords: Sequence[Any] = (),
        event_types: Optional[Mapping[str, int]] = None,
    ):
        rules = [KeywordRule.model_validate(k) for k in keywords]
        # Longest phrase wins where matches overlap.
        self.rules: List[KeywordRule] = sorted(rules, key=lambda r: (-len(r.phrase), r.phrase))
        self.patterns = [
            re.compile(r"(?<!\w)" + re.escape(rule.phrase) + r"(?!\w)") for rule in self.rules
        ]
        self.event_types: Dict[str, int] = {
            normalize_token(action): int(k) for action, k in (event_types or {}).items()
        }

    def _matches(self, sentence: str) -> List[KeywordRule]:
        spans = []
        for rank, (rule, pattern) in enumerate(zip(self.rules, self.patterns)):
            for m in pattern.finditer(sentence):
                spans.append((m.start(), rank, m.end(), rule))
        spans.sort(key=lambda s: (s[0], s[1]))

        chosen: List[KeywordRule] = []
        cursor = 0
        for start, _, end, rule in spans:
            if start < cursor:
                continue
            chosen.append(rule)
            cursor = end
        return chosen

    def extract_sync(self, document: Document, vocabulary: Vocabulary) -> Extraction:
        events: List[AaodEvent] = []
        suggestions: List[Suggestion] = []
        for raw in _SENTENCE_BREAK.split(document.body):
            sentence = " ".join(raw.split()).casefold()
            if not sentence:
                continue

            filled: Dict[SlotKind, str] = {}
            for rule in self._matches(sentence):
                for ref in rule.fills:
                    filled.setdefault(ref.slot, ref.token)
                    if not vocabulary.allows(ref.slot, ref.token):
                        suggestions.append(Suggestion(ref.slot, ref.token, rule.weight))

            if all(kind in filled for kind in SLOT_ORDER):
                action = filled[SlotKind.ACTION]
                events.append(
                    AaodEvent(
                        **{kind.value: filled[kind] for kind in SLOT_ORDER},
                        time=document.time,
                        type_index=self.event_types.get(action, 0),
                    )
                )

        logger.debug(
            f"Document {document.id}: {len(events)} candidates, {len(suggestions)} suggestions"
        )
        return Extraction(events=tuple(events), suggestions=tuple(suggestions))

    async def extract(self, document: Document, vocabulary: Vocabulary) -> Extraction:
        return self.extract_sync(document, vocabulary)


register_backend(RuleBasedBackend.name, RuleBasedBackend)
