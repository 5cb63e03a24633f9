"""
Agent-guided event extraction.

Each round extracts candidate events from every document with the current
restricted vocabulary, rejects candidates that fail validation, deduplicates
the survivors per time bucket, and folds the backend's vocabulary suggestions
into the next vocabulary version. Rounds repeat until the vocabulary stops
changing or the round budget runs out.

Example usage:
```
    backend = get_backend("rule_based").from_config(options)
    rounds = anyio.run(run_loop, documents, vocabulary, backend, 0.5, 3)
    for r in rounds:
        print(r.round_index, len(r.accepted_events), r.rejected_count)
```
"""

import abc
import logging
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple, Union

import anyio
import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from .errors import BackendFailure, EmptySeries, InvalidInputError
from .vocab import (
    SLOT_ORDER,
    AaodEvent,
    EventSet,
    SlotKind,
    Suggestion,
    Vocabulary,
    aggregate_suggestions,
    dedup_event_set,
    expand_vocabulary,
    validate_event,
)

logger = logging.getLogger(__name__)

Bucket = Union[int, float, str]


class Document(BaseModel):
    """A dated text from the historical corpus."""

    model_config = ConfigDict(frozen=True)

    id: str
    time: float
    """Timestamp on the numeric series' time axis."""

    body: str


class Extraction(BaseModel):
    """What a backend returns for one document."""

    model_config = ConfigDict(frozen=True)

    events: Tuple[AaodEvent, ...] = ()
    suggestions: Tuple[Suggestion, ...] = ()


class ExtractorBackend(abc.ABC):
    """Pluggable extraction agent.

    Implementations must tolerate concurrent ``extract`` calls unless they set
    ``single_flight``.
    """

    name: str = "base"
    single_flight: bool = False

    @classmethod
    def from_config(cls, options: Optional[Mapping[str, Any]] = None) -> "ExtractorBackend":
        """Build a backend from a mapping of constructor options."""
        return cls(**dict(options or {}))

    @abc.abstractmethod
    async def extract(self, document: Document, vocabulary: Vocabulary) -> Extraction:
        """Return candidate events and vocabulary suggestions for ``document``."""


class ExtractionRound(BaseModel):
    """One select-expand pass over the corpus."""

    model_config = ConfigDict(frozen=True)

    round_index: int = Field(ge=0)
    accepted: Tuple[EventSet, ...] = ()
    """One deduplicated EventSet per time bucket."""

    rejected_count: int = 0
    dropped: int = 0
    """Accepted events later than the final series timestamp."""

    vocabulary_after: Vocabulary
    added: Dict[SlotKind, Tuple[str, ...]] = Field(default_factory=dict)
    """Tokens this round appended to the vocabulary."""

    pending: Tuple[Suggestion, ...] = ()
    """Aggregated suggestions still below the threshold, carried to the next round."""

    @property
    def accepted_events(self) -> List[AaodEvent]:
        return [event for event_set in self.accepted for event in event_set.events]


class AlignedWindow(BaseModel):
    """Events assigned to the window ending at series row ``index``."""

    model_config = ConfigDict(frozen=True)

    index: int
    start: int
    events: EventSet


class Alignment(BaseModel):
    model_config = ConfigDict(frozen=True)

    windows: Tuple[AlignedWindow, ...] = ()
    dropped: int = 0
    """Events later than the final series timestamp."""

    def pairs(self) -> List[Tuple[int, EventSet]]:
        return [(w.index, w.events) for w in self.windows]


def _endpoint_indices(series_times: Sequence[float], event_times: Sequence[float]) -> np.ndarray:
    grid = np.asarray(series_times, dtype=float)
    if grid.size == 0:
        raise EmptySeries("Cannot align events to an empty series")
    if grid.size > 1 and np.any(np.diff(grid) <= 0):
        raise InvalidInputError("Series timestamps must be strictly increasing")
    return np.searchsorted(grid, np.asarray(event_times, dtype=float), side="left")


def align_events(events: EventSet, series_times: Sequence[float], m: int) -> Alignment:
    """Assign each event to the window whose right endpoint is the first timestamp >= its time.

    Raises:
        EmptySeries: If ``series_times`` is empty.
    """
    if m < 1:
        raise InvalidInputError(f"Window length must be >= 1, got {m}")
    n = len(series_times)
    indices = _endpoint_indices(series_times, [e.time for e in events.events])

    grouped: Dict[int, List[AaodEvent]] = {}
    dropped = 0
    for event, idx in zip(events.events, indices.tolist()):
        if idx >= n:
            dropped += 1
            continue
        grouped.setdefault(idx, []).append(event)

    if dropped:
        logger.info(f"Dropped {dropped} events after the final series timestamp")
    windows = tuple(
        AlignedWindow(
            index=idx,
            start=max(0, idx - m + 1),
            events=EventSet(events=tuple(grouped[idx]), bucket=idx),
        )
        for idx in sorted(grouped)
    )
    return Alignment(windows=windows, dropped=dropped)


async def _extract_all(
    docs: Sequence[Document],
    v: Vocabulary,
    backend: ExtractorBackend,
    concurrency: int,
) -> List[Extraction]:
    results: List[Optional[Extraction]] = [None] * len(docs)
    failures: Dict[int, Exception] = {}
    limiter = anyio.CapacityLimiter(1 if backend.single_flight else max(1, concurrency))

    async def worker(position: int, doc: Document) -> None:
        async with limiter:
            try:
                results[position] = await backend.extract(doc, v)
            except Exception as exc:
                failures[position] = exc

    async with anyio.create_task_group() as tg:
        for position, doc in enumerate(docs):
            tg.start_soon(worker, position, doc)

    if failures:
        first = min(failures)
        doc_id = docs[first].id
        logger.error(f"Backend {backend.name} failed on document {doc_id}: {failures[first]}")
        raise BackendFailure(doc_id, failures[first]) from failures[first]
    return results


async def run_round(
    docs: Sequence[Document],
    v: Vocabulary,
    backend: ExtractorBackend,
    threshold: float,
    *,
    round_index: int = 0,
    pending: Sequence[Suggestion] = (),
    series_times: Optional[Sequence[float]] = None,
    concurrency: int = 8,
) -> ExtractionRound:
    """One round of constrained extraction followed by vocabulary expansion.

    Candidates are validated against ``v`` as it stood at the round start.
    Buckets are aligned window indices when ``series_times`` is given,
    otherwise document timestamps.

    Raises:
        BackendFailure: If the backend fails on any document; nothing is applied.
    """
    extractions = await _extract_all(docs, v, backend, concurrency)

    buckets: Dict[Bucket, List[AaodEvent]] = {}
    rejected = 0
    dropped = 0
    suggestions: List[Suggestion] = list(pending)
    for extraction in extractions:
        suggestions.extend(extraction.suggestions)
        for event in extraction.events:
            if validate_event(event, v).accepted:
                buckets.setdefault(event.time, []).append(event)
            else:
                rejected += 1

    if series_times is not None and buckets:
        keys = list(buckets)
        indices = _endpoint_indices(series_times, keys).tolist()
        regrouped: Dict[Bucket, List[AaodEvent]] = {}
        for key, idx in zip(keys, indices):
            if idx < len(series_times):
                regrouped.setdefault(idx, []).extend(buckets[key])
            else:
                dropped += len(buckets[key])
        buckets = regrouped
        if dropped:
            logger.info(f"Dropped {dropped} events after the final series timestamp")

    accepted = tuple(
        dedup_event_set(EventSet(events=tuple(buckets[b]), bucket=b)) for b in sorted(buckets)
    )

    totals = aggregate_suggestions(suggestions)
    vocabulary_after = expand_vocabulary(
        v, [(slot, token, score) for (slot, token), score in totals.items()], threshold
    )
    carried = tuple(
        Suggestion(slot, token, score)
        for (slot, token), score in totals.items()
        if not vocabulary_after.allows(slot, token)
    )
    added = {kind: tuple(tokens) for kind, tokens in v.diff(vocabulary_after).items() if tokens}

    result = ExtractionRound(
        round_index=round_index,
        accepted=accepted,
        rejected_count=rejected,
        dropped=dropped,
        vocabulary_after=vocabulary_after,
        added=added,
        pending=carried,
    )
    logger.info(
        f"Round {round_index}: {len(result.accepted_events)} accepted, {rejected} rejected, "
        f"vocabulary v{vocabulary_after.version}"
    )
    return result


async def run_loop(
    docs: Sequence[Document],
    v0: Vocabulary,
    backend: ExtractorBackend,
    threshold: float,
    max_rounds: int,
    *,
    series_times: Optional[Sequence[float]] = None,
    concurrency: int = 8,
) -> List[ExtractionRound]:
    """Repeat rounds until the vocabulary version is unchanged or ``max_rounds`` is hit."""
    if max_rounds < 1:
        raise InvalidInputError(f"max_rounds must be >= 1, got {max_rounds}")

    rounds: List[ExtractionRound] = []
    vocabulary = v0
    pending: Tuple[Suggestion, ...] = ()
    for round_index in range(max_rounds):
        result = await run_round(
            docs,
            vocabulary,
            backend,
            threshold,
            round_index=round_index,
            pending=pending,
            series_times=series_times,
            concurrency=concurrency,
        )
        rounds.append(result)
        if result.vocabulary_after.version == vocabulary.version:
            break
        vocabulary = result.vocabulary_after
        pending = result.pending
    return rounds


def extraction_report(rounds: Sequence[ExtractionRound], v0: Vocabulary) -> Dict[str, Any]:
    """Per-round counts and vocabulary diffs, ready to be written as JSON."""
    entries = []
    for r in rounds:
        entries.append(
            {
                "round": r.round_index,
                "accepted": len(r.accepted_events),
                "rejected": r.rejected_count,
                "dropped": r.dropped,
                "version": r.vocabulary_after.version,
                "added": {kind.value: list(r.added.get(kind, ())) for kind in SLOT_ORDER},
                "pending": len(r.pending),
            }
        )
    versions = [v0.version] + [r.vocabulary_after.version for r in rounds]
    return {
        "initial_version": v0.version,
        "final_version": versions[-1],
        "converged": len(versions) > 1 and versions[-1] == versions[-2],
        "rounds": entries,
    }
