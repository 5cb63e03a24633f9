"""
Synthetic paired series/event datasets.

A marked multivariate Hawkes process supplies event arrivals. Each arrival is
snapped to its step by floor, gets an AAOD mark drawn from its type's mark
table, and shocks the differenced series through the IRF kernel on top of an
AR(4) background. Levels are recovered by cumulative sum and cut into windows,
each paired with the gold events that fall inside it.
"""

import hashlib
import json
import logging
from datetime import date
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from . import __version__
from .age import align_events
from .dynamics import ArParams, DiffSeries, IrfKernel, simulate_ar, to_levels
from .errors import (
    InvalidInputError,
    MarkCompositionError,
    MarkTableGap,
    StepOutOfRange,
    TypeOutOfRange,
)
from .hawkes import EventSequence, HawkesParams, simulate
from .vocab import (
    SLOT_ORDER,
    AaodEvent,
    EventSet,
    SlotKind,
    Vocabulary,
    dedup_event_set,
    normalize_token,
    validate_event,
)

logger = logging.getLogger(__name__)

MAX_MARK_DRAWS = 100
SNAPPING = "floor"


class MarkTable(BaseModel):
    """Categorical token weights per slot for one event type."""

    model_config = ConfigDict(frozen=True)

    slots: Dict[SlotKind, Dict[str, float]]

    @field_validator("slots", mode="before")
    @classmethod
    def _normalize(cls, value: Dict) -> Dict[SlotKind, Dict[str, float]]:
        slots: Dict[SlotKind, Dict[str, float]] = {}
        for kind in SLOT_ORDER:
            raw = value.get(kind, value.get(kind.value))
            if not raw:
                raise ValueError(f"mark table has no {kind.value} tokens")
            weights: Dict[str, float] = {}
            for token, weight in dict(raw).items():
                if weight < 0:
                    raise ValueError(f"negative weight for {kind.value} token {token!r}")
                key = normalize_token(token)
                weights[key] = weights.get(key, 0.0) + float(weight)
            if sum(weights.values()) <= 0:
                raise ValueError(f"{kind.value} weights must have a positive sum")
            slots[kind] = weights
        return slots

    def draw(self, rng: np.random.Generator) -> Dict[SlotKind, str]:
        mark: Dict[SlotKind, str] = {}
        for kind in SLOT_ORDER:
            tokens = list(self.slots[kind])
            weights = np.asarray(list(self.slots[kind].values()), dtype=float)
            mark[kind] = tokens[int(rng.choice(len(tokens), p=weights / weights.sum()))]
        return mark


class Calendar(BaseModel):
    """Maps step timestamps to calendar dates."""

    model_config = ConfigDict(frozen=True)

    origin: date = date(1970, 1, 1)
    unit_days: float = Field(default=7.0, gt=0.0)
    """Days per unit of series time."""

    def timestamp(self, t: float) -> pd.Timestamp:
        return pd.Timestamp(self.origin) + pd.to_timedelta(t * self.unit_days, unit="D")

    def month_key(self, t: float) -> str:
        return self.timestamp(t).strftime("%Y-%m")


class GeneratorConfig(BaseModel):
    """The full generative tuple plus output layout."""

    model_config = ConfigDict(frozen=True)

    hawkes: HawkesParams
    irf: IrfKernel
    ar: ArParams = Field(default_factory=ArParams)
    mark_tables: Dict[int, MarkTable]
    """Mark table per event type."""

    vocabulary: Vocabulary
    T: int = Field(ge=1)
    """Horizon in steps."""

    y0: float = 0.0
    m: int = Field(ge=1)
    """Window length in steps."""

    stride: Optional[int] = Field(default=None, ge=1)
    """Step between consecutive window starts; defaults to m."""

    seed: int = Field(default=0, ge=0)
    calendar: Calendar = Field(default_factory=Calendar)
    explosion_cap: int = Field(default=10_000_000, ge=1)

    @model_validator(mode="after")
    def _check(self) -> "GeneratorConfig":
        if self.irf.K != self.hawkes.K:
            raise ValueError(f"IRF kernel has {self.irf.K} types, Hawkes has {self.hawkes.K}")
        for k, table in self.mark_tables.items():
            for kind, weights in table.slots.items():
                missing = [t for t in weights if not self.vocabulary.allows(kind, t)]
                if missing:
                    raise ValueError(
                        f"mark table {k} uses {kind.value} tokens outside the vocabulary: {missing}"
                    )
        return self

    @property
    def warmup(self) -> int:
        return max(4, self.irf.H)

    @property
    def step(self) -> int:
        return self.stride or self.m


class PairedSample(BaseModel):
    """A numeric window with its gold event set."""

    model_config = ConfigDict(frozen=True)

    sample_id: str
    window: Tuple[float, ...]
    """m consecutive levels."""

    window_start: int
    window_end: float
    month: str
    gold: EventSet


class Provenance(BaseModel):
    model_config = ConfigDict(frozen=True)

    config_hash: str
    seed: Optional[int] = None
    snapping: str = SNAPPING
    version: str = __version__
    source: str = "synthetic"


class PairedDataset(BaseModel):
    model_config = ConfigDict(frozen=True)

    samples: Tuple[PairedSample, ...] = ()
    provenance: Provenance


class SyntheticDataset(PairedDataset):
    """Generator output, with the underlying series and arrivals kept alongside."""

    series: DiffSeries
    events: EventSequence

    @property
    def levels(self) -> np.ndarray:
        return to_levels(self.series)


def _digest(payload: object) -> str:
    canonical = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def config_hash(config: BaseModel) -> str:
    """SHA-256 of the canonical JSON form of ``config``."""
    return _digest(config.model_dump(mode="json"))


def _streams(seed: int) -> Tuple[np.random.Generator, ...]:
    arrivals, marks, innovations = np.random.SeedSequence(seed).spawn(3)
    return tuple(np.random.default_rng(s) for s in (arrivals, marks, innovations))


def _draw_mark(
    config: GeneratorConfig, k: int, step: int, rng: np.random.Generator
) -> AaodEvent:
    table = config.mark_tables[k]
    for _ in range(MAX_MARK_DRAWS):
        mark = table.draw(rng)
        event = AaodEvent(
            **{kind.value: mark[kind] for kind in SLOT_ORDER}, time=float(step), type_index=k
        )
        if validate_event(event, config.vocabulary).accepted:
            return event
    raise MarkCompositionError(f"No valid mark for event type {k} after {MAX_MARK_DRAWS} draws")


def _shocks(irf: IrfKernel, steps: np.ndarray, types: np.ndarray, T: int) -> np.ndarray:
    shocks = np.zeros(T)
    beta = irf.beta_array
    for s, k in zip(steps.tolist(), types.tolist()):
        h = np.arange(min(irf.H, T - 1 - s) + 1)
        np.add.at(shocks, s + h, beta[k, h])
    return shocks


def _windows(n: int, first: int, m: int, stride: int) -> List[Tuple[int, int]]:
    return [(start, start + m - 1) for start in range(first, n - m + 1, stride)]


def _assemble(
    config: GeneratorConfig,
    steps: np.ndarray,
    types: np.ndarray,
    marks_rng: np.random.Generator,
    innovations_rng: np.random.Generator,
) -> SyntheticDataset:
    K = config.hawkes.K
    for k in range(K):
        if k not in config.mark_tables:
            raise MarkTableGap(k)

    gold = [_draw_mark(config, k, s, marks_rng) for s, k in zip(steps.tolist(), types.tolist())]
    shocks = _shocks(config.irf, steps, types, config.T)
    dy = simulate_ar(config.ar, config.T, innovations_rng, shocks)

    series = DiffSeries(
        times=tuple(float(t) for t in range(config.T)), dy=tuple(dy.tolist()), y0=config.y0
    )
    levels = to_levels(series)
    events = EventSequence(
        times=tuple(float(s) for s in steps),
        types=tuple(int(k) for k in types),
        horizon=float(config.T),
        n_types=K,
    )

    samples = []
    for start, end in _windows(config.T, config.warmup, config.m, config.step):
        inside = tuple(e for e, s in zip(gold, steps.tolist()) if start <= s <= end)
        samples.append(
            PairedSample(
                sample_id=f"s{len(samples):06d}",
                window=tuple(levels[start:end + 1].tolist()),
                window_start=start,
                window_end=float(end),
                month=config.calendar.month_key(end),
                gold=dedup_event_set(EventSet(events=inside, bucket=end)),
            )
        )

    logger.info(
        f"Generated {len(samples)} windows from {len(gold)} events over {config.T} steps"
    )
    return SyntheticDataset(
        samples=tuple(samples),
        provenance=Provenance(config_hash=config_hash(config), seed=config.seed),
        series=series,
        events=events,
    )


def generate(config: GeneratorConfig) -> SyntheticDataset:
    """Simulate arrivals and build the paired dataset.

    Raises:
        ExplosionGuard: If the Hawkes simulation exceeds ``explosion_cap`` events.
        MarkTableGap: If an event type has no mark table.
    """
    arrivals_rng, marks_rng, innovations_rng = _streams(config.seed)
    seq = simulate(config.hawkes, float(config.T), arrivals_rng, max_events=config.explosion_cap)
    times, types = seq.arrays()
    steps = np.minimum(np.floor(times).astype(np.int64), config.T - 1)
    return _assemble(config, steps, types, marks_rng, innovations_rng)


def force_events(config: GeneratorConfig, events: Sequence[Tuple[int, int]]) -> SyntheticDataset:
    """Run the generator pipeline on an explicit list of (step, type) arrivals.

    Raises:
        StepOutOfRange: If a step is outside [0, T).
    """
    for step, k in events:
        if not 0 <= step < config.T:
            raise StepOutOfRange(f"Step {step} outside [0, {config.T})")
        if not 0 <= k < config.hawkes.K:
            raise TypeOutOfRange(k, config.hawkes.K)

    _, marks_rng, innovations_rng = _streams(config.seed)
    steps = np.asarray([s for s, _ in events], dtype=np.int64)
    types = np.asarray([k for _, k in events], dtype=np.int64)
    order = np.argsort(steps, kind="stable")
    return _assemble(config, steps[order], types[order], marks_rng, innovations_rng)


def pair_series(
    levels: Sequence[float],
    times: Sequence[float],
    events: EventSet,
    m: int,
    stride: Optional[int] = None,
    calendar: Optional[Calendar] = None,
) -> PairedDataset:
    """Cut an observed level series into windows paired with aligned events.

    Events are assigned to the first timestamp at or after them; a window's
    gold set gathers every endpoint it spans.
    """
    levels = np.asarray(levels, dtype=float)
    if levels.size != len(times):
        raise InvalidInputError("levels and times must have equal length")
    if m < 1:
        raise InvalidInputError(f"Window length must be >= 1, got {m}")
    calendar = calendar or Calendar(unit_days=1.0)
    alignment = align_events(events, times, m)
    by_index: Dict[int, EventSet] = dict(alignment.pairs())

    samples = []
    for start, end in _windows(levels.size, 0, m, stride or m):
        inside = tuple(
            e for idx in range(start, end + 1) if idx in by_index for e in by_index[idx].events
        )
        samples.append(
            PairedSample(
                sample_id=f"s{len(samples):06d}",
                window=tuple(levels[start:end + 1].tolist()),
                window_start=start,
                window_end=float(times[end]),
                month=calendar.month_key(float(times[end])),
                gold=dedup_event_set(EventSet(events=inside, bucket=end)),
            )
        )

    digest = _digest(
        {
            "levels": levels.tolist(),
            "times": [float(t) for t in times],
            "m": m,
            "stride": stride or m,
            "events": [list(e.key) + [e.time] for e in events.events],
        }
    )
    return PairedDataset(
        samples=tuple(samples),
        provenance=Provenance(config_hash=digest, source="observed"),
    )


def split_chronological(
    dataset: PairedDataset, cutoff: float
) -> Tuple[PairedDataset, PairedDataset]:
    """Train holds samples with window_end < cutoff, test the rest."""
    train = tuple(s for s in dataset.samples if s.window_end < cutoff)
    test = tuple(s for s in dataset.samples if s.window_end >= cutoff)
    logger.info(f"Chronological split at {cutoff}: {len(train)} train, {len(test)} test")
    return (
        PairedDataset(samples=train, provenance=dataset.provenance),
        PairedDataset(samples=test, provenance=dataset.provenance),
    )
