import numpy as np
import pytest

from numevent.dynamics import ControlsSpec, estimate_irf
from numevent.errors import (
    MarkCompositionError,
    MarkTableGap,
    StepOutOfRange,
    TypeOutOfRange,
)
from numevent.generator import (
    Calendar,
    config_hash,
    force_events,
    generate,
    pair_series,
    split_chronological,
)
from numevent.vocab import AaodEvent, EventSet, validate_event

from .conftest import KERNEL, mark_table

BUSY = dict(mu=(0.05, 0.04), alpha=((0.2, 0.1), (0.1, 0.2)), sigma=0.1)


def test_no_events_and_no_noise_gives_flat_levels(config_factory):
    dataset = generate(config_factory())
    assert len(dataset.events) == 0
    np.testing.assert_array_equal(dataset.levels, np.full(200, 100.0))
    assert all(len(s.gold) == 0 for s in dataset.samples)


def test_windows_start_after_warmup(config_factory):
    config = config_factory()
    dataset = generate(config)
    assert config.warmup == 8
    assert dataset.samples[0].window_start == 8
    assert all(len(s.window) == config.m for s in dataset.samples)
    assert dataset.samples[1].window_start - dataset.samples[0].window_start == config.m
    assert [s.sample_id for s in dataset.samples[:2]] == ["s000000", "s000001"]


def test_single_forced_event_traces_the_kernel(config_factory):
    dataset = force_events(config_factory(), [(50, 0)])
    dy = dataset.series.dy_array
    np.testing.assert_allclose(dy[50:59], KERNEL[0], atol=1e-12)
    assert not dy[:50].any()
    assert not dy[59:].any()
    assert dataset.levels[-1] == pytest.approx(100.0 + sum(KERNEL[0]))


def test_forced_responses_add_up(config_factory):
    config = config_factory()
    first = force_events(config, [(40, 0)]).series.dy_array
    second = force_events(config, [(43, 1)]).series.dy_array
    both = force_events(config, [(43, 1), (40, 0)]).series.dy_array
    np.testing.assert_allclose(both, first + second, atol=1e-12)


def test_event_at_final_step_is_truncated(config_factory):
    dataset = force_events(config_factory(), [(199, 1)])
    dy = dataset.series.dy_array
    assert dy[199] == pytest.approx(KERNEL[1][0])
    assert not dy[:199].any()


def test_generation_is_deterministic(config_factory):
    config = config_factory(**BUSY)
    a, b = generate(config), generate(config)
    assert a.model_dump_json() == b.model_dump_json()
    assert len(a.events) > 0


def test_seed_changes_output(config_factory):
    a = generate(config_factory(**BUSY))
    b = generate(config_factory(seed=4, **BUSY))
    assert a.provenance.config_hash != b.provenance.config_hash
    assert a.series != b.series


def test_no_forced_events_matches_zero_baseline(config_factory):
    config = config_factory(sigma=0.3)
    assert force_events(config, []).series == generate(config).series


def test_gold_events_validate_and_fall_inside_windows(config_factory, vocabulary):
    dataset = generate(config_factory(**BUSY))
    for sample in dataset.samples:
        assert sample.gold.is_deduplicated
        for event in sample.gold.events:
            assert validate_event(event, vocabulary).accepted
            assert sample.window_start <= event.time <= sample.window_end


def test_missing_mark_table(config_factory):
    config = config_factory(mark_tables={0: mark_table()})
    with pytest.raises(MarkTableGap) as info:
        generate(config)
    assert info.value.event_type == 1


def test_forced_event_bounds(config_factory):
    config = config_factory()
    with pytest.raises(StepOutOfRange):
        force_events(config, [(200, 0)])
    with pytest.raises(StepOutOfRange):
        force_events(config, [(-1, 0)])
    with pytest.raises(TypeOutOfRange):
        force_events(config, [(5, 2)])


def test_marks_that_break_rules_are_rejected(config_factory):
    config = config_factory(mark_tables={0: mark_table("up"), 1: mark_table()})
    with pytest.raises(MarkCompositionError):
        force_events(config, [(10, 0)])
    assert len(force_events(config, [(10, 1)]).events) == 1


def test_estimated_kernel_matches_generating_kernel(config_factory):
    config = config_factory(T=600)
    rng = np.random.default_rng(17)
    counts = rng.poisson(0.3, size=(600, 2))
    arrivals = [(int(s), int(k)) for s, k in zip(*np.nonzero(counts)) for _ in range(counts[s, k])]

    dataset = force_events(config, arrivals)
    kernel = estimate_irf(dataset.series, dataset.events, 8, ControlsSpec(treatment="count"))
    np.testing.assert_allclose(kernel.beta_array, np.asarray(KERNEL), atol=1e-8)


def test_calendar_month_keys():
    calendar = Calendar()
    assert calendar.month_key(0) == "1970-01"
    assert calendar.month_key(5) == "1970-02"
    assert Calendar(unit_days=1.0).month_key(31) == "1970-02"


def test_sample_month_uses_window_end(config_factory):
    config = config_factory()
    dataset = generate(config)
    for sample in dataset.samples[:5]:
        assert sample.month == config.calendar.month_key(sample.window_end)


def test_config_hash_is_stable(config_factory):
    assert config_hash(config_factory()) == config_hash(config_factory())
    assert config_hash(config_factory()) != config_hash(config_factory(T=201))


def test_pair_series_aligns_observed_events():
    events = EventSet(
        events=(
            AaodEvent(actor="opec", action="cut", object="production", direction="down", time=0.5),
            AaodEvent(actor="opec", action="cut", object="production", direction="down", time=3.0),
            AaodEvent(actor="opec", action="cut", object="production", direction="down", time=9.0),
        )
    )
    dataset = pair_series(np.arange(1.0, 9.0), np.arange(8.0), events, m=4)
    assert [s.window for s in dataset.samples] == [(1.0, 2.0, 3.0, 4.0), (5.0, 6.0, 7.0, 8.0)]
    assert len(dataset.samples[0].gold) == 1
    assert len(dataset.samples[1].gold) == 0
    assert dataset.provenance.source == "observed"


def test_chronological_split(config_factory):
    dataset = generate(config_factory())
    train, test = split_chronological(dataset, 100.0)
    assert len(train.samples) + len(test.samples) == len(dataset.samples)
    assert all(s.window_end < 100.0 for s in train.samples)
    assert all(s.window_end >= 100.0 for s in test.samples)
    assert train.provenance == dataset.provenance
