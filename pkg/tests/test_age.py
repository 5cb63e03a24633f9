import anyio
import pytest

from numevent.age import (
    Document,
    Extraction,
    ExtractorBackend,
    align_events,
    extraction_report,
    run_loop,
    run_round,
)
from numevent.errors import BackendFailure, EmptySeries
from numevent.vocab import AaodEvent, EventSet, SlotKind, Suggestion, validate_event


def ev(time: float, direction: str = "down") -> AaodEvent:
    return AaodEvent(
        actor="opec", action="cut", object="production", direction=direction, time=time
    )


class FailingBackend(ExtractorBackend):
    name = "failing"

    def __init__(self, bad_ids):
        self.bad_ids = set(bad_ids)

    async def extract(self, document, vocabulary):
        await anyio.sleep(0)
        if document.id in self.bad_ids:
            raise RuntimeError(f"cannot read {document.id}")
        return Extraction()


class CountingBackend(ExtractorBackend):
    name = "counting"

    def __init__(self, single_flight: bool):
        self.single_flight = single_flight
        self.in_flight = 0
        self.peak = 0

    async def extract(self, document, vocabulary):
        self.in_flight += 1
        self.peak = max(self.peak, self.in_flight)
        await anyio.sleep(0.01)
        self.in_flight -= 1
        return Extraction(events=(ev(document.time),))


@pytest.mark.asyncio
async def test_fixture_corpus_reaches_fixed_point(corpus, vocabulary, rule_backend):
    rounds = await run_loop(corpus, vocabulary, rule_backend, threshold=0.5, max_rounds=3)

    assert len(rounds) == 2
    first, second = rounds
    assert first.vocabulary_after.version == 1
    assert first.added == {SlotKind.ACTOR: ("saudi arabia",), SlotKind.ACTION: ("raise",)}
    assert first.rejected_count == 1
    assert len(first.accepted_events) == 2
    assert second.vocabulary_after.version == 1
    assert second.rejected_count == 0
    assert len(second.accepted_events) == 3
    for r in rounds:
        for event in r.accepted_events:
            assert validate_event(event, r.vocabulary_after).accepted
        assert all(s.is_deduplicated for s in r.accepted)


@pytest.mark.asyncio
async def test_loop_is_deterministic(corpus, vocabulary, rule_backend):
    a = await run_loop(corpus, vocabulary, rule_backend, 0.5, 3)
    b = await run_loop(corpus, vocabulary, rule_backend, 0.5, 3)
    assert [r.model_dump_json() for r in a] == [r.model_dump_json() for r in b]


@pytest.mark.asyncio
async def test_accepted_events_bucket_by_document_time(corpus, vocabulary, rule_backend):
    rounds = await run_loop(corpus, vocabulary, rule_backend, 0.5, 3)
    buckets = {s.bucket: [e.actor for e in s.events] for s in rounds[-1].accepted}
    assert buckets == {0.0: ["opec"], 1.0: ["saudi arabia", "opec"]}


@pytest.mark.asyncio
async def test_no_suggestions_means_one_round(vocabulary):
    docs = [Document(id="a", time=0.0, body="x")]
    rounds = await run_loop(docs, vocabulary, CountingBackend(False), 0.5, 3)
    assert len(rounds) == 1
    assert rounds[0].vocabulary_after == vocabulary


@pytest.mark.asyncio
async def test_high_threshold_keeps_pending_suggestions(corpus, vocabulary, rule_backend):
    result = await run_round(corpus, vocabulary, rule_backend, threshold=1.5)
    assert result.vocabulary_after.version == 0
    assert {(s.slot, s.token) for s in result.pending} == {
        (SlotKind.ACTOR, "saudi arabia"),
        (SlotKind.ACTION, "raise"),
    }


@pytest.mark.asyncio
async def test_pending_scores_add_up_across_rounds(corpus, vocabulary, rule_backend):
    carried = [Suggestion(SlotKind.ACTOR, "saudi arabia", 1.0)]
    result = await run_round(corpus, vocabulary, rule_backend, threshold=1.5, pending=carried)
    assert result.vocabulary_after.allows(SlotKind.ACTOR, "saudi arabia")
    assert not result.vocabulary_after.allows(SlotKind.ACTION, "raise")


@pytest.mark.asyncio
async def test_backend_failure_names_first_failing_document(vocabulary):
    docs = [Document(id=f"d{i}", time=float(i), body="") for i in range(5)]
    with pytest.raises(BackendFailure) as info:
        await run_round(docs, vocabulary, FailingBackend({"d3", "d1"}), 0.5)
    assert info.value.doc_id == "d1"


@pytest.mark.asyncio
async def test_concurrency_is_bounded_by_single_flight(vocabulary):
    docs = [Document(id=f"d{i}", time=float(i), body="") for i in range(4)]

    serial = CountingBackend(single_flight=True)
    result = await run_round(docs, vocabulary, serial, 0.5)
    assert serial.peak == 1
    assert [s.bucket for s in result.accepted] == [0.0, 1.0, 2.0, 3.0]

    parallel = CountingBackend(single_flight=False)
    await run_round(docs, vocabulary, parallel, 0.5, concurrency=2)
    assert parallel.peak == 2


@pytest.mark.asyncio
async def test_series_times_bucket_by_window(vocabulary):
    docs = [Document(id=f"d{i}", time=t, body="") for i, t in enumerate([0.5, 0.9, 2.0, 7.0])]
    result = await run_round(
        docs, vocabulary, CountingBackend(False), 0.5, series_times=[0.0, 1.0, 2.0, 3.0]
    )
    assert [(s.bucket, len(s)) for s in result.accepted] == [(1, 1), (2, 1)]
    assert result.dropped == 1
    assert extraction_report([result], vocabulary)["rounds"][0]["dropped"] == 1


def test_align_events_uses_first_timestamp_at_or_after():
    events = EventSet(events=(ev(0.5), ev(1.0), ev(1.2, "up"), ev(9.0)))
    alignment = align_events(events, [0.0, 1.0, 2.0, 3.0], m=2)
    assert [(w.index, w.start, len(w.events)) for w in alignment.windows] == [(1, 0, 2), (2, 1, 1)]
    assert alignment.dropped == 1
    assert alignment.pairs()[0][0] == 1


def test_align_events_on_empty_series():
    with pytest.raises(EmptySeries):
        align_events(EventSet(events=(ev(0.0),)), [], m=1)


@pytest.mark.asyncio
async def test_extraction_report(corpus, vocabulary, rule_backend):
    rounds = await run_loop(corpus, vocabulary, rule_backend, 0.5, 3)
    report = extraction_report(rounds, vocabulary)
    assert report["final_version"] == 1
    assert report["converged"]
    assert report["rounds"][0]["added"]["actor"] == ["saudi arabia"]
    assert [r["accepted"] for r in report["rounds"]] == [2, 3]


@pytest.mark.asyncio
async def test_single_round_budget_applies_suggestions_without_using_them(
    corpus, vocabulary, rule_backend
):
    rounds = await run_loop(corpus, vocabulary, rule_backend, threshold=0.5, max_rounds=1)
    assert len(rounds) == 1
    only = rounds[0]
    assert only.vocabulary_after.version == 1
    assert only.vocabulary_after.allows(SlotKind.ACTOR, "saudi arabia")
    assert [e.actor for e in only.accepted_events] == ["opec", "opec"]
    assert only.rejected_count == 1
    assert not extraction_report(rounds, vocabulary)["converged"]
