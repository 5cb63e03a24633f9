"""Command-line interface for numevent."""

import argparse
import functools
import logging
import sys
from pathlib import Path
from typing import Any, Callable, List, Optional, Sequence

import anyio
from pydantic import BaseModel, ValidationError
from rich.console import Console

from .age import extraction_report, run_loop
from .backends import get_available_backends, get_backend
from .config import NumeventConfig
from .dynamics import ControlsSpec, estimate_irf, fit_ar
from .errors import DidNotConverge, NumeventError
from .evaluator import MatchRule, evaluate_predictions
from .generator import Calendar, generate, pair_series, split_chronological
from .hawkes import EventSequence, fit, goodness_of_fit
from .io import (
    EventRecord,
    load_generator_config,
    load_vocabulary,
    read_dataset,
    read_documents,
    read_event_records,
    read_json,
    read_levels,
    read_series,
    save_ar,
    save_hawkes_params,
    save_irf,
    save_vocabulary,
    write_dataset,
    write_event_records,
    write_json,
    write_provenance,
)
from .vocab import SLOT_ORDER, EventSet, validate_event

logger = logging.getLogger(__name__)

LOG_LEVELS = ["DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"]


class CommandOutcome(BaseModel):
    """What a subcommand reports back; a nonzero exit code means an error."""

    exit_code: int = 0
    message: str = ""
    report_path: Optional[str] = None


def _outcome(command: Callable[..., CommandOutcome]) -> Callable[..., CommandOutcome]:
    """Map raised errors onto exit codes."""

    @functools.wraps(command)
    def wrapper(*args: Any, **kwargs: Any) -> CommandOutcome:
        try:
            return command(*args, **kwargs)
        except NumeventError as e:
            logger.debug(f"{command.__name__} failed", exc_info=True)
            return CommandOutcome(exit_code=e.exit_code, message=f"{type(e).__name__}: {e}")
        except ValidationError as e:
            return CommandOutcome(exit_code=1, message=f"Invalid input: {e}")
        except OSError as e:
            return CommandOutcome(exit_code=2, message=f"I/O error: {e}")

    return wrapper


def _events(records: Sequence[EventRecord]) -> List:
    return [r.event for r in records]


@_outcome
def cmd_extract(
    corpus: Path,
    vocab: Path,
    out: Path,
    backend: str = "rule_based",
    threshold: float = 0.5,
    max_rounds: int = 3,
    backend_config: Optional[Path] = None,
    series: Optional[Path] = None,
    concurrency: int = 8,
) -> CommandOutcome:
    """Run the select-expand-iterate loop over a corpus."""
    backend_cls = get_backend(backend)
    extractor = backend_cls.from_config(read_json(backend_config) if backend_config else None)
    docs = read_documents(corpus)
    v0 = load_vocabulary(vocab)
    series_times = read_levels(series)[0] if series else None

    rounds = anyio.run(
        functools.partial(
            run_loop,
            docs,
            v0,
            extractor,
            threshold,
            max_rounds,
            series_times=series_times,
            concurrency=concurrency,
        )
    )
    final = rounds[-1]
    out = Path(out)
    records = (EventRecord(event=e) for e in final.accepted_events)
    write_event_records(out / "events.jsonl", records)
    save_vocabulary(out / "vocabulary.json", final.vocabulary_after)
    report = write_json(out / "rounds.json", extraction_report(rounds, v0))
    return CommandOutcome(
        message=(
            f"{len(rounds)} rounds, {len(final.accepted_events)} events accepted, "
            f"vocabulary v{v0.version} -> v{final.vocabulary_after.version}"
        ),
        report_path=str(report),
    )


@_outcome
def cmd_fit_hawkes(
    events: Path,
    K: int,
    out: Path,
    horizon: Optional[float] = None,
    max_iter: int = 5000,
    tolerance: float = 1e-8,
    stationarity_margin: float = 0.999,
) -> CommandOutcome:
    """Fit an exponential-kernel Hawkes process to an event file."""
    seq = EventSequence.from_events(_events(read_event_records(events)), horizon, n_types=K)
    result = fit(
        seq, K, max_iter=max_iter, tolerance=tolerance, stationarity_margin=stationarity_margin
    )
    path = save_hawkes_params(Path(out) / "hawkes_params.json", result)

    lines = [
        f"log-likelihood {result.log_likelihood:.6f} after {result.iterations} iterations "
        f"(initial {result.initial_log_likelihood:.6f})"
    ]
    if len(seq):
        for k, (stat, p) in goodness_of_fit(result.params, seq).items():
            lines.append(f"type {k}: KS {stat:.4f} p={p:.4f}")
    if not result.converged:
        error = DidNotConverge(f"Hawkes fit did not converge within {max_iter} iterations")
        lines.append(f"{type(error).__name__}: {error}")
        return CommandOutcome(
            exit_code=error.exit_code, message="\n".join(lines), report_path=str(path)
        )
    return CommandOutcome(message="\n".join(lines), report_path=str(path))


@_outcome
def cmd_estimate_irf(
    series: Path,
    events: Path,
    H: int,
    out: Path,
    lags: int = 4,
    treatment: str = "indicator",
    event_window: Optional[int] = None,
    n_types: Optional[int] = None,
    differenced: bool = False,
) -> CommandOutcome:
    """Local-projection impulse responses of the series to each event type."""
    diff = read_series(series, differenced=differenced)
    event_list = _events(read_event_records(events))
    horizon = max([e.time for e in event_list] + list(diff.times[-1:]) + [0.0]) + diff.spacing
    seq = EventSequence.from_events(event_list, horizon)
    controls = ControlsSpec(lags=lags, treatment=treatment, event_window=event_window)
    kernel = estimate_irf(diff, seq, H, controls, n_types=n_types)
    path = save_irf(Path(out) / "irf.json", kernel)

    lines = [f"IRF for {kernel.K} event types, H={kernel.H}"]
    for k in range(kernel.K):
        row = " ".join(f"{b:+.4f}" for b in kernel.beta[k])
        lines.append(f"type {k}: {row}")
    return CommandOutcome(message="\n".join(lines), report_path=str(path))


@_outcome
def cmd_fit_ar(series: Path, out: Path, differenced: bool = False) -> CommandOutcome:
    """AR(4) fit on the differenced series."""
    result = fit_ar(read_series(series, differenced=differenced))
    path = save_ar(Path(out) / "ar_params.json", result)
    phi = ", ".join(f"{p:.4f}" for p in result.params.phi)
    message = (
        f"phi ({phi}) residual variance {result.residual_variance:.6f} on {result.n_obs} rows"
        f"{'' if result.stationary else ' (not stationary)'}"
        f"{' (degenerate series)' if result.degenerate else ''}"
    )
    return CommandOutcome(message=message, report_path=str(path))


@_outcome
def cmd_generate(
    config: Path, out: Path, seed: Optional[int] = None, explosion_cap: Optional[int] = None
) -> CommandOutcome:
    """Write a synthetic paired dataset and its provenance."""
    generator_config = load_generator_config(config, seed=seed, explosion_cap=explosion_cap)
    dataset = generate(generator_config)
    out = Path(out)
    path = write_dataset(out / "dataset.jsonl", dataset)
    write_provenance(out / "provenance.json", dataset.provenance)
    return CommandOutcome(
        message=f"{len(dataset.samples)} samples from {len(dataset.events)} events",
        report_path=str(path),
    )


@_outcome
def cmd_evaluate(pred: Path, gold: Path, out: Path, min_slots: int = 3) -> CommandOutcome:
    """Monthly-averaged precision and recall of predictions against a dataset."""
    records = read_event_records(pred)
    dataset = read_dataset(gold)
    report = evaluate_predictions(
        ((r.sample_id, r.event) for r in records), dataset, MatchRule(min_slots=min_slots)
    )
    path = write_json(Path(out) / "report.json", report.model_dump(mode="json"))
    return CommandOutcome(message=report.summary(), report_path=str(path))


@_outcome
def cmd_vocab_validate(vocab: Path, out: Path, events: Optional[Path] = None) -> CommandOutcome:
    """Check a vocabulary file, and optionally an event file against it."""
    v = load_vocabulary(vocab)
    n_tokens = sum(len(v.tokens(kind)) for kind in SLOT_ORDER)
    message = f"vocabulary v{v.version}: {n_tokens} tokens, {len(v.constraints)} rules"
    if events is None:
        return CommandOutcome(message=message)

    rejected = []
    records = read_event_records(events)
    for index, record in enumerate(records):
        verdict = validate_event(record.event, v)
        if not verdict.accepted:
            rejected.append(
                {"index": index, "key": list(record.event.key), "reason": verdict.reason}
            )
    path = write_json(
        Path(out) / "validation.json",
        {"version": v.version, "checked": len(records), "rejected": rejected},
    )
    return CommandOutcome(
        message=f"{message}; {len(rejected)}/{len(records)} events rejected",
        report_path=str(path),
    )


@_outcome
def cmd_pair(
    series: Path,
    events: Path,
    m: int,
    out: Path,
    stride: Optional[int] = None,
    unit_days: float = 1.0,
) -> CommandOutcome:
    """Pair an observed level series with an event file into windowed samples."""
    times, levels = read_levels(series)
    event_set = EventSet(events=tuple(_events(read_event_records(events))))
    dataset = pair_series(levels, times, event_set, m, stride, Calendar(unit_days=unit_days))
    out = Path(out)
    path = write_dataset(out / "dataset.jsonl", dataset)
    write_provenance(out / "provenance.json", dataset.provenance)
    return CommandOutcome(message=f"{len(dataset.samples)} samples", report_path=str(path))


@_outcome
def cmd_split(dataset: Path, cutoff: float, out: Path) -> CommandOutcome:
    """Chronological train/test split of a dataset file."""
    train, test = split_chronological(read_dataset(dataset), cutoff)
    out = Path(out)
    write_dataset(out / "train.jsonl", train)
    path = write_dataset(out / "test.jsonl", test)
    write_provenance(out / "provenance.json", train.provenance)
    return CommandOutcome(
        message=f"{len(train.samples)} train, {len(test.samples)} test", report_path=str(path)
    )


def build_parser() -> argparse.ArgumentParser:
    """Build the argument parser with one subparser per pipeline step."""
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="Random seed")
    common.add_argument("--out", type=Path, default=Path("."), help="Output directory")
    common.add_argument("--quiet", action="store_true", help="Only print errors")
    common.add_argument(
        "--log-level",
        default=None,
        choices=LOG_LEVELS,
        help="Logging level (default from NUMEVENT_LOG_LEVEL or INFO)",
    )
    common.add_argument("--env-file", default=".env", help="Dotenv file with NUMEVENT_* settings")

    parser = argparse.ArgumentParser(
        prog="numevent",
        description="Synthetic event/series datasets, event extraction and evaluation",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter,
    )
    subparsers = parser.add_subparsers(dest="command", help="Command to run")

    extract = subparsers.add_parser("extract", parents=[common], help="Run the extraction loop")
    extract.add_argument("--corpus", type=Path, required=True, help="Document JSONL")
    extract.add_argument("--vocab", type=Path, required=True, help="Initial vocabulary JSON")
    extract.add_argument(
        "--backend", default=None, help=f"Extractor backend ({', '.join(get_available_backends())})"
    )
    extract.add_argument("--backend-config", type=Path, default=None, help="Backend options JSON")
    extract.add_argument("--threshold", type=float, default=None, help="Expansion threshold")
    extract.add_argument("--max-rounds", type=int, default=None, help="Round budget")
    extract.add_argument("--series", type=Path, default=None, help="Series CSV for bucketing")

    hawkes = subparsers.add_parser("fit-hawkes", parents=[common], help="Fit a Hawkes process")
    hawkes.add_argument("--events", type=Path, required=True, help="Event JSONL")
    hawkes.add_argument("-K", "--types", type=int, required=True, help="Number of event types")
    hawkes.add_argument("--horizon", type=float, default=None, help="Observation window T")

    irf = subparsers.add_parser("estimate-irf", parents=[common], help="Local projections")
    irf.add_argument("--series", type=Path, required=True, help="Series CSV")
    irf.add_argument("--events", type=Path, required=True, help="Event JSONL")
    irf.add_argument("-H", "--horizon", type=int, default=None, help="Maximum horizon")
    irf.add_argument("-K", "--types", type=int, default=None, help="Number of event types")
    irf.add_argument("--lags", type=int, default=None, help="Lagged differences as controls")
    irf.add_argument("--treatment", choices=["indicator", "count"], default=None)
    irf.add_argument("--event-window", type=int, default=None, help="Event lags controlled for")
    irf.add_argument("--differenced", action="store_true", help="CSV already holds differences")

    ar = subparsers.add_parser("fit-ar", parents=[common], help="Fit AR(4) background dynamics")
    ar.add_argument("--series", type=Path, required=True, help="Series CSV")
    ar.add_argument("--differenced", action="store_true", help="CSV already holds differences")

    gen = subparsers.add_parser("generate", parents=[common], help="Generate a synthetic dataset")
    gen.add_argument("--config", type=Path, required=True, help="Generator config JSON")

    evaluate = subparsers.add_parser("evaluate", parents=[common], help="Score predictions")
    evaluate.add_argument("--pred", type=Path, required=True, help="Prediction JSONL")
    evaluate.add_argument("--gold", type=Path, required=True, help="Dataset JSONL")
    evaluate.add_argument("--min-slots", type=int, default=3, help="Slots that must agree")

    vocab = subparsers.add_parser("vocab-validate", parents=[common], help="Check a vocabulary")
    vocab.add_argument("--vocab", type=Path, required=True, help="Vocabulary JSON")
    vocab.add_argument("--events", type=Path, default=None, help="Event JSONL to check")

    pair = subparsers.add_parser("pair", parents=[common], help="Pair a series with events")
    pair.add_argument("--series", type=Path, required=True, help="Level series CSV")
    pair.add_argument("--events", type=Path, required=True, help="Event JSONL")
    pair.add_argument("-m", "--window", type=int, required=True, help="Window length")
    pair.add_argument("--stride", type=int, default=None, help="Window stride")
    pair.add_argument("--unit-days", type=float, default=1.0, help="Days per series time unit")

    split = subparsers.add_parser("split", parents=[common], help="Chronological split")
    split.add_argument("--dataset", type=Path, required=True, help="Dataset JSONL")
    split.add_argument("--cutoff", type=float, required=True, help="First test window_end")

    return parser


def _pick(flag: Any, default: Any) -> Any:
    return default if flag is None else flag


def dispatch(args: argparse.Namespace, config: NumeventConfig) -> CommandOutcome:
    """Run the subcommand named in ``args``; flags override ``config``."""
    if args.command == "extract":
        return cmd_extract(
            args.corpus,
            args.vocab,
            args.out,
            backend=_pick(args.backend, config.extraction.backend),
            threshold=_pick(args.threshold, config.extraction.threshold),
            max_rounds=_pick(args.max_rounds, config.extraction.max_rounds),
            backend_config=args.backend_config,
            series=args.series,
            concurrency=config.extraction.concurrency,
        )
    if args.command == "fit-hawkes":
        return cmd_fit_hawkes(
            args.events,
            args.types,
            args.out,
            horizon=args.horizon,
            max_iter=config.hawkes.max_iter,
            tolerance=config.hawkes.tolerance,
            stationarity_margin=config.hawkes.stationarity_margin,
        )
    if args.command == "estimate-irf":
        return cmd_estimate_irf(
            args.series,
            args.events,
            _pick(args.horizon, config.estimation.horizon),
            args.out,
            lags=_pick(args.lags, config.estimation.control_lags),
            treatment=_pick(args.treatment, config.estimation.treatment),
            event_window=args.event_window,
            n_types=args.types,
            differenced=args.differenced,
        )
    if args.command == "fit-ar":
        return cmd_fit_ar(args.series, args.out, differenced=args.differenced)
    if args.command == "generate":
        return cmd_generate(
            args.config, args.out, seed=args.seed, explosion_cap=config.hawkes.explosion_cap
        )
    if args.command == "evaluate":
        return cmd_evaluate(args.pred, args.gold, args.out, min_slots=args.min_slots)
    if args.command == "vocab-validate":
        return cmd_vocab_validate(args.vocab, args.out, events=args.events)
    if args.command == "pair":
        return cmd_pair(
            args.series, args.events, args.window, args.out, args.stride, args.unit_days
        )
    if args.command == "split":
        return cmd_split(args.dataset, args.cutoff, args.out)
    raise ValueError(f"Unknown command {args.command}")


def run(argv: Optional[Sequence[str]] = None) -> CommandOutcome:
    """Parse ``argv``, configure logging, run the command and print its message."""
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        parser.print_help()
        return CommandOutcome(exit_code=1, message="No command given")

    config = NumeventConfig.from_dotenv(args.env_file)
    level = "WARNING" if args.quiet else _pick(args.log_level, config.log_level)
    logging.basicConfig(
        level=getattr(logging, level),
        format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
    )

    outcome = dispatch(args, config)
    if outcome.report_path:
        logger.info(f"Report written to {outcome.report_path}")
    if outcome.exit_code != 0:
        Console(stderr=True, markup=False, highlight=False).print(outcome.message)
    elif not args.quiet:
        Console(markup=False, highlight=False).print(outcome.message)
    return outcome


def main(argv: Optional[Sequence[str]] = None) -> None:
    """Main entry point for the command-line interface."""
    sys.exit(run(argv).exit_code)


if __name__ == "__main__":
    main()
