"""File formats: JSON parameter files, JSONL records and series CSVs.

Every write goes through :func:`atomic_write_text`. OS-level failures surface
as :class:`DataIOError`; unparsable content surfaces as :class:`InvalidInputError`.
"""

import json
import logging
import os
import tempfile
from contextlib import contextmanager
from pathlib import Path
from typing import Any, Dict, Iterable, Iterator, List, Optional, Tuple, Union

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict

from .age import Document
from .dynamics import ArFit, ArParams, DiffSeries, IrfKernel, difference
from .errors import DataIOError, InvalidInputError
from .generator import GeneratorConfig, PairedDataset, PairedSample, Provenance
from .hawkes import HawkesFit, HawkesParams
from .vocab import SLOT_ORDER, AaodEvent, EventSet, Vocabulary

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

_EPOCH = pd.Timestamp("1970-01-01")
_PARSE_ERRORS = (
    json.JSONDecodeError,
    pd.errors.ParserError,
    pd.errors.EmptyDataError,
    UnicodeDecodeError,
)


@contextmanager
def _io_errors(path: PathLike) -> Iterator[None]:
    try:
        yield
    except OSError as e:
        raise DataIOError(f"Cannot access {path}: {e}") from e
    except _PARSE_ERRORS as e:
        raise InvalidInputError(f"Malformed file {path}: {e}") from e


def atomic_write_text(path: PathLike, text: str) -> Path:
    """Write ``text`` to a temporary file next to ``path``, then rename it into place."""
    path = Path(path)
    with _io_errors(path):
        path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
        try:
            with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as f:
                f.write(text)
            os.replace(tmp, path)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise
    logger.debug(f"Wrote {path}")
    return path


def write_json(path: PathLike, payload: Any) -> Path:
    return atomic_write_text(path, json.dumps(payload, indent=2) + "\n")


def read_json(path: PathLike) -> Any:
    with _io_errors(path):
        return json.loads(Path(path).read_text(encoding="utf-8"))


def write_jsonl(path: PathLike, rows: Iterable[Dict[str, Any]]) -> Path:
    return atomic_write_text(path, "".join(json.dumps(row) + "\n" for row in rows))


def read_jsonl(path: PathLike) -> List[Dict[str, Any]]:
    rows = []
    with _io_errors(path):
        with open(path, encoding="utf-8") as f:
            for line in f:
                if line.strip():
                    rows.append(json.loads(line))
    return rows


# Vocabulary


def load_vocabulary(path: PathLike) -> Vocabulary:
    """Read a vocabulary JSON file; rule operands are checked against the allow-lists.

    Slot token arrays sit at the top level, keyed by slot name.
    """
    return Vocabulary.model_validate(read_json(path))


def save_vocabulary(path: PathLike, v: Vocabulary) -> Path:
    payload = v.model_dump(mode="json")
    flat: Dict[str, Any] = dict(payload.pop("allowed"))
    flat.update(payload)
    return write_json(path, flat)


# Event records


class EventRecord(BaseModel):
    """One line of an event file; ``sample_id`` joins predictions to samples.

    Lines carry ``t``, ``type`` and the four slots. ``time`` and ``type_index``
    are read as well.
    """

    model_config = ConfigDict(frozen=True)

    event: AaodEvent
    sample_id: Optional[str] = None

    @classmethod
    def from_row(cls, row: Dict[str, Any]) -> "EventRecord":
        row = dict(row)
        sample_id = row.pop("sample_id", None)
        return cls(event=AaodEvent.model_validate(row), sample_id=sample_id)

    def to_row(self) -> Dict[str, Any]:
        e = self.event
        row: Dict[str, Any] = {"t": e.time, "type": e.type_index}
        row.update((kind.value, e.slot(kind)) for kind in SLOT_ORDER)
        if self.sample_id is not None:
            row["sample_id"] = self.sample_id
        return row


def read_event_records(path: PathLike) -> List[EventRecord]:
    return [EventRecord.from_row(row) for row in read_jsonl(path)]


def write_event_records(path: PathLike, records: Iterable[EventRecord]) -> Path:
    return write_jsonl(path, (r.to_row() for r in records))


def read_documents(path: PathLike) -> List[Document]:
    """Corpus JSONL with ``id``, ``time`` and ``body`` per line."""
    return [Document.model_validate(row) for row in read_jsonl(path)]


# Series


def _numeric_times(column: pd.Series) -> np.ndarray:
    if pd.api.types.is_numeric_dtype(column):
        return column.to_numpy(dtype=float)
    stamps = pd.to_datetime(column)
    return ((stamps - _EPOCH) / pd.Timedelta(days=1)).to_numpy(dtype=float)


def read_levels(
    path: PathLike, time_column: str = "time", value_column: str = "value"
) -> Tuple[np.ndarray, np.ndarray]:
    """Timestamps and values from a CSV; dates become days since 1970-01-01.

    Files without the named columns are read by position: timestamp first, value second.
    """
    with _io_errors(path):
        frame = pd.read_csv(path)
    if time_column not in frame.columns or value_column not in frame.columns:
        if frame.shape[1] < 2:
            raise InvalidInputError(f"{path} needs a timestamp and a value column")
        logger.debug(f"{path}: reading columns {list(frame.columns[:2])} by position")
        time_column, value_column = frame.columns[0], frame.columns[1]
    frame = frame.dropna(subset=[time_column, value_column])
    return _numeric_times(frame[time_column]), frame[value_column].to_numpy(dtype=float)


def read_series(
    path: PathLike,
    time_column: str = "time",
    value_column: str = "value",
    differenced: bool = False,
    y0: Optional[float] = None,
) -> DiffSeries:
    """Load a series CSV; level files are differenced with the first level as y0."""
    times, values = read_levels(path, time_column, value_column)
    if differenced:
        return DiffSeries(times=tuple(times.tolist()), dy=tuple(values.tolist()), y0=y0)
    return difference(values, times)


# Model parameters


def save_hawkes_params(path: PathLike, fit: Union[HawkesFit, HawkesParams]) -> Path:
    params = fit.params if isinstance(fit, HawkesFit) else fit
    payload: Dict[str, Any] = {
        "K": params.K,
        "mu": list(params.mu),
        "alpha": [list(row) for row in params.alpha],
        "beta": params.beta,
    }
    if isinstance(fit, HawkesFit):
        payload.update(
            log_likelihood=fit.log_likelihood,
            iterations=fit.iterations,
            converged=fit.converged,
        )
    return write_json(path, payload)


def load_hawkes_params(path: PathLike) -> HawkesParams:
    payload = read_json(path)
    params = HawkesParams(mu=payload["mu"], alpha=payload["alpha"], beta=payload["beta"])
    if "K" in payload and payload["K"] != params.K:
        raise InvalidInputError(f"{path} declares K={payload['K']} but holds {params.K} types")
    return params


def save_irf(path: PathLike, kernel: IrfKernel) -> Path:
    return write_json(
        path,
        {
            "H": kernel.H,
            "beta": [list(row) for row in kernel.beta],
            "se": None if kernel.se is None else [list(row) for row in kernel.se],
        },
    )


def load_irf(path: PathLike) -> IrfKernel:
    return IrfKernel.model_validate(read_json(path))


def save_ar(path: PathLike, fit: Union[ArFit, ArParams]) -> Path:
    params = fit.params if isinstance(fit, ArFit) else fit
    payload: Dict[str, Any] = {"phi": list(params.phi), "sigma": params.sigma}
    if isinstance(fit, ArFit):
        payload.update(
            residual_variance=fit.residual_variance,
            n_obs=fit.n_obs,
            degenerate=fit.degenerate,
            stationary=fit.stationary,
        )
    return write_json(path, payload)


def load_ar(path: PathLike) -> ArParams:
    payload = read_json(path)
    return ArParams(phi=payload["phi"], sigma=payload.get("sigma", 0.0))


# Datasets


def _sample_row(sample: PairedSample) -> Dict[str, Any]:
    return {
        "sample_id": sample.sample_id,
        "window": list(sample.window),
        "window_start": sample.window_start,
        "window_end": sample.window_end,
        "month": sample.month,
        "gold": [e.model_dump(mode="json") for e in sample.gold.events],
    }


def write_dataset(path: PathLike, dataset: PairedDataset) -> Path:
    return write_jsonl(path, (_sample_row(s) for s in dataset.samples))


def write_provenance(path: PathLike, provenance: Provenance) -> Path:
    return write_json(path, provenance.model_dump(mode="json"))


def read_dataset(path: PathLike, provenance_path: Optional[PathLike] = None) -> PairedDataset:
    """Read dataset JSONL.

    Provenance comes from ``provenance_path``, or a sibling provenance.json when present.
    """
    samples = []
    for row in read_jsonl(path):
        gold = tuple(AaodEvent.model_validate(e) for e in row.get("gold", ()))
        samples.append(
            PairedSample(
                sample_id=row["sample_id"],
                window=row["window"],
                window_start=row["window_start"],
                window_end=row["window_end"],
                month=row["month"],
                gold=EventSet(events=gold, bucket=row["window_end"]),
            )
        )

    provenance_path = Path(provenance_path or Path(path).with_name("provenance.json"))
    if provenance_path.exists():
        provenance = Provenance.model_validate(read_json(provenance_path))
    else:
        provenance = Provenance(config_hash="", source="unknown")
    return PairedDataset(samples=tuple(samples), provenance=provenance)


# Generator configuration


def load_generator_config(
    path: PathLike, seed: Optional[int] = None, explosion_cap: Optional[int] = None
) -> GeneratorConfig:
    """Read a generator JSON config.

    The ``vocabulary`` key names a vocabulary file relative to the config file;
    ``mark_tables`` maps event type to per-slot token weights.
    ``explosion_cap`` fills in the cap when the file does not set one.
    """
    path = Path(path)
    payload = dict(read_json(path))
    vocabulary = payload.get("vocabulary")
    if isinstance(vocabulary, str):
        payload["vocabulary"] = load_vocabulary(path.parent / vocabulary)
    payload["mark_tables"] = {
        k: table if "slots" in table else {"slots": table}
        for k, table in dict(payload.get("mark_tables", {})).items()
    }
    if seed is not None:
        payload["seed"] = seed
    if explosion_cap is not None:
        payload.setdefault("explosion_cap", explosion_cap)
    return GeneratorConfig.model_validate(payload)
