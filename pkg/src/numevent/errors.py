"""Exception hierarchy for numevent.

Every error carries the process exit code the CLI reports for it:
1 for validation problems, 2 for I/O problems and 3 for numerical failures.
"""

from typing import Optional


class NumeventError(Exception):
    """Base class for all numevent errors."""

    exit_code: int = 1


class InvalidInputError(NumeventError):
    """Input violates a schema or an operation precondition."""

    exit_code = 1


class EmptyToken(InvalidInputError):
    """A slot token is empty after normalization."""


class TypeOutOfRange(InvalidInputError):
    """An event type index lies outside [0, K)."""

    def __init__(self, type_index: int, n_types: int):
        super().__init__(f"Event type {type_index} outside [0, {n_types})")
        self.type_index = type_index
        self.n_types = n_types


class EmptySeries(InvalidInputError):
    """A series with no timestamps was supplied."""


class MissingInitialLevel(InvalidInputError):
    """Level recovery needs an initial level y0."""


class InsufficientTreatment(InvalidInputError):
    """An event type never occurs in the estimation sample."""

    def __init__(self, event_type: int):
        super().__init__(f"Event type {event_type} never occurs in the sample")
        self.event_type = event_type


class InsufficientData(InvalidInputError):
    """Not enough observations for the requested estimate."""


class StepOutOfRange(InvalidInputError):
    """A forced arrival step lies outside [0, T)."""


class MarkTableGap(InvalidInputError):
    """An event type has no mark table."""

    def __init__(self, event_type: int):
        super().__init__(f"No mark table for event type {event_type}")
        self.event_type = event_type


class MarkCompositionError(InvalidInputError):
    """Mark resampling never produced a tuple satisfying the composition rules."""


class UnknownBackend(InvalidInputError):
    """No extractor backend is registered under the requested name."""


class BackendFailure(NumeventError):
    """An extractor backend failed on a document."""

    exit_code = 1

    def __init__(self, doc_id: str, cause: Optional[BaseException] = None):
        detail = f": {cause}" if cause is not None else ""
        super().__init__(f"Extractor backend failed on document {doc_id}{detail}")
        self.doc_id = doc_id
        self.cause = cause


class DataIOError(NumeventError):
    """A file could not be read or written."""

    exit_code = 2


class NumericalError(NumeventError):
    """Base class for numerical failures."""

    exit_code = 3


class NonFiniteLikelihood(NumericalError):
    """Some event has zero intensity under the evaluated parameters."""


class DidNotConverge(NumericalError):
    """An iterative fit stopped at its iteration budget."""


class RankDeficient(NumericalError):
    """A regression design matrix is numerically singular."""


class ExplosionGuard(NumericalError):
    """A simulation produced more events than the configured cap."""


class DegenerateSeries(NumericalError):
    """A differenced series is constant."""
