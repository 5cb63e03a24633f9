"""
Numeric dynamics on first differences.

Two pieces are superimposed by the generator: impulse responses of the
differenced series to each event type, estimated by local projections, and
AR(4) background dynamics. Levels are recovered from differences by a
cumulative sum from an initial level.
"""

import logging
from typing import Literal, Optional, Sequence, Tuple

import numpy as np
import statsmodels.api as sm
from pydantic import BaseModel, ConfigDict, Field, model_validator

from .errors import (
    DegenerateSeries,
    InsufficientData,
    InsufficientTreatment,
    InvalidInputError,
    MissingInitialLevel,
    RankDeficient,
)
from .hawkes import EventSequence

logger = logging.getLogger(__name__)

AR_ORDER = 4
MIN_AR_LENGTH = 20
RANK_TOLERANCE = 1e-10


class DiffSeries(BaseModel):
    """First differences on an evenly spaced, strictly increasing time grid."""

    model_config = ConfigDict(frozen=True)

    times: Tuple[float, ...]
    dy: Tuple[float, ...]
    """dy[i] = y(times[i]) - y(times[i-1]), in series units per step."""

    y0: Optional[float] = None
    """Level immediately before the first difference."""

    @model_validator(mode="after")
    def _check(self) -> "DiffSeries":
        if len(self.times) != len(self.dy):
            raise ValueError("times and dy must have equal length")
        if len(self.times) > 1:
            gaps = np.diff(np.asarray(self.times, dtype=float))
            if np.any(gaps <= 0):
                raise ValueError("timestamps must be strictly increasing")
            if not np.allclose(gaps, gaps[0], rtol=1e-6, atol=0.0):
                raise ValueError("timestamps must be evenly spaced")
        return self

    def __len__(self) -> int:
        return len(self.dy)

    @property
    def dy_array(self) -> np.ndarray:
        return np.asarray(self.dy, dtype=float)

    @property
    def times_array(self) -> np.ndarray:
        return np.asarray(self.times, dtype=float)

    @property
    def spacing(self) -> float:
        if len(self.times) < 2:
            return 1.0
        return float(self.times[1] - self.times[0])


class IrfKernel(BaseModel):
    """Per-type shock coefficients beta_k(h) for h = 0..H."""

    model_config = ConfigDict(frozen=True)

    H: int = Field(ge=0)
    beta: Tuple[Tuple[float, ...], ...]
    """K rows of H+1 coefficients, in series units per step."""

    se: Optional[Tuple[Tuple[float, ...], ...]] = None
    """Standard errors matching ``beta``, when estimated."""

    @model_validator(mode="after")
    def _check(self) -> "IrfKernel":
        beta = np.asarray(self.beta, dtype=float)
        if beta.ndim != 2 or beta.shape[1] != self.H + 1:
            raise ValueError(f"beta must have shape (K, {self.H + 1})")
        if not np.all(np.isfinite(beta)):
            raise ValueError("beta entries must be finite")
        if self.se is not None and np.asarray(self.se, dtype=float).shape != beta.shape:
            raise ValueError("se must match the shape of beta")
        return self

    @classmethod
    def from_array(cls, beta: np.ndarray, se: Optional[np.ndarray] = None) -> "IrfKernel":
        beta = np.atleast_2d(np.asarray(beta, dtype=float))
        return cls(
            H=beta.shape[1] - 1,
            beta=tuple(tuple(row) for row in beta.tolist()),
            se=None if se is None else tuple(tuple(row) for row in np.asarray(se).tolist()),
        )

    @property
    def K(self) -> int:
        return len(self.beta)

    @property
    def beta_array(self) -> np.ndarray:
        return np.asarray(self.beta, dtype=float)

    def coefficient(self, k: int, h: int) -> float:
        """beta_k(h), zero outside 0..H."""
        if h < 0 or h > self.H:
            return 0.0
        return self.beta[k][h]


class ArParams(BaseModel):
    """AR(4) coefficients on differences plus the innovation scale."""

    model_config = ConfigDict(frozen=True)

    phi: Tuple[float, float, float, float] = (0.0, 0.0, 0.0, 0.0)
    """phi_1..phi_4, applied to the most recent lag first."""

    sigma: float = Field(default=0.0, ge=0.0)
    """Innovation standard deviation (series units)."""

    @model_validator(mode="after")
    def _warn_nonstationary(self) -> "ArParams":
        if not self.is_stationary:
            logger.warning(
                f"AR coefficients {self.phi} are not stationary "
                f"(companion radius {self.companion_spectral_radius:.4f})"
            )
        return self

    @property
    def companion_spectral_radius(self) -> float:
        companion = np.zeros((AR_ORDER, AR_ORDER))
        companion[0, :] = self.phi
        companion[1:, :-1] = np.eye(AR_ORDER - 1)
        return float(np.max(np.abs(np.linalg.eigvals(companion))))

    @property
    def is_stationary(self) -> bool:
        return self.companion_spectral_radius < 1.0


class ArFit(BaseModel):
    """Result of :func:`fit_ar`; ``degenerate`` is the warning flag."""

    model_config = ConfigDict(frozen=True)

    params: ArParams
    residual_variance: float
    n_obs: int
    degenerate: bool = False
    stationary: bool = True


class ControlsSpec(BaseModel):
    """Controls entering each local-projection regression."""

    model_config = ConfigDict(frozen=True)

    lags: int = Field(default=4, ge=0)
    """Number of lagged differences."""

    exogenous: Tuple[Tuple[float, ...], ...] = ()
    """Extra control columns, each aligned with the series rows."""

    treatment: Literal["indicator", "count"] = "indicator"
    """Same-type events sharing a step collapse to 1 ("indicator") or add up ("count")."""

    event_window: Optional[int] = Field(default=None, ge=0)
    """Event regressor lags t-1..t-w also controlled for; defaults to the horizon."""


def event_steps(series: DiffSeries, events: EventSequence) -> Tuple[np.ndarray, np.ndarray]:
    """Map event times onto series rows by floor; out-of-range events are dropped."""
    times, types = events.arrays()
    grid = series.times_array
    if grid.size == 0 or times.size == 0:
        return np.array([], dtype=np.int64), np.array([], dtype=np.int64)
    steps = np.searchsorted(grid, times, side="right") - 1
    keep = (steps >= 0) & (times < grid[-1] + series.spacing)
    return steps[keep].astype(np.int64), types[keep]


def _check_rank(X: np.ndarray, what: str) -> None:
    singular = np.linalg.svd(X, compute_uv=False)
    if singular.size == 0 or singular[-1] < RANK_TOLERANCE * singular[0]:
        raise RankDeficient(f"Design matrix for {what} is numerically singular")


def estimate_irf(
    series: DiffSeries,
    events: EventSequence,
    H: int,
    controls: Optional[ControlsSpec] = None,
    n_types: Optional[int] = None,
) -> IrfKernel:
    """Local projections of dy_{t+h} on event regressors at t, h = 0..H.

    Each horizon is an OLS regression with an intercept, the K event
    regressors at t, the event regressors at leads t+1..t+h and lags
    t-1..t-w, lagged differences and any exogenous columns. Standard errors
    are the homoskedastic OLS ones.

    Raises:
        InsufficientTreatment: If some event type never occurs in the sample.
        RankDeficient: If a design matrix is numerically singular.
        InsufficientData: If a horizon has too few usable rows.
    """
    if H < 0:
        raise InvalidInputError(f"Horizon must be >= 0, got {H}")
    controls = controls or ControlsSpec()
    dy = series.dy_array
    n = dy.size

    K = n_types if n_types is not None else events.n_types
    if K is None:
        K = (max(events.types) + 1) if len(events) else 1
    steps, types = event_steps(series, events)
    if types.size and types.max() >= K:
        raise InvalidInputError(f"Event type {int(types.max())} outside [0, {K})")

    counts = np.zeros((n, K))
    np.add.at(counts, (steps, types), 1.0)
    treat = counts if controls.treatment == "count" else (counts > 0).astype(float)
    for k in range(K):
        if not treat[:, k].any():
            raise InsufficientTreatment(k)

    exog = None
    if controls.exogenous:
        exog = np.asarray(controls.exogenous, dtype=float).reshape(-1, n).T
    window = H if controls.event_window is None else controls.event_window
    start = max(controls.lags, window)

    beta = np.zeros((K, H + 1))
    se = np.zeros((K, H + 1))
    for h in range(H + 1):
        rows = np.arange(start, n - h)
        columns = [np.ones(rows.size), treat[rows]]
        columns += [treat[rows + j] for j in range(1, h + 1)]
        columns += [treat[rows - j] for j in range(1, window + 1)]
        columns += [dy[rows - lag] for lag in range(1, controls.lags + 1)]
        if exog is not None:
            columns.append(exog[rows])
        X = np.column_stack(columns)
        if rows.size <= X.shape[1]:
            raise InsufficientData(
                f"Horizon {h} has {rows.size} usable rows for {X.shape[1]} regressors"
            )
        _check_rank(X, f"horizon {h}")

        result = sm.OLS(dy[rows + h], X).fit()
        beta[:, h] = result.params[1:K + 1]
        se[:, h] = result.bse[1:K + 1]

    logger.debug(f"Estimated IRF for K={K}, H={H} on {n} rows")
    return IrfKernel.from_array(beta, se)


def fit_ar(series: DiffSeries, strict: bool = False) -> ArFit:
    """OLS of dy_t on its four lags, without intercept.

    The residual variance uses the denominator len(dy) - 5.

    Raises:
        InsufficientData: If fewer than 20 differences are supplied.
        DegenerateSeries: If dy is constant and ``strict`` is set.
    """
    dy = series.dy_array
    n = dy.size
    if n < MIN_AR_LENGTH:
        raise InsufficientData(f"AR(4) fit needs at least {MIN_AR_LENGTH} differences, got {n}")

    if np.ptp(dy) == 0.0:
        message = "Differenced series is constant; returning phi = 0, sigma = 0"
        if strict:
            raise DegenerateSeries(message)
        logger.warning(message)
        return ArFit(params=ArParams(), residual_variance=0.0, n_obs=n - AR_ORDER, degenerate=True)

    y = dy[AR_ORDER:]
    X = np.column_stack([dy[AR_ORDER - lag:n - lag] for lag in range(1, AR_ORDER + 1)])
    _check_rank(X, "AR(4) regression")
    result = sm.OLS(y, X).fit()

    variance = float(result.ssr) / (n - 5)
    params = ArParams(phi=tuple(float(p) for p in result.params), sigma=float(np.sqrt(variance)))
    return ArFit(
        params=params,
        residual_variance=variance,
        n_obs=int(y.size),
        stationary=params.is_stationary,
    )


def ar_step(params: ArParams, last4: Sequence[float], shock: float, innovation: float) -> float:
    """One AR(4) update; ``last4`` holds the most recent difference first.

    Raises:
        InvalidInputError: If ``last4`` does not hold exactly four values.
    """
    if len(last4) != AR_ORDER:
        raise InvalidInputError(f"ar_step needs {AR_ORDER} lagged differences, got {len(last4)}")
    background = sum(p * x for p, x in zip(params.phi, last4))
    return background + shock + innovation


def simulate_ar(
    params: ArParams,
    n: int,
    rng: np.random.Generator,
    shocks: Optional[np.ndarray] = None,
) -> np.ndarray:
    """Run the AR(4) recursion from zero lags with Gaussian innovations."""
    innovations = params.sigma * rng.standard_normal(n)
    shocks = np.zeros(n) if shocks is None else np.asarray(shocks, dtype=float)
    dy = [0.0] * n
    lags = [0.0] * AR_ORDER
    for t in range(n):
        value = ar_step(params, lags, float(shocks[t]), float(innovations[t]))
        dy[t] = value
        lags = [value] + lags[:-1]
    return np.asarray(dy)


def to_levels(series: DiffSeries) -> np.ndarray:
    """y_t = y0 + cumulative sum of dy up to t."""
    if series.y0 is None:
        raise MissingInitialLevel("Level recovery needs an initial level y0")
    return series.y0 + np.cumsum(series.dy_array)


def difference(levels: Sequence[float], times: Optional[Sequence[float]] = None) -> DiffSeries:
    """First differences of a level series; the first level becomes y0."""
    levels = np.asarray(levels, dtype=float)
    if levels.size == 0:
        raise InvalidInputError("Cannot difference an empty level series")
    if times is None:
        times = np.arange(levels.size, dtype=float)
    times = np.asarray(times, dtype=float)
    return DiffSeries(
        times=tuple(times[1:].tolist()),
        dy=tuple(np.diff(levels).tolist()),
        y0=float(levels[0]),
    )
