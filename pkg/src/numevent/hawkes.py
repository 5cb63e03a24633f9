"""
Marked multivariate Hawkes process with an exponential kernel.

The conditional intensity of type-k events is

    lambda_k(t) = mu_k + sum_j sum_{t_i^j < t} alpha_kj * beta * exp(-beta (t - t_i^j))

with one decay rate shared by every type pair. The kernel integrates to one,
so ``alpha`` is the branching matrix and stationarity means its spectral
radius is below one.

Example usage:
```
    params = HawkesParams(mu=[0.5], alpha=[[0.4]], beta=1.0)
    seq = simulate(params, T=1000.0, rng=np.random.default_rng(7))
    result = fit(seq, K=1)
    print(result.params, result.log_likelihood)
```
"""

import logging
import math
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
from numba import njit
from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy.stats import kstest

from .errors import (
    DidNotConverge,
    ExplosionGuard,
    InsufficientData,
    InvalidInputError,
    NonFiniteLikelihood,
    TypeOutOfRange,
)

logger = logging.getLogger(__name__)

PARAM_FLOOR = 1e-10
"""Lower clip applied to mu and alpha during fitting."""

_LOG_BETA_BOUNDS = (math.log(1e-6), math.log(1e6))


def spectral_radius(matrix: np.ndarray) -> float:
    if matrix.size == 0:
        return 0.0
    return float(np.max(np.abs(np.linalg.eigvals(matrix))))


class HawkesParams(BaseModel):
    """Baseline intensities, excitation matrix and shared decay of a K-type process."""

    model_config = ConfigDict(frozen=True)

    mu: Tuple[float, ...]
    """Baseline intensities (events per unit time), one per type."""

    alpha: Tuple[Tuple[float, ...], ...]
    """alpha[k][j]: expected type-k children per type-j parent."""

    beta: float = Field(gt=0.0)
    """Kernel decay rate (1/time)."""

    @model_validator(mode="after")
    def _check(self) -> "HawkesParams":
        k = len(self.mu)
        if k == 0:
            raise ValueError("mu must have at least one entry")
        if len(self.alpha) != k or any(len(row) != k for row in self.alpha):
            raise ValueError(f"alpha must be {k}x{k}")
        if any(m < 0 for m in self.mu) or any(a < 0 for row in self.alpha for a in row):
            raise ValueError("mu and alpha must be nonnegative")
        rho = spectral_radius(np.asarray(self.alpha, dtype=float))
        if rho >= 1.0:
            raise ValueError(f"alpha spectral radius {rho:.4f} >= 1 (non-stationary)")
        return self

    @classmethod
    def from_arrays(cls, mu: np.ndarray, alpha: np.ndarray, beta: float) -> "HawkesParams":
        mu = np.asarray(mu, dtype=float).ravel()
        alpha = np.asarray(alpha, dtype=float).reshape(mu.size, mu.size)
        return cls(
            mu=tuple(float(m) for m in mu),
            alpha=tuple(tuple(float(a) for a in row) for row in alpha),
            beta=float(beta),
        )

    @property
    def K(self) -> int:
        return len(self.mu)

    @property
    def mu_array(self) -> np.ndarray:
        return np.asarray(self.mu, dtype=float)

    @property
    def alpha_array(self) -> np.ndarray:
        return np.asarray(self.alpha, dtype=float)

    @property
    def spectral_radius(self) -> float:
        return spectral_radius(self.alpha_array)

    def stationary_intensity(self) -> np.ndarray:
        """Long-run events per unit time per type, (I - alpha)^-1 mu."""
        return np.linalg.solve(np.eye(self.K) - self.alpha_array, self.mu_array)

    def expected_count(self, T: float) -> float:
        return float(self.stationary_intensity().sum() * T)


class EventSequence(BaseModel):
    """Time-sorted event arrivals with their type indices on [0, horizon]."""

    model_config = ConfigDict(frozen=True)

    times: Tuple[float, ...] = ()
    types: Tuple[int, ...] = ()
    horizon: float = Field(gt=0.0)
    """Observation window length T."""

    n_types: Optional[int] = Field(default=None, ge=1)
    """Number of event types K, when known."""

    @model_validator(mode="after")
    def _check(self) -> "EventSequence":
        if len(self.times) != len(self.types):
            raise ValueError("times and types must have equal length")
        if self.times:
            t = np.asarray(self.times, dtype=float)
            if np.any(np.diff(t) < 0):
                raise ValueError("event times must be nondecreasing")
            if t[0] < 0 or t[-1] > self.horizon:
                raise ValueError(f"event times must lie within [0, {self.horizon}]")
            if min(self.types) < 0:
                raise ValueError("event types must be nonnegative")
            if self.n_types is not None and max(self.types) >= self.n_types:
                raise TypeOutOfRange(max(self.types), self.n_types)
        return self

    @classmethod
    def from_arrays(
        cls,
        times: Sequence[float],
        types: Sequence[int],
        horizon: float,
        n_types: Optional[int] = None,
    ) -> "EventSequence":
        """Build a sequence from unsorted arrays; ties keep their input order."""
        times = np.asarray(times, dtype=float)
        types = np.asarray(types, dtype=np.int64)
        order = np.argsort(times, kind="stable")
        return cls(
            times=tuple(times[order].tolist()),
            types=tuple(int(k) for k in types[order]),
            horizon=horizon,
            n_types=n_types,
        )

    @classmethod
    def from_events(
        cls,
        events: Iterable,
        horizon: Optional[float] = None,
        n_types: Optional[int] = None,
    ) -> "EventSequence":
        """Build a sequence from objects with ``time`` and ``type_index``.

        The horizon defaults to the last event time.
        """
        events = list(events)
        times = [float(e.time) for e in events]
        types = [int(e.type_index) for e in events]
        if horizon is None:
            if not times:
                raise InsufficientData("Cannot infer a horizon from an empty event list")
            horizon = max(times)
        return cls.from_arrays(times, types, horizon, n_types)

    def __len__(self) -> int:
        return len(self.times)

    def arrays(self) -> Tuple[np.ndarray, np.ndarray]:
        return np.asarray(self.times, dtype=float), np.asarray(self.types, dtype=np.int64)

    def counts(self, K: int) -> np.ndarray:
        return np.bincount(np.asarray(self.types, dtype=np.int64), minlength=K)[:K]


class HawkesFit(BaseModel):
    """Maximum-likelihood fit result; ``converged`` is the warning flag."""

    model_config = ConfigDict(frozen=True)

    params: HawkesParams
    log_likelihood: float
    initial_log_likelihood: float
    iterations: int
    converged: bool


@njit
def _exp_states(times, types, n_types, beta):
    """Per-event kernel sums over strictly earlier events.

    S[i, j] = sum_{t_l^j < t_i} exp(-beta (t_i - t_l^j))
    D[i, j] = sum_{t_l^j < t_i} (t_i - t_l^j) exp(-beta (t_i - t_l^j))
    """
    n = times.shape[0]
    S = np.zeros((n, n_types))
    D = np.zeros((n, n_types))
    s = np.zeros(n_types)
    d = np.zeros(n_types)
    pending = np.zeros(n_types)
    t_cur = 0.0
    if n > 0:
        t_cur = times[0]
    for i in range(n):
        dt = times[i] - t_cur
        if dt > 0.0:
            decay = np.exp(-beta * dt)
            for j in range(n_types):
                total = s[j] + pending[j]
                d[j] = decay * (d[j] + dt * total)
                s[j] = decay * total
                pending[j] = 0.0
            t_cur = times[i]
        for j in range(n_types):
            S[i, j] = s[j]
            D[i, j] = d[j]
        pending[types[i]] += 1.0
    return S, D


def _check_types(types: np.ndarray, K: int) -> None:
    if types.size and (types.min() < 0 or types.max() >= K):
        bad = int(types.max()) if types.max() >= K else int(types.min())
        raise TypeOutOfRange(bad, K)


def intensity(params: HawkesParams, history: EventSequence, t: float, k: int) -> float:
    """lambda_k(t) summing over history events strictly before ``t``."""
    K = params.K
    if not 0 <= k < K:
        raise TypeOutOfRange(k, K)
    times, types = history.arrays()
    _check_types(types, K)
    mask = times < t
    decay = np.exp(-params.beta * (t - times[mask]))
    excitation = params.alpha_array[k, types[mask]] * params.beta * decay
    return float(params.mu[k] + excitation.sum())


def intensities_at_events(params: HawkesParams, seq: EventSequence) -> np.ndarray:
    """lambda_{type(i)}(t_i) for every event, via the O(N K) recursion."""
    times, types = seq.arrays()
    _check_types(types, params.K)
    S, _ = _exp_states(times, types, params.K, params.beta)
    alpha = params.alpha_array
    return params.mu_array[types] + params.beta * np.einsum("ij,ij->i", alpha[types], S)


def naive_intensities_at_events(params: HawkesParams, seq: EventSequence) -> np.ndarray:
    """Same quantity as :func:`intensities_at_events` by the O(N^2) double sum."""
    times, types = seq.arrays()
    _check_types(types, params.K)
    alpha = params.alpha_array
    out = np.empty(times.size)
    for i in range(times.size):
        mask = times < times[i]
        decay = np.exp(-params.beta * (times[i] - times[mask]))
        out[i] = params.mu[types[i]] + params.beta * np.sum(alpha[types[i], types[mask]] * decay)
    return out


def _tail_sums(times, types, K, beta, T):
    """G_j = sum_l (1 - e^{-beta(T - t_l)}) and H_j = sum_l (T - t_l) e^{-beta(T - t_l)}."""
    age = T - times
    tail = np.exp(-beta * age)
    G = np.bincount(types, weights=1.0 - tail, minlength=K)[:K]
    H = np.bincount(types, weights=age * tail, minlength=K)[:K]
    return G, H


def compensator(params: HawkesParams, seq: EventSequence) -> float:
    """Closed-form integral of the total intensity over [0, T]."""
    times, types = seq.arrays()
    _check_types(types, params.K)
    G, _ = _tail_sums(times, types, params.K, params.beta, seq.horizon)
    return float(params.mu_array.sum() * seq.horizon + (params.alpha_array @ G).sum())


def log_likelihood(params: HawkesParams, seq: EventSequence) -> float:
    """Exact point-process log-likelihood with the closed-form compensator.

    Raises:
        NonFiniteLikelihood: If some event has zero intensity.
    """
    lam = intensities_at_events(params, seq)
    if np.any(lam <= 0.0):
        idx = int(np.argmax(lam <= 0.0))
        raise NonFiniteLikelihood(f"Zero intensity at event {idx} (t={seq.times[idx]})")
    return float(np.log(lam).sum() - compensator(params, seq))


class _Objective:
    """Log-likelihood, gradient and score outer products in packed coordinates.

    The packed vector is (mu, alpha row-major, log beta).
    """

    def __init__(self, times: np.ndarray, types: np.ndarray, K: int, T: float):
        self.times = times
        self.types = types
        self.K = K
        self.T = T
        self.size = K + K * K + 1

    def unpack(self, x: np.ndarray) -> Tuple[np.ndarray, np.ndarray, float]:
        K = self.K
        return x[:K], x[K:K + K * K].reshape(K, K), float(np.exp(x[-1]))

    def pack(self, mu: np.ndarray, alpha: np.ndarray, beta: float) -> np.ndarray:
        return np.concatenate([mu, alpha.ravel(), [math.log(beta)]])

    def evaluate(self, x: np.ndarray, with_grad: bool = True):
        K, types = self.K, self.types
        mu, alpha, beta = self.unpack(x)
        S, D = _exp_states(self.times, types, K, beta)
        rows = alpha[types]
        lam = mu[types] + beta * np.einsum("ij,ij->i", rows, S)
        if np.any(lam <= 0.0) or not np.all(np.isfinite(lam)):
            return -np.inf, None, None
        G, H = _tail_sums(self.times, types, K, beta, self.T)
        ll = float(np.log(lam).sum() - mu.sum() * self.T - (alpha @ G).sum())
        if not with_grad:
            return ll, None, None

        n = types.size
        inv = 1.0 / lam
        scores = np.zeros((n, self.size))
        scores[np.arange(n), types] = inv
        for j in range(K):
            scores[np.arange(n), K + types * K + j] = beta * S[:, j] * inv
        scores[:, -1] = beta * np.einsum("ij,ij->i", rows, S - beta * D) * inv

        grad = scores.sum(axis=0)
        grad[:K] -= self.T
        grad[K:K + K * K] -= np.tile(G, K)
        grad[-1] -= beta * float(alpha.sum(axis=0) @ H)
        return ll, grad, scores.T @ scores


def _project(x: np.ndarray, K: int, margin: float) -> np.ndarray:
    x = x.copy()
    x[:K + K * K] = np.maximum(x[:K + K * K], PARAM_FLOOR)
    alpha = x[K:K + K * K].reshape(K, K)
    rho = spectral_radius(alpha)
    if rho >= margin:
        x[K:K + K * K] = (alpha * (margin / rho)).ravel()
    x[-1] = min(max(x[-1], _LOG_BETA_BOUNDS[0]), _LOG_BETA_BOUNDS[1])
    return x


def _direction(grad: np.ndarray, outer: np.ndarray, x: np.ndarray, K: int) -> np.ndarray:
    """Outer-product preconditioned ascent direction over the free coordinates."""
    n_lin = K + K * K
    active = np.zeros(grad.size, dtype=bool)
    active[:n_lin] = (x[:n_lin] <= PARAM_FLOOR * (1.0 + 1e-9)) & (grad[:n_lin] < 0.0)
    free = ~active
    direction = np.zeros_like(grad)
    sub = outer[np.ix_(free, free)]
    ridge = 1e-9 * max(float(np.max(np.diag(sub))), 1e-12) + 1e-12
    direction[free] = np.linalg.solve(sub + ridge * np.eye(sub.shape[0]), grad[free])
    return direction


def fit(
    seq: EventSequence,
    K: int,
    init: Optional[HawkesParams] = None,
    *,
    max_iter: int = 5000,
    tolerance: float = 1e-8,
    stationarity_margin: float = 0.999,
    strict: bool = False,
) -> HawkesFit:
    """Maximum-likelihood parameters by projected gradient ascent.

    Args:
        seq: Observed arrivals on [0, seq.horizon].
        K: Number of event types.
        init: Starting point; defaults to mu = N_k/T, alpha = 0.1, beta = 1.
        max_iter: Iteration budget.
        tolerance: Relative log-likelihood change treated as converged.
        stationarity_margin: Spectral-radius cap enforced on alpha.
        strict: Raise DidNotConverge instead of returning a flagged result.

    Returns:
        HawkesFit with the best parameters found.
    """
    if K < 1:
        raise InvalidInputError(f"K must be >= 1, got {K}")
    if len(seq) == 0:
        raise InsufficientData("Cannot fit a Hawkes process to an empty sequence")
    times, types = seq.arrays()
    _check_types(types, K)
    T = seq.horizon

    if init is None:
        mu0 = np.maximum(seq.counts(K) / T, PARAM_FLOOR)
        alpha0 = np.full((K, K), 0.1)
        beta0 = 1.0
    else:
        if init.K != K:
            raise InvalidInputError(f"Initial parameters have K={init.K}, expected {K}")
        mu0, alpha0, beta0 = init.mu_array, init.alpha_array, init.beta

    objective = _Objective(times, types, K, T)
    x = _project(objective.pack(mu0, alpha0, beta0), K, stationarity_margin)
    ll, grad, outer = objective.evaluate(x)
    if not np.isfinite(ll):
        raise NonFiniteLikelihood("Initial parameters give a non-finite log-likelihood")
    initial_ll = ll

    converged = False
    iterations = 0
    for iterations in range(1, max_iter + 1):
        direction = _direction(grad, outer, x, K)
        step = 1.0
        candidate, candidate_ll = None, -np.inf
        for _ in range(50):
            trial = _project(x + step * direction, K, stationarity_margin)
            trial_ll, _, _ = objective.evaluate(trial, with_grad=False)
            if trial_ll > ll:
                candidate, candidate_ll = trial, trial_ll
                break
            step *= 0.5
        if candidate is None:
            converged = True
            break

        change = abs(candidate_ll - ll) / max(abs(ll), 1e-300)
        x = candidate
        ll, grad, outer = objective.evaluate(x)
        if change < tolerance:
            converged = True
            break

    mu, alpha, beta = objective.unpack(x)
    params = HawkesParams.from_arrays(mu, alpha, beta)
    if not converged:
        message = f"Hawkes fit stopped after {iterations} iterations without converging"
        if strict:
            raise DidNotConverge(message)
        logger.warning(message)
    else:
        logger.debug(f"Hawkes fit converged in {iterations} iterations, loglik {ll:.6f}")

    return HawkesFit(
        params=params,
        log_likelihood=ll,
        initial_log_likelihood=initial_ll,
        iterations=iterations,
        converged=converged,
    )


class _DrawBuffer:
    """Chunked uniform and exponential draws from one Generator."""

    def __init__(self, rng: np.random.Generator, chunk: int = 4096):
        self.rng = rng
        self.chunk = chunk
        self._uniform: List[float] = []
        self._exponential: List[float] = []

    def uniform(self) -> float:
        if not self._uniform:
            self._uniform = self.rng.random(self.chunk).tolist()
            self._uniform.reverse()
        return self._uniform.pop()

    def exponential(self) -> float:
        if not self._exponential:
            self._exponential = self.rng.standard_exponential(self.chunk).tolist()
            self._exponential.reverse()
        return self._exponential.pop()


def simulate(
    params: HawkesParams,
    T: float,
    rng: Union[np.random.Generator, int, None] = None,
    *,
    max_events: int = 10_000_000,
) -> EventSequence:
    """Ogata thinning on [0, T].

    Between arrivals the total intensity only decays, so its value right after
    the last candidate bounds it until the next one.

    Raises:
        ExplosionGuard: If more than ``max_events`` events are generated.
    """
    if T <= 0:
        raise InvalidInputError(f"Horizon must be positive, got {T}")
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)

    K = params.K
    mu = list(params.mu)
    mu_total = sum(mu)
    if mu_total <= 0.0:
        return EventSequence(horizon=T, n_types=K)

    beta = params.beta
    jumps = [[params.alpha[k][j] * beta for k in range(K)] for j in range(K)]
    excitation = [0.0] * K
    draws = _DrawBuffer(rng)
    times: List[float] = []
    types: List[int] = []

    t = 0.0
    while True:
        bound = mu_total + sum(excitation)
        wait = draws.exponential() / bound
        t += wait
        if t > T:
            break
        decay = math.exp(-beta * wait)
        excitation = [e * decay for e in excitation]
        total = mu_total + sum(excitation)
        if draws.uniform() * bound > total:
            continue

        target = draws.uniform() * total
        k = K - 1
        acc = 0.0
        for idx in range(K):
            acc += mu[idx] + excitation[idx]
            if target < acc:
                k = idx
                break
        times.append(t)
        types.append(k)
        if len(times) > max_events:
            raise ExplosionGuard(f"Simulation exceeded {max_events} events before t={t:.3f}")
        excitation = [e + jump for e, jump in zip(excitation, jumps[k])]

    logger.debug(f"Simulated {len(times)} events on [0, {T}]")
    return EventSequence(times=tuple(times), types=tuple(types), horizon=T, n_types=K)


def time_rescaled_residuals(params: HawkesParams, seq: EventSequence, k: int) -> np.ndarray:
    """Compensator increments between consecutive type-k events.

    Under the model these are i.i.d. Exp(1).
    """
    K = params.K
    if not 0 <= k < K:
        raise TypeOutOfRange(k, K)
    times, types = seq.arrays()
    _check_types(types, K)
    mask = types == k
    if not mask.any():
        return np.array([], dtype=float)
    S, _ = _exp_states(times, types, K, params.beta)
    t_k = times[mask]
    earlier = np.stack(
        [np.searchsorted(times[types == j], t_k, side="left") for j in range(K)], axis=1
    )
    Lambda = params.mu[k] * t_k + (earlier - S[mask]) @ params.alpha_array[k]
    return np.diff(np.concatenate([[0.0], Lambda]))


def goodness_of_fit(params: HawkesParams, seq: EventSequence) -> Dict[int, Tuple[float, float]]:
    """Per-type Kolmogorov-Smirnov (statistic, p-value) of residuals against Exp(1)."""
    out: Dict[int, Tuple[float, float]] = {}
    for k in range(params.K):
        z = time_rescaled_residuals(params, seq, k)
        if z.size < 2:
            out[k] = (float("nan"), float("nan"))
            continue
        result = kstest(z, "expon")
        out[k] = (float(result.statistic), float(result.pvalue))
    return out
