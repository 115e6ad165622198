"""Vector Ornstein-Uhlenbeck fluctuation processes.

The process is

    d eta_i = -alpha_i * eta_i * dt + sigma * beta_i * dW_i,

with independent channels, so in stationarity

    E[eta_i] = 0,
    Var[eta_i] = (sigma * beta_i)**2 / (2 * alpha_i),
    Corr[eta_i(t), eta_i(t + d)] = exp(-alpha_i * |d|).

With the convention beta_i = sqrt(2 * alpha_i) the stationary variance is
sigma**2, which makes ``sigma`` directly the stationary standard deviation of
every channel.

Two steppers are provided.  ``ou_step`` is the explicit Euler-Maruyama update
used inside the production simulator; ``ou_step_exact`` draws from the exact
Gaussian transition kernel and serves as an independent cross-check in tests
(its one-step statistics are exact at any step size).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numba import njit

__all__ = [
    "RngStream",
    "OUParams",
    "OUState",
    "PathStatistics",
    "ou_initial_sample",
    "ou_step",
    "ou_step_exact",
    "ou_path",
    "ou_path_statistics",
]


@dataclass(frozen=True)
class RngStream:
    """Named random stream (seed_base, stream_id).

    Distinct (seed_base, stream_id) pairs give statistically independent
    generators via numpy's SeedSequence entropy pooling.  Streams are never
    shared across trajectories; the draw order within a stream is fixed by
    the implementation of the stepper that consumes it.
    """

    seed_base: int
    stream_id: int = 0

    def __post_init__(self) -> None:
        if self.seed_base < 0 or self.stream_id < 0:
            raise ValueError("seed_base and stream_id must be non-negative")

    def generator(self) -> np.random.Generator:
        seq = np.random.SeedSequence((self.seed_base, self.stream_id))
        return np.random.Generator(np.random.PCG64(seq))

    def child(self, index: int) -> "RngStream":
        """Derive a sub-stream; used for (cell, path) fan-out."""
        return RngStream(self.seed_base, (self.stream_id << 32) | index)


def _as_channel_array(value, k: int | None, name: str) -> np.ndarray:
    arr = np.atleast_1d(np.asarray(value, dtype=float))
    if arr.ndim != 1:
        raise ValueError(f"{name} must be a scalar or 1-d array")
    if k is not None and arr.shape[0] != k:
        raise ValueError(f"{name} has {arr.shape[0]} entries, expected {k}")
    return arr


@dataclass(frozen=True)
class OUParams:
    """Parameters of a k-channel OU process.

    alpha: mean-reversion rates, all > 0 (1/s).
    beta:  noise gains; defaults to sqrt(2 * alpha) so the stationary
           standard deviation of each channel equals sigma.
    sigma: overall noise intensity, >= 0.
    """

    alpha: np.ndarray
    beta: np.ndarray = field(default=None)  # type: ignore[assignment]
    sigma: float = 0.0

    def __post_init__(self) -> None:
        alpha = _as_channel_array(self.alpha, None, "alpha")
        if np.any(alpha <= 0):
            raise ValueError("alpha must be positive (mean-reverting process)")
        if self.beta is None:
            beta = np.sqrt(2.0 * alpha)
        else:
            beta = _as_channel_array(self.beta, alpha.shape[0], "beta")
            if np.any(beta <= 0):
                raise ValueError("beta must be positive")
        if self.sigma < 0:
            raise ValueError("sigma must be non-negative")
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "sigma", float(self.sigma))

    @property
    def k(self) -> int:
        return self.alpha.shape[0]

    def stationary_variance(self) -> np.ndarray:
        return (self.sigma * self.beta) ** 2 / (2.0 * self.alpha)

    def with_sigma(self, sigma: float) -> "OUParams":
        return OUParams(self.alpha.copy(), self.beta.copy(), sigma)


@dataclass(frozen=True)
class OUState:
    eta: np.ndarray
    t: float = 0.0


def ou_initial_sample(params: OUParams, rng: np.random.Generator) -> OUState:
    """Draw eta(0) from the stationary law N(0, (sigma*beta)^2 / (2*alpha)).

    With sigma == 0 this returns the zero vector without consuming any
    random draws, so noiseless runs are seed-independent.
    """
    if params.sigma == 0.0:
        return OUState(np.zeros(params.k), 0.0)
    std = np.sqrt(params.stationary_variance())
    return OUState(std * rng.standard_normal(params.k), 0.0)


def _check_dt(dt: float) -> None:
    if not dt > 0.0:
        raise ValueError("dt must be positive")


def ou_step(state: OUState, params: OUParams, dt: float,
            rng: np.random.Generator) -> OUState:
    """One explicit Euler-Maruyama step:

        eta <- eta - alpha * eta * dt + sigma * beta * sqrt(dt) * z.

    With sigma == 0 no random numbers are consumed and the update is the
    exact deterministic decay map of the drift.
    """
    _check_dt(dt)
    eta = state.eta - params.alpha * state.eta * dt
    if params.sigma > 0.0:
        z = rng.standard_normal(params.k)
        eta = eta + params.sigma * params.beta * np.sqrt(dt) * z
    return OUState(eta, state.t + dt)


def ou_step_exact(state: OUState, params: OUParams, dt: float,
                  rng: np.random.Generator) -> OUState:
    """One step of the exact Gaussian transition kernel:

        eta <- eta * exp(-alpha*dt)
               + sigma * beta * sqrt((1 - exp(-2*alpha*dt)) / (2*alpha)) * z.

    Statistics are exact at any dt; used as the discretization-free oracle.
    """
    _check_dt(dt)
    decay = np.exp(-params.alpha * dt)
    eta = state.eta * decay
    if params.sigma > 0.0:
        std = params.sigma * params.beta * np.sqrt(
            (1.0 - decay ** 2) / (2.0 * params.alpha))
        eta = eta + std * rng.standard_normal(params.k)
    return OUState(eta, state.t + dt)


@njit(cache=True)
def _em_scan(eta0, alpha, gain, dt, z, out):  # pragma: no cover - jit
    k = eta0.shape[0]
    n = z.shape[0]
    eta = eta0.copy()
    for j in range(k):
        out[0, j] = eta[j]
    for i in range(n):
        for j in range(k):
            eta[j] = eta[j] - alpha[j] * eta[j] * dt + gain[j] * z[i, j]
            out[i + 1, j] = eta[j]


@njit(cache=True)
def _exact_scan(eta0, decay, std, z, out):  # pragma: no cover - jit
    k = eta0.shape[0]
    n = z.shape[0]
    eta = eta0.copy()
    for j in range(k):
        out[0, j] = eta[j]
    for i in range(n):
        for j in range(k):
            eta[j] = eta[j] * decay[j] + std[j] * z[i, j]
            out[i + 1, j] = eta[j]


def ou_path(params: OUParams, n_steps: int, dt: float,
            rng: np.random.Generator, init: OUState | None = None,
            method: str = "euler") -> tuple[np.ndarray, np.ndarray]:
    """Generate a sampled path (t, eta) with eta.shape == (n_steps+1, k).

    The draw order is: initial stationary sample (unless ``init`` is given),
    then one k-vector of normals per step, identical to repeated calls of the
    single-step functions on the same generator.
    """
    _check_dt(dt)
    if n_steps < 1:
        raise ValueError("n_steps must be >= 1")
    if method not in ("euler", "exact"):
        raise ValueError(f"unknown method {method!r}")
    state = ou_initial_sample(params, rng) if init is None else init
    out = np.empty((n_steps + 1, params.k))
    if params.sigma == 0.0:
        z = np.zeros((n_steps, params.k))
    else:
        z = rng.standard_normal((n_steps, params.k))
    if method == "euler":
        gain = params.sigma * params.beta * np.sqrt(dt)
        _em_scan(state.eta, params.alpha, gain, dt, z, out)
    else:
        decay = np.exp(-params.alpha * dt)
        std = params.sigma * params.beta * np.sqrt(
            (1.0 - decay ** 2) / (2.0 * params.alpha))
        if params.sigma == 0.0:
            std = np.zeros(params.k)
        _exact_scan(state.eta, decay, std, z, out)
    t = state.t + dt * np.arange(n_steps + 1)
    return t, out


@dataclass(frozen=True)
class PathStatistics:
    mean: np.ndarray           # (k,)
    variance: np.ndarray       # (k,), unbiased (n-1)
    lags_s: np.ndarray         # requested lags in seconds
    autocorrelation: np.ndarray  # (n_lags, k); NaN where undefined
    autocorr_defined: np.ndarray  # (k,) bool, False for constant channels
    dt: float
    n_samples: int


def _coerce_path(path) -> tuple[np.ndarray, np.ndarray]:
    """Accept a sequence of OUState or a (t, eta) array pair."""
    if isinstance(path, tuple) and len(path) == 2:
        t = np.asarray(path[0], dtype=float)
        eta = np.atleast_2d(np.asarray(path[1], dtype=float))
        if eta.shape[0] != t.shape[0]:
            eta = eta.T
        return t, eta
    states = list(path)
    if not states:
        raise ValueError("empty path")
    t = np.array([s.t for s in states])
    eta = np.vstack([np.atleast_1d(s.eta) for s in states])
    return t, eta


def ou_path_statistics(path, lags_s=()) -> PathStatistics:
    """Empirical mean, unbiased variance and autocorrelation of a sampled path.

    ``path`` is either a sequence of OUState or a (t, eta) pair as returned by
    ``ou_path``.  Lags are in seconds and must be near-integer multiples of
    the (uniform) sample spacing.  Constant channels get NaN autocorrelation
    and are flagged in ``autocorr_defined``.
    """
    t, eta = _coerce_path(path)
    if t.shape[0] == 0:
        raise ValueError("empty path")
    if t.shape[0] < 2:
        raise ValueError("path must contain at least two samples")
    steps = np.diff(t)
    dt = steps[0]
    if not np.allclose(steps, dt, rtol=1e-9, atol=1e-12):
        raise ValueError("non-uniform time spacing")
    n = eta.shape[0]
    mean = eta.mean(axis=0)
    variance = eta.var(axis=0, ddof=1)
    centered = eta - mean
    denom = (centered ** 2).sum(axis=0)
    defined = denom > 0.0
    lags_s = np.atleast_1d(np.asarray(lags_s, dtype=float))
    acf = np.full((lags_s.shape[0], eta.shape[1]), np.nan)
    for i, lag in enumerate(lags_s):
        k_lag = int(round(lag / dt))
        if abs(k_lag * dt - lag) > 1e-9 * max(1.0, abs(lag)):
            raise ValueError(f"lag {lag} is not a multiple of the spacing {dt}")
        if k_lag < 0 or k_lag >= n:
            raise ValueError(f"lag {lag} outside the sampled range")
        num = (centered[: n - k_lag] * centered[k_lag:]).sum(axis=0)
        acf[i, defined] = num[defined] / denom[defined]
    return PathStatistics(mean, variance, lags_s, acf, defined, dt, n)
