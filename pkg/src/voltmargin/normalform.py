"""Slow-fast saddle-node normal form laboratory.

The model, written on the slow time scale s (so the slow variable y advances
at unit rate), is

    eps * dx = (-y - x**2) ds + sqrt(eps) * sigma * dW_fast
          dy = ds              + sigma_slow * dW_slow

i.e. the fast equation reads dx = (1/eps)(-y - x**2) ds + (sigma/sqrt(eps)) dW.
For y < 0 the fast dynamics has a stable branch x = sqrt(-y) and an unstable
branch -sqrt(-y) that merge at the fold (x, y) = (0, 0); y drifting upward
drags the trajectory through the fold.

Deterministic delay.  The noiseless trajectory tracks the stable branch and
crosses x = 0 only after the fold, at y = c * eps**(2/3).  Substituting
x = eps * u'/u turns the fast equation into the Airy equation, so the exact
crossing constant is the first zero of Ai' (c = 1.0187929...), and the
trajectory falls to order-one negative x where Ai vanishes, i.e. near
y = 2.3381074 * eps**(2/3) (with a first-order -eps**(1/3) correction at
finite eps).  Both constants are exposed here as oracles; the integrator is
validated against them rather than the other way round.

Noise regimes.  Fluctuations of intensity sigma compete with the delay:
for sigma < sqrt(eps) (weak regime) paths hug the deterministic solution
inside a concentration neighbourhood B(h) up to exponentially small exit
probability ~ exp(-h**2 / (2 sigma**2)); for sigma >= sqrt(eps) (strong
regime) paths typically escape across the unstable branch while y is still
of order -sigma**(4/3), i.e. before the fold.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
from numba import njit
from scipy.linalg import solve_continuous_lyapunov
from scipy.special import ai_zeros

from .ou import RngStream
from .stats import wilson_interval

__all__ = [
    "Regime",
    "NormalFormParams",
    "EscapeRecord",
    "NFPath",
    "EllipsoidSpec",
    "ExitProbability",
    "airy_delay_constant",
    "airy_falloff_constant",
    "classify_regime",
    "nf_deterministic_trajectory",
    "nf_stochastic_trajectory",
    "cross_section_value",
    "stationary_cross_section",
    "ellipsoid_contains",
    "estimate_exit_probability",
    "exit_probability_sweep",
]


def airy_delay_constant() -> float:
    """Exact constant c in y_cross_zero = c * eps**(2/3): first zero of Ai'."""
    _, ap, _, _ = ai_zeros(1)
    return float(-ap[0])


def airy_falloff_constant() -> float:
    """Leading constant of the fall-off point (x reaching order -1):
    first zero of the Airy function Ai."""
    a, _, _, _ = ai_zeros(1)
    return float(-a[0])


class Regime(enum.Enum):
    WEAK = "weak"
    STRONG = "strong"


def classify_regime(sigma: float, epsilon: float) -> Regime:
    """Weak iff sigma < sqrt(epsilon); the boundary goes to STRONG.

    Compared as sigma**2 < epsilon, which is invariant under the exact
    rescaling (sigma, epsilon) -> (k*sigma, k**2 * epsilon).
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    if sigma < 0:
        raise ValueError("sigma must be non-negative")
    return Regime.WEAK if sigma * sigma < epsilon else Regime.STRONG


@dataclass(frozen=True)
class NormalFormParams:
    epsilon: float
    sigma: float = 0.0
    sigma_slow: float = 0.0
    y0: float = -1.0
    x0: float | None = None

    def __post_init__(self) -> None:
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        if self.sigma < 0 or self.sigma_slow < 0:
            raise ValueError("noise intensities must be non-negative")
        if self.y0 >= 0:
            raise ValueError("y0 must start below the fold (y0 < 0)")
        if self.x0 is None:
            object.__setattr__(self, "x0", float(np.sqrt(-self.y0)))

    def default_dt(self) -> float:
        return self.epsilon / 100.0


@dataclass(frozen=True)
class EscapeRecord:
    escaped: bool
    y_at_escape: float | None
    y_cross_zero: float | None


@dataclass(frozen=True)
class NFPath:
    y: np.ndarray
    x: np.ndarray
    dt: float
    escape: EscapeRecord


def _check_step(params: NormalFormParams, dt: float) -> None:
    if not dt > 0:
        raise ValueError("dt must be positive")
    if dt > params.epsilon / 10.0:
        raise ValueError("dt must satisfy dt <= epsilon/10 for stability")


@njit(cache=True)
def _nf_scan(x0, y0, dt, eps, amp_fast, amp_slow, z_fast, z_slow, n_steps,
             x_escape, out_x, out_y, stride):  # pragma: no cover - jit
    """Euler-Maruyama scan.  Returns (y_cross, y_escape, n_done) with the
    event values NaN when the event did not occur; the scan stops at the
    escape event or after n_steps.  out_x/out_y receive every stride-th
    sample when stride > 0."""
    x = x0
    y = y0
    y_cross = np.nan
    y_escape = np.nan
    if stride > 0:
        out_x[0] = x
        out_y[0] = y
    n_done = 0
    for k in range(n_steps):
        x = x + (dt / eps) * (-y - x * x) + amp_fast * z_fast[k]
        if amp_slow > 0.0:
            y = y + dt + amp_slow * z_slow[k]
        else:
            y = y0 + (k + 1) * dt
        n_done = k + 1
        if stride > 0 and n_done % stride == 0:
            out_x[n_done // stride] = x
            out_y[n_done // stride] = y
        if np.isnan(y_cross) and x <= 0.0:
            y_cross = y
        if x <= x_escape:
            y_escape = y
            break
    return y_cross, y_escape, n_done


def _run_nf(params: NormalFormParams, dt: float, y_max: float,
            x_escape: float, record_every: int,
            rng: np.random.Generator | None) -> NFPath:
    _check_step(params, dt)
    if y_max <= params.y0:
        raise ValueError("y_max must exceed y0")
    n_steps = int(np.ceil((y_max - params.y0) / dt))
    if params.sigma > 0.0 and rng is not None:
        z_fast = rng.standard_normal(n_steps)
    else:
        z_fast = np.zeros(n_steps)
    if params.sigma_slow > 0.0 and rng is not None:
        z_slow = rng.standard_normal(n_steps)
    else:
        z_slow = np.zeros(0)
    amp_fast = params.sigma / np.sqrt(params.epsilon) * np.sqrt(dt)
    amp_slow = params.sigma_slow * np.sqrt(dt)
    if params.sigma == 0.0:
        amp_fast = 0.0
    if params.sigma_slow == 0.0:
        amp_slow = 0.0
    stride = int(record_every)
    if stride > 0:
        n_rec = n_steps // stride + 1
        out_x = np.empty(n_rec)
        out_y = np.empty(n_rec)
    else:
        out_x = np.empty(0)
        out_y = np.empty(0)
    y_cross, y_escape, n_done = _nf_scan(
        params.x0, params.y0, dt, params.epsilon, amp_fast, amp_slow,
        z_fast, z_slow, n_steps, x_escape, out_x, out_y, stride)
    record = EscapeRecord(
        not np.isnan(y_escape),
        None if np.isnan(y_escape) else float(y_escape),
        None if np.isnan(y_cross) else float(y_cross))
    if stride > 0:
        keep = n_done // stride + 1
        return NFPath(out_y[:keep], out_x[:keep], dt, record)
    return NFPath(out_y, out_x, dt, record)


def nf_deterministic_trajectory(params: NormalFormParams, dt: float | None = None,
                                y_max: float | None = None,
                                x_escape: float = -1.0,
                                record_every: int = 1) -> NFPath:
    """Integrate the noiseless normal form until escape (x <= x_escape) or
    y_max.  The slow variable advances exactly linearly: y_k = y0 + k*dt."""
    dt = params.default_dt() if dt is None else dt
    if y_max is None:
        y_max = 3.0 * params.epsilon ** (2.0 / 3.0)
    det = NormalFormParams(params.epsilon, 0.0, 0.0, params.y0, params.x0)
    return _run_nf(det, dt, y_max, x_escape, record_every, None)


def nf_stochastic_trajectory(params: NormalFormParams, rng: np.random.Generator,
                             dt: float | None = None,
                             y_max: float | None = None,
                             x_escape: float = -1.0,
                             record_every: int = 1
                             ) -> tuple[NFPath, EscapeRecord]:
    """Euler-Maruyama trajectory of the stochastic normal form.

    With sigma == sigma_slow == 0 no random numbers are drawn and the result
    is bit-identical to ``nf_deterministic_trajectory`` at the same dt.
    """
    dt = params.default_dt() if dt is None else dt
    if y_max is None:
        y_max = 3.0 * params.epsilon ** (2.0 / 3.0)
    path = _run_nf(params, dt, y_max, x_escape, record_every, rng)
    return path, path.escape


def stationary_cross_section(a, noise_sq, kappa: float = 0.0) -> np.ndarray:
    """Stationary solution U of A U + U A^T + (kappa*I + Q) = 0.

    ``a`` is a stable (Hurwitz) square matrix or scalar, ``noise_sq`` the
    diffusion shape Q = B B^T (matrix or scalar).  Scalars are treated as
    1x1 systems: U* = -(q + kappa) / (2a).
    """
    scalar_in = np.ndim(a) == 0
    A = np.atleast_2d(np.asarray(a, dtype=float))
    Q = np.atleast_2d(np.asarray(noise_sq, dtype=float))
    if A.shape[0] != A.shape[1]:
        raise ValueError("A must be square")
    if Q.shape != A.shape:
        raise ValueError("noise_sq must match A in shape")
    if np.any(np.linalg.eigvals(A).real >= 0):
        raise ValueError("A is not Hurwitz")
    U = solve_continuous_lyapunov(A, -(Q + kappa * np.eye(A.shape[0])))
    return float(U[0, 0]) if scalar_in else U


@njit(cache=True)
def _affine_scan(coef, inc, u0):  # pragma: no cover - jit
    u = u0
    for i in range(coef.shape[0]):
        u = u * coef[i] + inc[i]
    return u


def cross_section_value(y: float, epsilon: float, kappa: float = 0.0,
                        noise_sq: float = 1.0, linearization=None,
                        y_start: float | None = None,
                        dt: float | None = None) -> float:
    """Concentration-ellipsoid cross section U(y) for the scalar fast variable.

    Integrates   eps * dU/dy = 2 a(y) U + (noise_sq + kappa)
    along the nominal branch from a stationary initial value at y_start.
    By default a(y) = -2*sqrt(-y), the linearization of the fast drift on the
    stable branch; any callable a(y) may be supplied.  a must be negative
    (Hurwitz) on the whole integration range.
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    if noise_sq <= 0 or kappa < 0:
        raise ValueError("noise_sq must be positive and kappa non-negative")
    a_fn = linearization if linearization is not None else (
        lambda yy: -2.0 * np.sqrt(-yy))
    if linearization is None and y >= 0:
        raise ValueError("default branch linearization requires y < 0")
    if y_start is None:
        y_start = y - 1.0
    if y_start >= y:
        raise ValueError("y_start must lie below y")
    if dt is None:
        dt = epsilon / 100.0
    n = int(np.ceil((y - y_start) / dt))
    grid = y_start + dt * np.arange(n)
    a_vals = np.asarray([a_fn(g) for g in grid], dtype=float)
    if np.any(a_vals >= 0):
        raise ValueError("linearization is not Hurwitz on the range")
    q = noise_sq + kappa
    u0 = -q / (2.0 * a_vals[0])
    coef = 1.0 + (2.0 * dt / epsilon) * a_vals
    if np.any(coef <= 0):
        raise ValueError("dt too large for stable integration")
    inc = np.full(n, (dt / epsilon) * q)
    return float(_affine_scan(coef, inc, u0))


@dataclass(frozen=True)
class EllipsoidSpec:
    """Neighbourhood B(h): points with (x - center)^2 / shape < h^2.

    ``center`` and ``shape`` are either constants or callables of y (the
    nominal trajectory and its cross section); for vector problems ``shape``
    may be a positive-definite matrix and the quadratic form is Mahalanobis.
    """

    center: object
    shape: object
    h: float

    def __post_init__(self) -> None:
        if self.h <= 0:
            raise ValueError("h must be positive")


def _eval(v, y):
    return v(y) if callable(v) else v


def ellipsoid_contains(point, spec: EllipsoidSpec, y: float | None = None) -> bool:
    center = np.asarray(_eval(spec.center, y), dtype=float)
    shape = np.asarray(_eval(spec.shape, y), dtype=float)
    dev = np.atleast_1d(np.asarray(point, dtype=float) - center)
    if shape.ndim <= 1:
        shape = np.atleast_1d(shape)
        if np.any(shape <= 0):
            raise ValueError("shape must be positive")
        qf = float(np.sum(dev * dev / shape))
    else:
        qf = float(dev @ np.linalg.solve(shape, dev))
        if qf < 0:
            raise ValueError("shape must be positive definite")
    return qf < spec.h ** 2


@njit(cache=True)
def _det_ref_scan(x0, y0, dt, eps, q, n_steps, out_x, out_u):
    # pragma: no cover - jit
    """Deterministic path and cross-section recurrence on the same grid."""
    x = x0
    u = q / (4.0 * x0)  # stationary: -q / (2*a0) with a0 = -2*x0
    out_x[0] = x
    out_u[0] = u
    for k in range(n_steps):
        y = y0 + k * dt
        a = -2.0 * x
        x = x + (dt / eps) * (-y - x * x)
        u = u + (dt / eps) * (2.0 * a * u + q)
        out_x[k + 1] = x
        out_u[k + 1] = u


@njit(cache=True)
def _qf_max_scan(x0, y0, dt, eps, amp, z, xdet, ubar, n_steps):
    # pragma: no cover - jit
    """Max over the horizon of the normalized squared deviation
    (x - x_det)^2 / U."""
    x = x0
    qmax = 0.0
    for k in range(n_steps):
        y = y0 + k * dt
        x = x + (dt / eps) * (-y - x * x) + amp * z[k]
        dev = x - xdet[k + 1]
        qf = dev * dev / ubar[k + 1]
        if qf > qmax:
            qmax = qf
    return qmax


@dataclass(frozen=True)
class ExitProbability:
    h: float
    estimate: float
    ci_low: float
    ci_high: float
    n_exits: int
    n_paths: int


def _exit_qf_batch(params: NormalFormParams, y_stop: float, n_paths: int,
                   rng_base: RngStream, dt: float | None) -> np.ndarray:
    if params.sigma <= 0:
        raise ValueError("exit estimation needs sigma > 0")
    if n_paths < 100:
        raise ValueError("n_paths must be at least 100")
    e23 = params.epsilon ** (2.0 / 3.0)
    if y_stop > -e23:
        raise ValueError("y_stop must stay below the fold region "
                         f"(y_stop <= -eps^(2/3) = {-e23:.3g})")
    if y_stop <= params.y0:
        raise ValueError("y_stop must exceed y0")
    dt = params.default_dt() if dt is None else dt
    _check_step(params, dt)
    n_steps = int(np.ceil((y_stop - params.y0) / dt))
    xdet = np.empty(n_steps + 1)
    ubar = np.empty(n_steps + 1)
    _det_ref_scan(params.x0, params.y0, dt, params.epsilon, 1.0, n_steps,
                  xdet, ubar)
    amp = params.sigma / np.sqrt(params.epsilon) * np.sqrt(dt)
    qmax = np.empty(n_paths)
    for i in range(n_paths):
        rng = rng_base.child(i).generator()
        z = rng.standard_normal(n_steps)
        qmax[i] = _qf_max_scan(params.x0, params.y0, dt, params.epsilon,
                               amp, z, xdet, ubar, n_steps)
    return qmax


def estimate_exit_probability(params: NormalFormParams, h: float,
                              y_stop: float, n_paths: int,
                              rng_base: RngStream,
                              dt: float | None = None) -> ExitProbability:
    """Monte Carlo probability that a path leaves B(h) before y_stop.

    B(h) is centred on the deterministic trajectory with the cross-section
    recurrence integrated on the same grid, so membership is the normalized
    squared deviation (x - x_det)^2 / U(y) < h^2.  Paths are driven by the
    per-path streams rng_base.child(i), independent of execution order.
    """
    if h <= 0:
        raise ValueError("h must be positive")
    qmax = _exit_qf_batch(params, y_stop, n_paths, rng_base, dt)
    n_exits = int(np.count_nonzero(qmax >= h * h))
    lo, hi = wilson_interval(n_exits, n_paths)
    return ExitProbability(h, n_exits / n_paths, lo, hi, n_exits, n_paths)


def exit_probability_sweep(params: NormalFormParams, h_values,
                           y_stop: float, n_paths: int,
                           rng_base: RngStream,
                           dt: float | None = None) -> list[ExitProbability]:
    """Exit probabilities for several h over one common batch of paths.

    Sharing paths makes the estimates nested (B(h') contains B(h) exits for
    h' < h), so the sequence is non-increasing by construction and adjacent
    estimates differ exactly where some path's peak deviation falls between
    the two thresholds.
    """
    h_values = [float(h) for h in h_values]
    if any(h <= 0 for h in h_values):
        raise ValueError("h values must be positive")
    qmax = _exit_qf_batch(params, y_stop, n_paths, rng_base, dt)
    out = []
    for h in h_values:
        n_exits = int(np.count_nonzero(qmax >= h * h))
        lo, hi = wilson_interval(n_exits, n_paths)
        out.append(ExitProbability(h, n_exits / n_paths, lo, hi,
                                   n_exits, n_paths))
    return out
