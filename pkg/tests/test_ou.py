"""Tests for the vector OU fluctuation process.

Statistical assertions use pinned seeds so every run is deterministic; the
expected values come from the closed-form stationary law (mean 0, variance
(sigma*beta)^2 / (2*alpha), autocorrelation exp(-alpha*lag)) and, for the
Euler-Maruyama discretization bias, from the AR(1) fixed point
variance * 1 / (1 - alpha*dt/2).
"""

import math

import numpy as np
import pytest

from voltmargin.ou import (
    OUParams,
    OUState,
    RngStream,
    ou_initial_sample,
    ou_path,
    ou_path_statistics,
    ou_step,
    ou_step_exact,
)


def test_params_validation():
    with pytest.raises(ValueError):
        OUParams(alpha=0.0)
    with pytest.raises(ValueError):
        OUParams(alpha=-1.0)
    with pytest.raises(ValueError):
        OUParams(alpha=1.0, sigma=-0.1)
    with pytest.raises(ValueError):
        OUParams(alpha=[1.0, 2.0], beta=[1.0])
    with pytest.raises(ValueError):
        OUParams(alpha=1.0, beta=0.0)


def test_beta_convention_makes_sigma_the_stationary_std():
    p = OUParams(alpha=[0.5, 1.0, 4.0], sigma=0.2)
    assert np.allclose(p.beta, np.sqrt(2.0 * p.alpha))
    assert np.allclose(p.stationary_variance(), 0.04)


def test_stationary_variance_formula_general_beta():
    p = OUParams(alpha=[2.0], beta=[3.0], sigma=0.5)
    # (0.5 * 3)^2 / (2 * 2) = 2.25 / 4
    assert np.allclose(p.stationary_variance(), 0.5625)


def test_rng_stream_reproducible_and_independent():
    a = RngStream(123, 5).generator().standard_normal(8)
    b = RngStream(123, 5).generator().standard_normal(8)
    c = RngStream(123, 6).generator().standard_normal(8)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)
    with pytest.raises(ValueError):
        RngStream(-1, 0)


def test_rng_stream_child_packing():
    s = RngStream(9, 3)
    assert s.child(7) == RngStream(9, (3 << 32) | 7)


def test_zero_noise_is_seed_independent_and_deterministic_decay():
    p = OUParams(alpha=[2.0], sigma=0.0)
    s1 = ou_initial_sample(p, RngStream(1).generator())
    s2 = ou_initial_sample(p, RngStream(2).generator())
    assert np.array_equal(s1.eta, s2.eta) and s1.eta[0] == 0.0

    state = OUState(np.array([1.0]), 0.0)
    r1, r2 = RngStream(1).generator(), RngStream(2).generator()
    x1, x2 = state, state
    for _ in range(5):
        x1 = ou_step(x1, p, 0.1, r1)
        x2 = ou_step(x2, p, 0.1, r2)
    assert np.array_equal(x1.eta, x2.eta)
    # exact decay map of the drift: eta * (1 - alpha*dt)^n
    assert x1.eta[0] == pytest.approx((1.0 - 0.2) ** 5, rel=0, abs=1e-15)


def test_step_requires_positive_dt():
    p = OUParams(alpha=1.0, sigma=0.1)
    state = OUState(np.zeros(1))
    with pytest.raises(ValueError):
        ou_step(state, p, 0.0, RngStream(0).generator())
    with pytest.raises(ValueError):
        ou_step_exact(state, p, -0.05, RngStream(0).generator())


def test_bulk_path_matches_single_steps_bitwise():
    p = OUParams(alpha=[1.0, 0.5], sigma=0.3)
    for method, step in (("euler", ou_step), ("exact", ou_step_exact)):
        rng_a = RngStream(77, 1).generator()
        t, eta = ou_path(p, 50, 0.05, rng_a, method=method)
        rng_b = RngStream(77, 1).generator()
        state = ou_initial_sample(p, rng_b)
        assert np.array_equal(eta[0], state.eta)
        for i in range(50):
            state = step(state, p, 0.05, rng_b)
            assert np.array_equal(eta[i + 1], state.eta), (method, i)
        assert t[-1] == pytest.approx(50 * 0.05)


def test_initial_sample_matches_stationary_std():
    p = OUParams(alpha=1.0, sigma=0.10)
    rng = RngStream(3, 0).generator()
    draws = np.array([ou_initial_sample(p, rng).eta[0] for _ in range(4000)])
    assert abs(draws.mean()) < 0.005
    assert draws.std(ddof=1) == pytest.approx(0.10, rel=0.05)


def test_exact_kernel_one_step_moments():
    # From a fixed point, one exact step has mean eta*exp(-a*dt) and
    # variance (sigma*beta)^2 (1 - exp(-2 a dt)) / (2 a) for any dt.
    p = OUParams(alpha=[0.8], sigma=0.25)
    dt = 0.7
    rng = RngStream(21, 0).generator()
    start = OUState(np.array([1.5]), 0.0)
    draws = np.array([ou_step_exact(start, p, dt, rng).eta[0]
                      for _ in range(20000)])
    mean_ref = 1.5 * math.exp(-0.8 * dt)
    var_ref = (0.25 ** 2) * 2.0 * 0.8 * (1 - math.exp(-2 * 0.8 * dt)) / (2 * 0.8)
    assert draws.mean() == pytest.approx(mean_ref, abs=0.004)
    assert draws.var(ddof=1) == pytest.approx(var_ref, rel=0.04)


def test_em_stationary_variance_bias_vs_exact_kernel():
    # The EM chain is AR(1) with a = 1 - alpha*dt, whose stationary variance
    # exceeds the continuous-time value by 1/(1 - alpha*dt/2).  The exact
    # kernel has no bias.  This is the dual-route discretization check.
    p = OUParams(alpha=1.0, sigma=0.10)
    dt = 0.05
    _, em = ou_path(p, 2_000_000, dt, RngStream(7, 1).generator())
    _, ex = ou_path(p, 2_000_000, dt, RngStream(7, 2).generator(),
                    method="exact")
    ratio = em[:, 0].var(ddof=1) / ex[:, 0].var(ddof=1)
    assert ratio == pytest.approx(1.0 / (1.0 - dt / 2.0), abs=0.01)
    assert ex[:, 0].var(ddof=1) == pytest.approx(0.01, rel=0.02)


def test_long_path_autocorrelation_matches_exponential():
    # Exact kernel, 1e6 steps at dt=0.05: lag-1s autocorrelation within
    # +-0.01 of exp(-1); EM at the same dt stays within the looser +-0.02
    # band for lags up to 3/alpha and decays monotonically.
    p = OUParams(alpha=1.0, sigma=0.10)
    t, eta = ou_path(p, 1_000_000, 0.05, RngStream(100, 0).generator(),
                     method="exact")
    s = ou_path_statistics((t, eta), lags_s=[1.0])
    assert s.autocorrelation[0, 0] == pytest.approx(math.exp(-1.0), abs=0.01)

    t, eta = ou_path(p, 200_000, 0.05, RngStream(100, 1).generator())
    lags = [0.5, 1.0, 1.5, 2.0, 2.5, 3.0]
    s = ou_path_statistics((t, eta), lags_s=lags)
    acf = s.autocorrelation[:, 0]
    assert np.all(np.diff(acf) < 0)
    assert np.allclose(acf, np.exp(-np.array(lags)), atol=0.02)


def test_path_statistics_hand_oracle():
    # 4-sample path 1, 2, 3, 4 at dt=1: mean 2.5, unbiased variance 5/3,
    # lag-1 autocorrelation = sum((x_i-m)(x_{i+1}-m)) / sum((x_i-m)^2)
    #   = ((-1.5)(-0.5) + (-0.5)(0.5) + (0.5)(1.5)) / 5 = 1.25 / 5 = 0.25
    states = [OUState(np.array([v]), float(i))
              for i, v in enumerate([1.0, 2.0, 3.0, 4.0])]
    s = ou_path_statistics(states, lags_s=[1.0])
    assert s.mean[0] == pytest.approx(2.5)
    assert s.variance[0] == pytest.approx(5.0 / 3.0)
    assert s.autocorrelation[0, 0] == pytest.approx(0.25)


def test_path_statistics_errors():
    with pytest.raises(ValueError, match="empty"):
        ou_path_statistics([])
    states = [OUState(np.array([1.0]), t) for t in (0.0, 0.1, 0.3)]
    with pytest.raises(ValueError, match="non-uniform"):
        ou_path_statistics(states)
    good = [OUState(np.array([1.0 * i]), 0.1 * i) for i in range(10)]
    with pytest.raises(ValueError, match="multiple"):
        ou_path_statistics(good, lags_s=[0.15])
    with pytest.raises(ValueError, match="range"):
        ou_path_statistics(good, lags_s=[5.0])


def test_constant_path_autocorrelation_flagged_undefined():
    states = [OUState(np.array([2.0]), 0.1 * i) for i in range(10)]
    s = ou_path_statistics(states, lags_s=[0.1])
    assert s.variance[0] == 0.0
    assert not s.autocorr_defined[0]
    assert np.isnan(s.autocorrelation[0, 0])
