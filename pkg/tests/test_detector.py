"""Tests for collapse-proximity detection and the margin arithmetic.

rcond_estimate oracles are small matrices whose 1-norm condition numbers
are hand computable.  The closed-form margin relations are checked against
exact arithmetic: sigma**(4/3) * 542.75 at sigma = 0.10 is 25.193 and the
compensation sigma' = sigma * sqrt(eps'/eps) maps (0.10, eps, eps/4) to
exactly 0.05.
"""

import numpy as np
import pytest

from voltmargin.cases import three_bus
from voltmargin.detector import (
    DetectionCause,
    DetectorConfig,
    MarginSample,
    check_snb,
    margin_reduction_estimate,
    rcond_estimate,
    tradeoff_sigma,
)
from voltmargin.network import GridModel
from voltmargin.ou import OUParams


# --------------------------------------------------------- rcond oracle

def test_rcond_identity_and_diagonal():
    assert rcond_estimate(np.eye(4)) == 1.0
    assert rcond_estimate(np.diag([1.0, 1e-6])) == pytest.approx(1e-6)


def test_rcond_hand_example():
    # ||A||_1 = 5, A^-1 = [[0.3, -0.2], [-0.1, 0.4]], ||A^-1||_1 = 0.6
    a = np.array([[4.0, 2.0], [1.0, 3.0]])
    assert rcond_estimate(a) == pytest.approx(1.0 / 3.0)


def test_rcond_scale_invariance():
    rng = np.random.default_rng(5)
    a = rng.standard_normal((6, 6))
    base = rcond_estimate(a)
    assert rcond_estimate(64.0 * a) == base          # power of two: exact
    assert rcond_estimate(-a) == base
    assert rcond_estimate(3.7 * a) == pytest.approx(base, rel=1e-12)


def test_rcond_degenerate_inputs():
    assert rcond_estimate(np.zeros((3, 3))) == 0.0
    singular = np.array([[1.0, 2.0], [2.0, 4.0]])
    assert rcond_estimate(singular) == 0.0
    assert rcond_estimate(np.array([[1.0, np.nan], [0.0, 1.0]])) == 0.0
    assert rcond_estimate(np.array([[np.inf, 0.0], [0.0, 1.0]])) == 0.0
    with pytest.raises(ValueError, match="square"):
        rcond_estimate(np.ones((2, 3)))
    with pytest.raises(ValueError, match="square"):
        rcond_estimate(np.ones(4))


def test_detector_config_validation():
    with pytest.raises(ValueError):
        DetectorConfig(rcond_threshold=0.0)
    with pytest.raises(ValueError):
        DetectorConfig(rcond_threshold=1.0)
    with pytest.raises(ValueError):
        DetectorConfig(check_every=0)
    cfg = DetectorConfig(rcond_threshold=0.02, check_every=5)
    assert cfg.rcond_threshold == 0.02 and cfg.check_every == 5


# ----------------------------------------------------------- check_snb

def test_check_snb_quiet_then_firing():
    case, loads, _ = three_bus()
    model = GridModel(case, loads)
    ou = OUParams(alpha=[1.0], sigma=0.1)
    assert check_snb(model.equilibrium(0.0), case, loads, ou) is None
    assert check_snb(model.equilibrium(1.0), case, loads, ou) is None
    hit = check_snb(model.equilibrium(1.4), case, loads, ou)
    assert isinstance(hit, MarginSample)
    assert hit.cause is DetectionCause.RCOND_THRESHOLD
    assert hit.lam == 1.4
    # 40 MW of ramped nominal load on this case
    assert hit.s == pytest.approx(1.4 * 40.0)


def test_check_snb_threshold_moves_the_detection_point():
    case, loads, _ = three_bus()
    model = GridModel(case, loads)
    ou = OUParams(alpha=[1.0], sigma=0.1)
    eq = model.equilibrium(1.4)
    tight = DetectorConfig(rcond_threshold=0.02)
    assert check_snb(eq, case, loads, ou, tight) is None
    loose = DetectorConfig(rcond_threshold=0.5)
    assert check_snb(model.equilibrium(0.0), case, loads, ou,
                     loose) is not None


# ------------------------------------------------------ margin formulas

def test_margin_reduction_reference_values():
    assert margin_reduction_estimate(0.10, 542.75) == pytest.approx(
        25.2, abs=0.1)
    assert margin_reduction_estimate(0.15, 542.75) == pytest.approx(
        43.25, abs=0.1)
    assert margin_reduction_estimate(0.0, 542.75) == 0.0
    # pure power law in sigma
    assert margin_reduction_estimate(0.2, 100.0) == pytest.approx(
        0.2 ** (4.0 / 3.0) * 100.0, rel=1e-15)
    with pytest.raises(ValueError):
        margin_reduction_estimate(-0.1, 100.0)


def test_tradeoff_sigma_quarter_speed_halves_intensity():
    for eps in (1e-3, 0.5, 2.0):
        assert tradeoff_sigma(0.10, eps, eps / 4.0) == 0.05
    assert tradeoff_sigma(0.10, 1.0, 4.0) == pytest.approx(0.2)
    assert tradeoff_sigma(0.0, 1.0, 2.0) == 0.0
    with pytest.raises(ValueError):
        tradeoff_sigma(0.1, 0.0, 1.0)
    with pytest.raises(ValueError):
        tradeoff_sigma(-0.1, 1.0, 1.0)
