"""Collapse-proximity detection and margin arithmetic.

Detection monitors the reduced state matrix along a trajectory.  Two causes
terminate a run:

* RCOND_THRESHOLD: the reciprocal condition number of the reduced state
  matrix falls below a threshold, flagging proximity to a saddle-node of the
  slow load-recovery dynamics.
* NO_SOLUTION: the algebraic network equations lose their solution (Newton
  divergence or a singular algebraic Jacobian), the hard collapse.

The margin sample S converts the loading factor at detection into megawatts
of added load: S = lam * p0_ramped * base_mva, where p0_ramped is the total
nominal power of ramped loads.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .network import GridModel, GridState, NetworkCase, NoSolution
from .ou import OUParams

__all__ = [
    "DetectionCause",
    "DetectorConfig",
    "MarginSample",
    "rcond_estimate",
    "check_snb",
    "margin_reduction_estimate",
    "tradeoff_sigma",
]


class DetectionCause(enum.Enum):
    RCOND_THRESHOLD = "rcond_threshold"
    NO_SOLUTION = "no_solution"


@dataclass(frozen=True)
class DetectorConfig:
    rcond_threshold: float = 0.1
    check_every: int = 1     # steps between reduced-matrix checks

    def __post_init__(self) -> None:
        if not 0.0 < self.rcond_threshold < 1.0:
            raise ValueError("rcond_threshold must lie in (0, 1)")
        if self.check_every < 1:
            raise ValueError("check_every must be a positive integer")


@dataclass(frozen=True)
class MarginSample:
    """Loading margin at detection: S in MW, the loading factor lam, the
    simulation time t, and what triggered the detection."""

    s: float
    lam: float
    t: float
    cause: DetectionCause


def rcond_estimate(a: np.ndarray) -> float:
    """Reciprocal condition number in the 1-norm, exact inverse.

    Scale invariant: rcond_estimate(c * a) == rcond_estimate(a) for scalar
    c != 0.  Returns 0.0 for singular or non-finite input.
    """
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError("square matrix required")
    if not np.all(np.isfinite(a)):
        return 0.0
    norm = np.linalg.norm(a, 1)
    if norm == 0.0:
        return 0.0
    try:
        inv = np.linalg.inv(a)
    except np.linalg.LinAlgError:
        return 0.0
    if not np.all(np.isfinite(inv)):
        return 0.0
    return 1.0 / (norm * np.linalg.norm(inv, 1))


def margin_sample(model: GridModel, state: GridState,
                  cause: DetectionCause) -> MarginSample:
    s = state.lam * model.ramped_p0() * model.case.base_mva
    return MarginSample(s=s, lam=state.lam, t=state.t, cause=cause)


def check_snb(state: GridState, case: NetworkCase, loads, ou: OUParams,
              cfg: DetectorConfig = DetectorConfig()) -> MarginSample | None:
    """One-shot proximity check at a solved state.

    Returns a MarginSample when the reduced state matrix is past the rcond
    threshold (or its algebraic block is outright singular), None while the
    state looks stable.
    """
    model = GridModel(case, tuple(loads))
    try:
        a_sys = model.reduced_matrix(state, ou)
    except NoSolution:
        return margin_sample(model, state, DetectionCause.NO_SOLUTION)
    if rcond_estimate(a_sys) < cfg.rcond_threshold:
        return margin_sample(model, state, DetectionCause.RCOND_THRESHOLD)
    return None


def margin_reduction_estimate(sigma: float, s_det: float) -> float:
    """Predicted margin shrink in MW for fluctuation intensity sigma, given
    the deterministic margin s_det: delta_S = sigma**(4/3) * s_det."""
    if sigma < 0:
        raise ValueError("sigma must be non-negative")
    return sigma ** (4.0 / 3.0) * s_det


def tradeoff_sigma(sigma: float, epsilon: float, epsilon_new: float) -> float:
    """Fluctuation intensity with the same margin effect at a new variation
    speed: sigma' = sigma * sqrt(epsilon' / epsilon)."""
    if sigma < 0:
        raise ValueError("sigma must be non-negative")
    if epsilon <= 0 or epsilon_new <= 0:
        raise ValueError("speeds must be positive")
    return sigma * np.sqrt(epsilon_new / epsilon)
