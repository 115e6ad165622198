"""Shipped study cases.

Each builder returns (case, loads, schedule): the static network, the
exponential-recovery loads attached to it, and a default loading ramp.  The
two-bus case has a closed-form collapse point and is used for oracle checks;
the three-bus case is the small meshed system for Monte Carlo sweeps; the
fourteen-bus case exercises taps, shunts and reactive-limit switching.
"""

from __future__ import annotations

import math

from .network import (Branch, Bus, BusKind, Generator, GridModel,
                      LoadDynParams, NetworkCase, RampSchedule)

__all__ = [
    "two_bus",
    "two_bus_collapse_point",
    "two_bus_voltage",
    "three_bus",
    "fourteen_bus",
    "build_model",
    "CASE_BUILDERS",
]

# Feeder equilibrium voltages at lam = 0, frozen so the recovery loads are
# exactly relaxed (x = 0) at the initial operating point.
TWO_BUS_V2 = 0.8995050870925387
THREE_BUS_V3 = 0.9521734316757773


def two_bus(tp: float = 0.2, tq: float = 0.2) -> tuple[
        NetworkCase, tuple[LoadDynParams, ...], RampSchedule]:
    """Stiff source feeding one load bus through a single reactance.

    X = 0.5, constant power factor tan(phi) = 0.2 on both the ramped static
    load (0.5 + j0.1) and the small constant recovery load (0.02 + j0.004),
    so the collapse point has a closed form (two_bus_collapse_point).
    """
    case = NetworkCase(
        name="two_bus",
        base_mva=100.0,
        buses=(
            Bus(1, BusKind.SLACK, v0=1.0),
            Bus(2, BusKind.PQ, v0=1.0, pd=0.5, qd=0.1, ramp=True),
        ),
        branches=(Branch(1, 2, g=0.0, b=-2.0),),
    )
    loads = (LoadDynParams(bus=2, p0=0.02, q0=0.004, tp=tp, tq=tq,
                           v0=TWO_BUS_V2, noise_channel=0, ramped=False),)
    schedule = RampSchedule(delta_lambda=0.01, interval=0.5, lambda_max=1.0)
    return case, loads, schedule


def two_bus_voltage(p: float, q: float, x: float = 0.5,
                    v1: float = 1.0) -> float:
    """Upper-branch load voltage of the two-bus feeder for constant-power
    demand (p, q)."""
    b = 2.0 * q * x - v1 * v1
    disc = b * b - 4.0 * x * x * (p * p + q * q)
    if disc < 0:
        raise ValueError("demand beyond the feeder collapse point")
    u = (-b + math.sqrt(disc)) / 2.0
    return math.sqrt(u)


def two_bus_collapse_point(x: float = 0.5, gamma: float = 0.2,
                           v1: float = 1.0) -> float:
    """Maximum deliverable active power at constant power factor
    q = gamma * p:  p_max = v1^2 (sqrt(1 + gamma^2) - gamma) / (2 x)."""
    return v1 * v1 * (math.sqrt(1.0 + gamma * gamma) - gamma) / (2.0 * x)


def three_bus() -> tuple[NetworkCase, tuple[LoadDynParams, ...], RampSchedule]:
    """Slack - PV - load chain, the reference case for margin sweeps.

    The PV bus holds 1.0 pu with unbounded reactive headroom, so bus 3 sees
    an ideal source behind X23 and the collapse point is closed-form:
    lam* = two_bus_collapse_point(x=0.4) / 0.4 - 1.  The ramped recovery
    load is 40 MW nominal; with delta_lambda = 0.02 the intervals
    {0.1, 0.4, 0.9, 1.6} s give ramp speeds {8, 2, 0.9, 0.5} MW/s.
    """
    case = NetworkCase(
        name="three_bus",
        base_mva=100.0,
        buses=(
            Bus(1, BusKind.SLACK, v0=1.0),
            Bus(2, BusKind.PV, v0=1.0),
            Bus(3, BusKind.PQ, v0=1.0),
        ),
        branches=(
            Branch(1, 2, g=0.0, b=-5.0),      # X12 = 0.2
            Branch(2, 3, g=0.0, b=-2.5),      # X23 = 0.4
        ),
        generators=(Generator(bus=2, p=0.2, v_set=1.0),),
    )
    loads = (LoadDynParams(bus=3, p0=0.4, q0=0.08, tp=1.0, tq=1.0,
                           v0=THREE_BUS_V3, noise_channel=0, ramped=True),)
    schedule = RampSchedule(delta_lambda=0.02, interval=0.4, lambda_max=2.0)
    return case, loads, schedule


def _line(f: int, t: int, r: float, x: float, b: float = 0.0,
          tap: float = 1.0) -> Branch:
    d = r * r + x * x
    return Branch(f, t, g=r / d, b=-x / d, b_shunt=b, tap=tap)


def fourteen_bus() -> tuple[NetworkCase, tuple[LoadDynParams, ...],
                            RampSchedule]:
    """Medium meshed case with off-nominal taps, a shunt capacitor and
    reactive-limited machines.  The ramped static load sits at bus 4
    (40 MW nominal); bus 9 carries the recovery load."""
    buses = (
        Bus(1, BusKind.SLACK, v0=1.06),
        Bus(2, BusKind.PV, pd=0.217, qd=0.127),
        Bus(3, BusKind.PV, pd=0.942, qd=0.190),
        Bus(4, BusKind.PQ, pd=0.40, qd=-0.039, ramp=True),
        Bus(5, BusKind.PQ, pd=0.076, qd=0.016),
        Bus(6, BusKind.PV, pd=0.112, qd=0.075),
        Bus(7, BusKind.PQ),
        Bus(8, BusKind.PV),
        Bus(9, BusKind.PQ, shunt_b=0.19),
        Bus(10, BusKind.PQ, pd=0.090, qd=0.058),
        Bus(11, BusKind.PQ, pd=0.035, qd=0.018),
        Bus(12, BusKind.PQ, pd=0.061, qd=0.016),
        Bus(13, BusKind.PQ, pd=0.135, qd=0.058),
        Bus(14, BusKind.PQ, pd=0.149, qd=0.050),
    )
    branches = (
        _line(1, 2, 0.01938, 0.05917, 0.0528),
        _line(1, 5, 0.05403, 0.22304, 0.0492),
        _line(2, 3, 0.04699, 0.19797, 0.0438),
        _line(2, 4, 0.05811, 0.17632, 0.0340),
        _line(2, 5, 0.05695, 0.17388, 0.0346),
        _line(3, 4, 0.06701, 0.17103, 0.0128),
        _line(4, 5, 0.01335, 0.04211),
        _line(4, 7, 0.0, 0.20912, tap=0.978),
        _line(4, 9, 0.0, 0.55618, tap=0.969),
        _line(5, 6, 0.0, 0.25202, tap=0.932),
        _line(6, 11, 0.09498, 0.19890),
        _line(6, 12, 0.12291, 0.25581),
        _line(6, 13, 0.06615, 0.13027),
        _line(7, 8, 0.0, 0.17615),
        _line(7, 9, 0.0, 0.11001),
        _line(9, 10, 0.03181, 0.08450),
        _line(9, 14, 0.12711, 0.27038),
        _line(10, 11, 0.08205, 0.19207),
        _line(12, 13, 0.22092, 0.19988),
        _line(13, 14, 0.17093, 0.34802),
    )
    generators = (
        Generator(bus=2, p=0.4, v_set=1.045, qmin=-0.40, qmax=0.50),
        Generator(bus=3, p=0.0, v_set=1.01, qmin=0.0, qmax=0.40),
        Generator(bus=6, p=0.0, v_set=1.07, qmin=-0.06, qmax=0.24),
        Generator(bus=8, p=0.0, v_set=1.09, qmin=-0.06, qmax=0.24),
    )
    case = NetworkCase(name="fourteen_bus", base_mva=100.0, buses=buses,
                       branches=branches, generators=generators)
    loads = (LoadDynParams(bus=9, p0=0.295, q0=0.166, tp=1.0, tq=1.0,
                           v0=1.0, noise_channel=0, ramped=False),)
    schedule = RampSchedule(delta_lambda=0.02, interval=1.0, lambda_max=3.0)
    return case, loads, schedule


CASE_BUILDERS = {
    "two_bus": two_bus,
    "three_bus": three_bus,
    "fourteen_bus": fourteen_bus,
}


def build_model(name: str) -> tuple[GridModel, RampSchedule]:
    """Look up a shipped case by name and wrap it in a GridModel."""
    try:
        builder = CASE_BUILDERS[name]
    except KeyError:
        known = ", ".join(sorted(CASE_BUILDERS))
        raise ValueError(f"unknown case {name!r}; shipped cases: {known}")
    case, loads, schedule = builder()
    return GridModel(case, loads), schedule
