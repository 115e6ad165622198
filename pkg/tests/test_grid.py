"""Tests for the static grid layer: power flow, recovery loads, ramp
schedules, and the reduced state matrix.

The load-side oracles are closed forms of the single-line system: with a
stiff source V1 behind reactance X feeding P + jQ, the receiving voltage
satisfies u^2 + u(2QX - V1^2) + X^2(P^2 + Q^2) = 0 with u = V2^2, and the
maximum transferable power at constant power factor gamma = Q/P is
Pmax = V1^2 (sqrt(1 + gamma^2) - gamma) / (2X).  Jacobians and the reduced
state matrix are checked against central finite differences.
"""

import math
from dataclasses import replace

import numpy as np
import pytest

from voltmargin.cases import (
    TWO_BUS_V2,
    build_model,
    fourteen_bus,
    three_bus,
    two_bus,
    two_bus_collapse_point,
    two_bus_voltage,
)
from voltmargin.network import (
    Branch,
    Bus,
    BusKind,
    Generator,
    GridModel,
    LoadDynParams,
    NetworkCase,
    RampSchedule,
    algebraic_residuals,
    build_ybus,
    load_consumption,
    load_state_derivative,
    ramp_lambda,
    reduced_state_matrix,
    solve_algebraic,
)
from voltmargin.ou import OUParams


def _bus(i, kind=BusKind.PQ, **kw):
    return Bus(id=i, kind=kind, **kw)


# ------------------------------------------------------------- validation

def test_case_requires_exactly_one_slack():
    with pytest.raises(ValueError, match="slack"):
        NetworkCase("c", 100.0, (_bus(1), _bus(2)),
                    (Branch(1, 2, 0.0, -1.0),))
    with pytest.raises(ValueError, match="slack"):
        NetworkCase("c", 100.0,
                    (_bus(1, BusKind.SLACK), _bus(2, BusKind.SLACK)),
                    (Branch(1, 2, 0.0, -1.0),))


def test_case_rejects_duplicate_ids_and_unknown_endpoints():
    with pytest.raises(ValueError, match="duplicate"):
        NetworkCase("c", 100.0, (_bus(1, BusKind.SLACK), _bus(1)),
                    (Branch(1, 1, 0.0, -1.0),))
    with pytest.raises(ValueError, match="unknown bus"):
        NetworkCase("c", 100.0, (_bus(1, BusKind.SLACK), _bus(2)),
                    (Branch(1, 3, 0.0, -1.0),))


def test_case_rejects_disconnected_bus():
    with pytest.raises(ValueError, match="not connected"):
        NetworkCase("c", 100.0,
                    (_bus(1, BusKind.SLACK), _bus(2), _bus(3)),
                    (Branch(1, 2, 0.0, -1.0),))


def test_case_generator_rules():
    buses = (_bus(1, BusKind.SLACK), _bus(2, BusKind.PV), _bus(3))
    branches = (Branch(1, 2, 0.0, -1.0), Branch(2, 3, 0.0, -1.0))
    with pytest.raises(ValueError, match="PV bus 2 has no generator"):
        NetworkCase("c", 100.0, buses, branches)
    with pytest.raises(ValueError, match="qmin > qmax"):
        NetworkCase("c", 100.0, buses, branches,
                    (Generator(bus=2, qmin=0.5, qmax=-0.5),))
    with pytest.raises(ValueError, match="PQ bus"):
        NetworkCase("c", 100.0, buses, branches,
                    (Generator(bus=2), Generator(bus=3)))
    with pytest.raises(ValueError, match="one generator per bus"):
        NetworkCase("c", 100.0, buses, branches,
                    (Generator(bus=2), Generator(bus=2)))


def test_load_params_validation():
    with pytest.raises(ValueError, match="Tp and Tq"):
        LoadDynParams(bus=1, p0=0.1, q0=0.02, tp=0.0)
    with pytest.raises(ValueError, match="V0"):
        LoadDynParams(bus=1, p0=0.1, q0=0.02, v0=-1.0)


# ----------------------------------------------------------------- ybus

def test_ybus_tap_and_shunt_stamps():
    case = NetworkCase(
        "y", 100.0,
        (_bus(1, BusKind.SLACK), _bus(2, shunt_b=0.05)),
        (Branch(1, 2, g=1.0, b=-4.0, b_shunt=0.2, tap=0.95),))
    y = build_ybus(case)
    # from side sees (ys + j b_shunt/2) / tap^2, to side the unscaled sum
    assert y[0, 0] == pytest.approx((1.0 - 3.9j) / 0.9025)
    assert y[0, 1] == pytest.approx(-(1.0 - 4.0j) / 0.95)
    assert y[1, 0] == pytest.approx(-(1.0 - 4.0j) / 0.95)
    assert y[1, 1] == pytest.approx(1.0 - 4.0j + 0.1j + 0.05j)


# ------------------------------------------------------- recovery loads

def test_load_consumption_hand_values():
    ld = LoadDynParams(bus=1, p0=1.0, q0=0.5, tp=2.0, tq=1.0, v0=1.0)
    # alpha_s = 0, alpha_t = 2, at v = 0.9 with zero recovery state
    p, q = load_consumption(ld, v=0.9, x_p=0.0, x_q=0.0)
    assert p == pytest.approx(0.81)
    assert q == pytest.approx(0.5 * 0.81)
    dxp, dxq = load_state_derivative(ld, v=0.9, x_p=0.0, x_q=0.0)
    assert dxp == pytest.approx(1.0 - 0.81)
    assert dxq == pytest.approx(0.5 * (1.0 - 0.81))
    # at v = v0 the two responses coincide and the state is at rest
    dxp, dxq = load_state_derivative(ld, v=1.0, x_p=0.0, x_q=0.0)
    assert dxp == 0.0 and dxq == 0.0


def test_load_noise_and_ramp_shift_the_nominal_power():
    ld = LoadDynParams(bus=1, p0=1.0, q0=0.5, v0=1.0, noise_channel=0,
                       ramped=True)
    p, q = load_consumption(ld, v=1.0, x_p=0.0, x_q=0.0, eta=0.03, lam=0.5)
    assert p == pytest.approx(1.0 * 1.5 + 0.03)
    assert q == pytest.approx(0.5 * 1.5 + 0.03)  # shared additive channel
    frozen = LoadDynParams(bus=1, p0=1.0, q0=0.5, v0=1.0, ramped=False)
    p, _ = load_consumption(frozen, v=1.0, x_p=0.0, x_q=0.0, lam=0.5)
    assert p == pytest.approx(1.0)


# ------------------------------------------------------- ramp schedules

def test_ramp_lambda_floor_and_cap():
    s = RampSchedule(delta_lambda=0.1, interval=2.0, lambda_max=0.35)
    assert ramp_lambda(s, 0.0) == 0.0
    assert ramp_lambda(s, 1.99) == 0.0
    assert ramp_lambda(s, 2.0) == pytest.approx(0.1)
    assert ramp_lambda(s, 3.9) == pytest.approx(0.1)
    assert ramp_lambda(s, 6.5) == pytest.approx(0.3)
    assert ramp_lambda(s, 8.0) == pytest.approx(0.35)
    assert ramp_lambda(s, 1e6) == pytest.approx(0.35)
    with pytest.raises(ValueError):
        ramp_lambda(s, -0.1)


def test_ramp_speed_conversion_is_self_inverse():
    s = RampSchedule(delta_lambda=0.03, interval=0.7, lambda_max=2.0)
    speed = s.speed_mw_per_s(55.0)
    assert speed == pytest.approx(0.03 * 55.0 / 0.7)
    back = RampSchedule.from_speed(speed, 55.0, delta_lambda=0.03,
                                   lambda_max=2.0)
    assert back.interval == pytest.approx(s.interval, rel=1e-15)
    with pytest.raises(ValueError):
        RampSchedule.from_speed(-1.0, 55.0)
    with pytest.raises(ValueError):
        RampSchedule(0.0, 1.0, 1.0)


# ------------------------------------------------- residuals and solver

def test_residual_hand_example():
    # stiff source, one reactive line, half a unit of constant power load:
    # at the flat start nothing flows, so the mismatch is exactly the load
    case = NetworkCase("hand", 100.0,
                       (_bus(1, BusKind.SLACK), _bus(2, pd=0.5)),
                       (Branch(1, 2, g=0.0, b=-10.0),))
    model = GridModel(case, ())
    r = model.residuals(model.flat_state())
    assert r == pytest.approx([-0.5, 0.0])


def test_two_bus_equilibrium_matches_closed_form():
    case, loads, _ = two_bus()
    model = GridModel(case, loads)
    eq = model.equilibrium(0.0)
    assert eq is not None
    # steady consumption: static 0.5 + j0.1 plus the constant-power
    # recovery load 0.02 + j0.004
    v_exact = two_bus_voltage(0.52, 0.104, x=0.5)
    assert eq.v[1] == pytest.approx(v_exact, abs=1e-7)
    assert v_exact == pytest.approx(TWO_BUS_V2, rel=1e-12)
    # the load reference voltage is the equilibrium voltage, so the
    # recovery states vanish there
    assert np.all(np.abs(eq.x) < 1e-6)
    # both residual modes vanish at the equilibrium point
    assert np.max(np.abs(model.residuals(eq, steady=True))) < 1e-8
    assert np.max(np.abs(model.residuals(eq, steady=False))) < 1e-6
    assert np.max(np.abs(model.state_derivative(eq))) < 1e-6


def test_two_bus_collapse_point_formula():
    gamma = 0.2
    exact = (math.sqrt(1.0 + gamma * gamma) - gamma) / (2.0 * 0.5)
    assert two_bus_collapse_point() == pytest.approx(exact, rel=1e-14)
    # loadability edge: the steady characteristic solves just below the
    # fold and loses its solution just above
    case, loads, _ = two_bus()
    model = GridModel(case, loads)
    lam_star = (exact - 0.52) / 0.5
    assert model.equilibrium(lam_star - 0.005) is not None
    assert model.equilibrium(lam_star + 0.005) is None


def test_two_bus_voltage_picks_upper_branch():
    v = two_bus_voltage(0.3, 0.06, x=0.5)
    # upper root of u^2 + u(2QX - 1) + X^2(P^2+Q^2) = 0
    b = 2.0 * 0.06 * 0.5 - 1.0
    c = 0.25 * (0.09 + 0.0036)
    u = (-b + math.sqrt(b * b - 4.0 * c)) / 2.0
    assert v == pytest.approx(math.sqrt(u), rel=1e-14)
    with pytest.raises(ValueError):
        two_bus_voltage(5.0, 1.0, x=0.5)   # beyond the nose


def test_three_bus_closed_form_loadability():
    case, loads, _ = three_bus()
    model = GridModel(case, loads)
    # the PV machine holds bus 2 at 1.0 with unbounded reactive range, so
    # the nose seen from bus 3 is the single-line form through X23 = 0.4
    lam_star = two_bus_collapse_point(x=0.4) / 0.4 - 1.0
    assert lam_star == pytest.approx(1.5618871959954905, rel=1e-12)
    assert model.equilibrium(lam_star - 0.01) is not None
    assert model.equilibrium(lam_star + 0.01) is None
    # and the base-point voltage is the closed-form value
    eq = model.equilibrium(0.0)
    assert eq.v[2] == pytest.approx(0.9521734316757773, abs=1e-7)


def test_solver_counts_newton_iterations():
    case, loads, _ = three_bus()
    model = GridModel(case, loads)
    before = model.newton_iters
    model.equilibrium(0.0)
    assert model.newton_iters > before


def test_free_function_wrappers_agree_with_methods():
    case, loads, _ = three_bus()
    model = GridModel(case, loads)
    state = model.flat_state()
    assert np.array_equal(algebraic_residuals(case, loads, state),
                          model.residuals(state))
    a = solve_algebraic(case, loads, state)
    b = model.solve(state)
    assert a is not None and np.allclose(a.v, b.v, atol=1e-12)


# --------------------------------------------------- jacobian FD checks

def _fd_jacobian(model, state, steady, h=1e-7):
    rows_p = model._nonslack()
    rows_q = model._pq_eff(dict(state.q_limited))
    n = len(rows_p) + len(rows_q)
    J = np.empty((n, n))
    for c in range(n):
        def shifted(s):
            theta = state.theta.copy()
            v = state.v.copy()
            if c < len(rows_p):
                theta[rows_p[c]] += s
            else:
                v[rows_q[c - len(rows_p)]] += s
            return replace(state, theta=theta, v=v)
        J[:, c] = (model.residuals(shifted(h), steady)
                   - model.residuals(shifted(-h), steady)) / (2.0 * h)
    return J


@pytest.mark.parametrize("steady", [False, True])
def test_jacobian_matches_finite_differences(steady):
    case, loads, _ = three_bus()
    model = GridModel(case, loads)
    eq = model.equilibrium(0.4)
    # displace the point so no special structure hides an error
    state = replace(eq, theta=eq.theta + [0.0, 0.01, -0.02],
                    v=eq.v * [1.0, 1.0, 0.99],
                    x=eq.x + [0.003, -0.001], eta=np.array([0.02]))
    J = model._jacobian(state, steady)
    assert np.allclose(J, _fd_jacobian(model, state, steady),
                       rtol=1e-5, atol=1e-6)


@pytest.mark.parametrize("name", ["two_bus", "three_bus", "fourteen_bus"])
def test_jacobian_fd_on_all_cases(name):
    model, _ = build_model(name)
    eq = model.equilibrium(0.1)
    state = replace(eq, eta=np.full(model.n_channels(), 0.01))
    state = model.solve(state)
    J = model._jacobian(state, steady=False)
    assert np.allclose(J, _fd_jacobian(model, state, False),
                       rtol=1e-5, atol=1e-6)


# ------------------------------------------------- reduced state matrix

def _reduced_fd(model, state, ou, h=1e-5):
    n_x, k = model.n_x, ou.k

    def phi(x, eta):
        sol = model.solve(replace(state, x=x, eta=eta), tol=1e-12)
        assert sol is not None
        return model.state_derivative(sol)

    A = np.empty((n_x, n_x + k))
    for c in range(n_x):
        d = np.zeros(n_x)
        d[c] = h
        A[:, c] = (phi(state.x + d, state.eta)
                   - phi(state.x - d, state.eta)) / (2.0 * h)
    for c in range(k):
        d = np.zeros(k)
        d[c] = h
        A[:, n_x + c] = (phi(state.x, state.eta + d)
                         - phi(state.x, state.eta - d)) / (2.0 * h)
    return A


def test_reduced_matrix_matches_finite_differences():
    case, loads, _ = three_bus()
    model = GridModel(case, loads)
    ou = OUParams(alpha=[1.0], sigma=0.1)
    eq = model.equilibrium(0.6)
    a_sys = model.reduced_matrix(eq, ou)
    assert a_sys.shape == (model.n_x + 1, model.n_x + 1)
    fd = _reduced_fd(model, eq, ou)
    assert np.allclose(a_sys[:model.n_x], fd, rtol=1e-4, atol=1e-6)


def test_reduced_matrix_contains_fluctuation_rates_exactly():
    case, loads, _ = three_bus()
    model = GridModel(case, loads)
    ou = OUParams(alpha=[1.3], sigma=0.1)
    eq = model.equilibrium(0.0)
    a_sys = model.reduced_matrix(eq, ou)
    assert a_sys[-1, -1] == -1.3
    assert np.all(a_sys[-1, :-1] == 0.0)
    assert -1.3 in np.linalg.eigvals(a_sys)
    assert np.array_equal(
        a_sys, reduced_state_matrix(case, loads, ou, eq))


def test_reduced_matrix_stable_then_degrading():
    case, loads, _ = three_bus()
    model = GridModel(case, loads)
    ou = OUParams(alpha=[1.0], sigma=0.1)
    lams = [0.0, 0.8, 1.4]
    slowest = []
    for lam in lams:
        eq = model.equilibrium(lam)
        eig = np.linalg.eigvals(model.reduced_matrix(eq, ou))
        assert np.all(eig.real < 0.0), f"unstable at lam={lam}"
        slowest.append(eig.real.max())
    # the leading eigenvalue creeps toward zero as loading approaches
    # the fold
    assert slowest[0] < slowest[1] < slowest[2] < 0.0


# -------------------------------------------------------- reactive limits

def test_fourteen_bus_q_limits_bind_deterministically():
    model, _ = build_model("fourteen_bus")
    idx = model.case.bus_index()
    eq0 = model.equilibrium(0.0)
    assert eq0 is not None and eq0.q_limited == ()
    # heavy loading pushes machines 2 and 3 to their ceilings
    eq = model.equilibrium(2.8)
    assert eq is not None
    limited = dict(eq.q_limited)
    assert limited == {idx[2]: 0.50, idx[3]: 0.40}
    # limited buses sag below their setpoints, free PV buses hold them
    assert eq.v[idx[2]] < 1.045
    assert eq.v[idx[3]] < 1.01
    assert eq.v[idx[6]] == pytest.approx(1.07, abs=1e-9)
    assert eq.v[idx[8]] == pytest.approx(1.09, abs=1e-9)
    # the assignment is recomputed from scratch, so warm and cold starts
    # land on the same configuration and the same point
    warm = model.solve(replace(model.equilibrium(2.7), lam=2.8),
                       steady=True)
    assert warm.q_limited == eq.q_limited
    assert np.allclose(warm.v, eq.v, atol=1e-8)


def test_reactive_output_within_limits_when_not_clamped():
    model, _ = build_model("fourteen_bus")
    eq = model.equilibrium(0.0)
    qg = model.generator_reactive(eq)
    for g in model.case.generators:
        assert g.qmin - 1e-9 <= qg[g.bus] <= g.qmax + 1e-9


# ------------------------------------------------------------ bookkeeping

def test_power_balance_closes():
    model, _ = build_model("fourteen_bus")
    eq = model.equilibrium(0.3)
    bal = model.power_balance(eq)
    assert bal["generation_p"] == pytest.approx(
        bal["load_p"] + bal["network_loss_p"], abs=1e-8)
    assert bal["network_loss_p"] > 0.0


def test_branch_flows_lossless_line():
    case, loads, _ = two_bus()
    model = GridModel(case, loads)
    eq = model.equilibrium(0.0)
    (flow,) = model.branch_flows(eq)
    assert flow["loss"].real == pytest.approx(0.0, abs=1e-12)
    assert flow["loss"].imag > 0.0   # series reactance absorbs vars
    # sending-end active power equals the delivered load on a g = 0 line
    assert flow["s_from"].real == pytest.approx(0.52, abs=1e-7)


def test_ramped_p0_counts_both_load_kinds():
    model, _ = build_model("three_bus")
    assert model.ramped_p0() == pytest.approx(0.4)
    model2, _ = build_model("fourteen_bus")
    assert model2.ramped_p0() == pytest.approx(0.40)
    case, loads, _ = two_bus()
    assert GridModel(case, loads).ramped_p0() == pytest.approx(0.5)
