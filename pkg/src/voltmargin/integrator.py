"""Time-domain simulation of the stochastic grid model.

Each step advances the explicit part (load recovery states by Euler, the
fluctuation channels by Euler-Maruyama), reconstructs the time as
t = (k+1) * dt and the loading factor from the ramp schedule, then re-solves
the algebraic network equations from a warm start.  After every successful
solve the collapse detector inspects the reduced state matrix; a failed
solve is the hard NO_SOLUTION termination, with the margin taken at the
last consistent loading factor.

Two engines produce a trajectory: a plain reference stepper built from the
public GridModel pieces, and a compiled fast path that runs the same scheme
on a fixed-size augmented unknown vector [theta; V] where voltage-holding
buses contribute pinning rows v_set - V = 0.  Reactive-limit switching then
toggles row content instead of matrix shape.  Both engines draw the same
random numbers in the same order from the supplied generator, so they agree
to floating-point roundoff; the fast path is the default.
"""

from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass, replace

import numpy as np
from numba import njit

from .detector import DetectionCause, DetectorConfig, MarginSample, \
    rcond_estimate
from .network import GridModel, GridState, NetworkCase, NoSolution, \
    RampSchedule, ramp_lambda
from .ou import OUParams, OUState, ou_initial_sample, ou_step

__all__ = [
    "Termination",
    "IntegratorConfig",
    "TrajectoryRecord",
    "sdae_step",
    "simulate_trajectory",
]


class Termination(enum.Enum):
    SNB_DETECTED = "snb_detected"
    NO_SOLUTION = "no_solution"
    HORIZON_REACHED = "horizon_reached"


@dataclass(frozen=True)
class IntegratorConfig:
    horizon: float
    dt: float = 0.05
    newton_tol: float = 1e-8
    max_newton_iter: int = 20
    record_stride: int = 1
    monitor_buses: tuple[int, ...] | None = None   # default: recovery-load buses

    def __post_init__(self) -> None:
        if self.horizon <= 0:
            raise ValueError("horizon must be positive")
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.newton_tol <= 0:
            raise ValueError("newton_tol must be positive")
        if self.max_newton_iter < 1:
            raise ValueError("max_newton_iter must be a positive integer")
        if self.record_stride < 1:
            raise ValueError("record_stride must be a positive integer")


@dataclass(frozen=True)
class TrajectoryRecord:
    """Recorded samples (time-ordered) plus how the run ended.

    margin is present exactly when the run terminated by collapse detection;
    a horizon-reached run is censored and carries no margin.
    """

    t: np.ndarray
    lam: np.ndarray
    v: np.ndarray          # (n_samples, n_monitored)
    x: np.ndarray
    eta: np.ndarray
    rcond: np.ndarray      # NaN where the detector did not run
    monitor_buses: tuple[int, ...]
    termination: Termination
    margin: MarginSample | None
    newton_iters: int

    @property
    def margin_s(self) -> float | None:
        return None if self.margin is None else self.margin.s


def sdae_step(state: GridState, case: NetworkCase, loads, ou: OUParams,
              cfg: IntegratorConfig, rng: np.random.Generator,
              schedule: RampSchedule | None = None,
              step_index: int | None = None) -> GridState | None:
    """One explicit step of the combined system; None on algebraic failure.

    Without a schedule the loading factor is held.  When step_index is given
    the new time is reconstructed as (step_index + 1) * dt, which keeps long
    ramps free of accumulated rounding; otherwise t advances by dt.
    """
    model = GridModel(case, tuple(loads))
    return _reference_step(model, state, ou, schedule, cfg, rng, step_index)


def _reference_step(model: GridModel, state: GridState, ou: OUParams,
                    schedule: RampSchedule | None, cfg: IntegratorConfig,
                    rng: np.random.Generator,
                    step_index: int | None) -> GridState | None:
    x_new = state.x + cfg.dt * model.state_derivative(state)
    eta_new = ou_step(OUState(state.eta, state.t), ou, cfg.dt, rng).eta
    if step_index is not None:
        t_new = (step_index + 1) * cfg.dt
    else:
        t_new = state.t + cfg.dt
    lam_new = state.lam if schedule is None else ramp_lambda(schedule, t_new)
    cand = replace(state, t=t_new, lam=lam_new, x=x_new, eta=eta_new)
    return model.solve(cand, cfg.newton_tol, cfg.max_newton_iter)


# ----------------------------------------------------------- fast kernel

_STATUS_HORIZON = 0
_STATUS_DETECTED = 1
_STATUS_NO_SOLUTION = 2
_STATUS_INIT_DETECTED = 3


@njit(cache=True)  # pragma: no cover - jit
def _aug_residual(ybus, slack, is_held, pg, qg, v_hold,
                  pd, qd, theta, v, r):
    n = ybus.shape[0]
    vc = np.empty(n, dtype=np.complex128)
    for i in range(n):
        vc[i] = v[i] * (math.cos(theta[i]) + 1j * math.sin(theta[i]))
    ibus = ybus @ vc
    m = 0
    for i in range(n):
        if i == slack:
            continue
        s = vc[i] * np.conj(ibus[i])
        r[m] = pg[i] - pd[i] - s.real
        m += 1
    for i in range(n):
        if i == slack:
            continue
        if is_held[i]:
            r[m] = v_hold[i] - v[i]
        else:
            s = vc[i] * np.conj(ibus[i])
            r[m] = qg[i] - qd[i] - s.imag
        m += 1


@njit(cache=True)  # pragma: no cover - jit
def _aug_jacobian(ybus, slack, is_held, dpd_dv, dqd_dv, theta, v, J):
    n = ybus.shape[0]
    vc = np.empty(n, dtype=np.complex128)
    en = np.empty(n, dtype=np.complex128)
    for i in range(n):
        en[i] = math.cos(theta[i]) + 1j * math.sin(theta[i])
        vc[i] = v[i] * en[i]
    ibus = ybus @ vc
    nn = n - 1
    J[:, :] = 0.0
    # column maps: position of bus j among non-slack
    col = -1
    for j in range(n):
        if j == slack:
            continue
        col += 1
        row = -1
        for i in range(n):
            if i == slack:
                continue
            row += 1
            if i == j:
                dth = 1j * vc[i] * np.conj(ibus[i] - ybus[i, i] * vc[i])
                dvm = vc[i] * np.conj(ybus[i, i] * en[i]) + \
                    np.conj(ibus[i]) * en[i]
            else:
                dth = 1j * vc[i] * np.conj(-ybus[i, j] * vc[j])
                dvm = vc[i] * np.conj(ybus[i, j] * en[j])
            J[row, col] = -dth.real
            J[row, nn + col] = -dvm.real
            if not is_held[i]:
                J[nn + row, col] = -dth.imag
                J[nn + row, nn + col] = -dvm.imag
        # load voltage sensitivities sit on the diagonal V columns
        j_row = 0
        for i in range(n):
            if i == slack:
                continue
            if i == j:
                J[j_row, nn + col] -= dpd_dv[i]
                if not is_held[i]:
                    J[nn + j_row, nn + col] -= dqd_dv[i]
            j_row += 1
    # voltage pinning rows
    row = -1
    for i in range(n):
        if i == slack:
            continue
        row += 1
        if is_held[i]:
            J[nn + row, nn + row] = -1.0


@njit(cache=True)  # pragma: no cover - jit
def _bus_demand_fast(n, lam, pd0, qd0, ramp_mask,
                     ld_bus, ld_p0, ld_q0, ld_tp, ld_tq,
                     ld_at, ld_bt, ld_v0, ld_chan, ld_ramped,
                     v, x, eta, pd, qd, dpd_dv, dqd_dv):
    for i in range(n):
        fac = 1.0 + lam if ramp_mask[i] else 1.0
        pd[i] = pd0[i] * fac
        qd[i] = qd0[i] * fac
        dpd_dv[i] = 0.0
        dqd_dv[i] = 0.0
    for j in range(ld_bus.shape[0]):
        i = ld_bus[j]
        e = eta[ld_chan[j]] if ld_chan[j] >= 0 else 0.0
        lam_eff = lam if ld_ramped[j] else 0.0
        pn = ld_p0[j] * (1.0 + lam_eff) + e
        qn = ld_q0[j] * (1.0 + lam_eff) + e
        r = v[i] / ld_v0[j]
        pd[i] += x[2 * j] / ld_tp[j] + pn * r ** ld_at[j]
        qd[i] += x[2 * j + 1] / ld_tq[j] + qn * r ** ld_bt[j]
        dpd_dv[i] += pn * ld_at[j] * r ** (ld_at[j] - 1.0) / ld_v0[j]
        dqd_dv[i] += qn * ld_bt[j] * r ** (ld_bt[j] - 1.0) / ld_v0[j]


@njit(cache=True)  # pragma: no cover - jit
def _solve_fast(ybus, slack, is_pv, v_set, qmin, qmax, pg_bus,
                pd0, qd0, ramp_mask,
                ld_bus, ld_p0, ld_q0, ld_tp, ld_tq, ld_at, ld_bt,
                ld_v0, ld_chan, ld_ramped,
                lam, theta, v, x, eta, tol, max_iter,
                is_held, qg, iters_out):
    """Newton with reactive-limit reassignment; returns True on success.

    is_held / qg are work arrays describing the final assignment.  theta
    and v are updated in place (warm start in, solution out).
    """
    n = ybus.shape[0]
    nn = n - 1
    pd = np.empty(n)
    qd = np.empty(n)
    dpd_dv = np.empty(n)
    dqd_dv = np.empty(n)
    r = np.empty(2 * nn)
    J = np.empty((2 * nn, 2 * nn))
    for i in range(n):
        is_held[i] = is_pv[i]
        qg[i] = 0.0
    for _round in range(n + 1):
        # pin held voltages to their setpoints before iterating
        for i in range(n):
            if is_held[i] and i != slack:
                v[i] = v_set[i]
        converged = False
        for _it in range(max_iter):
            _bus_demand_fast(n, lam, pd0, qd0, ramp_mask,
                             ld_bus, ld_p0, ld_q0, ld_tp, ld_tq,
                             ld_at, ld_bt, ld_v0, ld_chan, ld_ramped,
                             v, x, eta, pd, qd, dpd_dv, dqd_dv)
            _aug_residual(ybus, slack, is_held, pg_bus, qg, v_set,
                          pd, qd, theta, v, r)
            iters_out[0] += 1
            worst = 0.0
            for m in range(2 * nn):
                a = abs(r[m])
                if a > worst:
                    worst = a
                if not np.isfinite(r[m]):
                    return False
            if worst < tol:
                converged = True
                break
            _aug_jacobian(ybus, slack, is_held, dpd_dv, dqd_dv, theta, v, J)
            try:
                du = np.linalg.solve(J, -r)
            except Exception:
                return False
            big = 0.0
            for m in range(2 * nn):
                a = abs(du[m])
                if a > big:
                    big = a
                if not np.isfinite(du[m]):
                    return False
            if big > 1e6:
                return False
            m = 0
            for i in range(n):
                if i == slack:
                    continue
                theta[i] += du[m]
                v[i] += du[nn + m]
                if v[i] <= 0.0:
                    return False
                m += 1
        if not converged:
            return False
        # reactive check: clamp fresh violators, never release in this solve
        changed = False
        vc = np.empty(n, dtype=np.complex128)
        for i in range(n):
            vc[i] = v[i] * (math.cos(theta[i]) + 1j * math.sin(theta[i]))
        ibus = ybus @ vc
        _bus_demand_fast(n, lam, pd0, qd0, ramp_mask,
                         ld_bus, ld_p0, ld_q0, ld_tp, ld_tq,
                         ld_at, ld_bt, ld_v0, ld_chan, ld_ramped,
                         v, x, eta, pd, qd, dpd_dv, dqd_dv)
        for i in range(n):
            if is_pv[i] and is_held[i]:
                q_need = (vc[i] * np.conj(ibus[i])).imag + qd[i]
                if q_need > qmax[i]:
                    is_held[i] = False
                    qg[i] = qmax[i]
                    changed = True
                elif q_need < qmin[i]:
                    is_held[i] = False
                    qg[i] = qmin[i]
                    changed = True
        if not changed:
            return True
    return True


@njit(cache=True)  # pragma: no cover - jit
def _asys_rcond(ybus, slack, is_held,
                pd0, qd0, ramp_mask,
                ld_bus, ld_p0, ld_q0, ld_tp, ld_tq, ld_as, ld_at,
                ld_bs, ld_bt, ld_v0, ld_chan, ld_ramped,
                alpha, lam, theta, v, x, eta):
    """rcond (1-norm) of the reduced state matrix at a solved point."""
    n = ybus.shape[0]
    nn = n - 1
    n_loads = ld_bus.shape[0]
    n_x = 2 * n_loads
    k = alpha.shape[0]
    pd = np.empty(n)
    qd = np.empty(n)
    dpd_dv = np.empty(n)
    dqd_dv = np.empty(n)
    _bus_demand_fast(n, lam, pd0, qd0, ramp_mask,
                     ld_bus, ld_p0, ld_q0, ld_tp, ld_tq,
                     ld_at, ld_bt, ld_v0, ld_chan, ld_ramped,
                     v, x, eta, pd, qd, dpd_dv, dqd_dv)
    h2_z = np.empty((2 * nn, 2 * nn))
    _aug_jacobian(ybus, slack, is_held, dpd_dv, dqd_dv, theta, v, h2_z)
    # position of each bus among the non-slack ordering
    pos = np.full(n, -1, dtype=np.int64)
    m = 0
    for i in range(n):
        if i != slack:
            pos[i] = m
            m += 1
    rhs = np.zeros((2 * nn, n_x + k))
    h1_z = np.zeros((n_x, 2 * nn))
    h1_xk = np.zeros((n_x, n_x + k))
    for j in range(n_loads):
        i = ld_bus[j]
        e = eta[ld_chan[j]] if ld_chan[j] >= 0 else 0.0
        lam_eff = lam if ld_ramped[j] else 0.0
        pn = ld_p0[j] * (1.0 + lam_eff) + e
        qn = ld_q0[j] * (1.0 + lam_eff) + e
        r = v[i] / ld_v0[j]
        h1_xk[2 * j, 2 * j] = -1.0 / ld_tp[j]
        h1_xk[2 * j + 1, 2 * j + 1] = -1.0 / ld_tq[j]
        dps = pn * ld_as[j] * r ** (ld_as[j] - 1.0) / ld_v0[j]
        dpt = pn * ld_at[j] * r ** (ld_at[j] - 1.0) / ld_v0[j]
        dqs = qn * ld_bs[j] * r ** (ld_bs[j] - 1.0) / ld_v0[j]
        dqt = qn * ld_bt[j] * r ** (ld_bt[j] - 1.0) / ld_v0[j]
        if pos[i] >= 0:
            h1_z[2 * j, nn + pos[i]] = dps - dpt
            h1_z[2 * j + 1, nn + pos[i]] = dqs - dqt
            rhs[pos[i], 2 * j] = -1.0 / ld_tp[j]
            if not is_held[i]:
                rhs[nn + pos[i], 2 * j + 1] = -1.0 / ld_tq[j]
        if ld_chan[j] >= 0:
            c = ld_chan[j]
            h1_xk[2 * j, n_x + c] = r ** ld_as[j] - r ** ld_at[j]
            h1_xk[2 * j + 1, n_x + c] = r ** ld_bs[j] - r ** ld_bt[j]
            if pos[i] >= 0:
                rhs[pos[i], n_x + c] += -(r ** ld_at[j])
                if not is_held[i]:
                    rhs[nn + pos[i], n_x + c] += -(r ** ld_bt[j])
    try:
        elim = np.linalg.solve(h2_z, rhs)
    except Exception:
        return -1.0
    a = np.empty((n_x + k, n_x + k))
    top = h1_xk - h1_z @ elim
    for i in range(n_x):
        for j2 in range(n_x + k):
            a[i, j2] = top[i, j2]
    for c in range(k):
        for j2 in range(n_x + k):
            a[n_x + c, j2] = 0.0
        a[n_x + c, n_x + c] = -alpha[c]
    norm = 0.0
    for j2 in range(n_x + k):
        col = 0.0
        for i in range(n_x + k):
            col += abs(a[i, j2])
        if col > norm:
            norm = col
    if norm == 0.0 or not np.isfinite(norm):
        return 0.0
    try:
        inv = np.linalg.inv(a)
    except Exception:
        return 0.0
    norm_i = 0.0
    for j2 in range(n_x + k):
        col = 0.0
        for i in range(n_x + k):
            col += abs(inv[i, j2])
        if col > norm_i:
            norm_i = col
    if not np.isfinite(norm_i):
        return 0.0
    return 1.0 / (norm * norm_i)


@njit(cache=True)  # pragma: no cover - jit
def _fast_sim(ybus, slack, is_pv, v_set, qmin, qmax, pg_bus,
              pd0, qd0, ramp_mask,
              ld_bus, ld_p0, ld_q0, ld_tp, ld_tq, ld_as, ld_at,
              ld_bs, ld_bt, ld_v0, ld_chan, ld_ramped,
              alpha, noise_gain, use_noise, zmat,
              delta_lam, interval, lam_max,
              dt, n_steps, tol, max_iter,
              detect, rcond_thresh, check_every,
              init_held, init_qg,
              theta, v, x, eta, mon, stride,
              rec_t, rec_lam, rec_v, rec_x, rec_eta, rec_rcond):
    n = ybus.shape[0]
    n_loads = ld_bus.shape[0]
    k = alpha.shape[0]
    is_held = init_held.copy()
    qg = init_qg.copy()
    iters = np.zeros(1, dtype=np.int64)
    lam = min(delta_lam * math.floor(0.0 / interval), lam_max)

    # initial sample and initial detector check
    rc0 = np.nan
    if detect:
        rc0 = _asys_rcond(ybus, slack, is_held, pd0, qd0, ramp_mask,
                          ld_bus, ld_p0, ld_q0, ld_tp, ld_tq, ld_as, ld_at,
                          ld_bs, ld_bt, ld_v0, ld_chan, ld_ramped,
                          alpha, lam, theta, v, x, eta)
    rec_t[0] = 0.0
    rec_lam[0] = lam
    for m in range(mon.shape[0]):
        rec_v[0, m] = v[mon[m]]
    for m in range(2 * n_loads):
        rec_x[0, m] = x[m]
    for m in range(k):
        rec_eta[0, m] = eta[m]
    rec_rcond[0] = rc0 if rc0 >= 0.0 else np.nan
    n_rec = 1
    if detect and rc0 < 0.0:
        return _STATUS_NO_SOLUTION, n_rec, lam, 0.0, iters[0]
    if detect and rc0 < rcond_thresh:
        return _STATUS_INIT_DETECTED, n_rec, lam, 0.0, iters[0]

    for step in range(n_steps):
        # explicit part at the current algebraic point
        for j in range(n_loads):
            i = ld_bus[j]
            e = eta[ld_chan[j]] if ld_chan[j] >= 0 else 0.0
            lam_eff = lam if ld_ramped[j] else 0.0
            pn = ld_p0[j] * (1.0 + lam_eff) + e
            qn = ld_q0[j] * (1.0 + lam_eff) + e
            r = v[i] / ld_v0[j]
            dxp = -x[2 * j] / ld_tp[j] + pn * (r ** ld_as[j] - r ** ld_at[j])
            dxq = -x[2 * j + 1] / ld_tq[j] + qn * (r ** ld_bs[j] - r ** ld_bt[j])
            x[2 * j] += dt * dxp
            x[2 * j + 1] += dt * dxq
        for c in range(k):
            eta[c] = eta[c] - alpha[c] * eta[c] * dt
        if use_noise:
            for c in range(k):
                eta[c] = eta[c] + noise_gain[c] * zmat[step, c]
        t_new = (step + 1) * dt
        lam_prev = lam
        lam = min(delta_lam * math.floor(t_new / interval), lam_max)
        ok = _solve_fast(ybus, slack, is_pv, v_set, qmin, qmax, pg_bus,
                         pd0, qd0, ramp_mask,
                         ld_bus, ld_p0, ld_q0, ld_tp, ld_tq, ld_at, ld_bt,
                         ld_v0, ld_chan, ld_ramped,
                         lam, theta, v, x, eta, tol, max_iter,
                         is_held, qg, iters)
        if not ok:
            return _STATUS_NO_SOLUTION, n_rec, lam_prev, t_new, iters[0]
        rc = np.nan
        detected = False
        if detect and (step + 1) % check_every == 0:
            rc = _asys_rcond(ybus, slack, is_held, pd0, qd0, ramp_mask,
                             ld_bus, ld_p0, ld_q0, ld_tp, ld_tq, ld_as, ld_at,
                             ld_bs, ld_bt, ld_v0, ld_chan, ld_ramped,
                             alpha, lam, theta, v, x, eta)
            if rc < 0.0:
                return _STATUS_NO_SOLUTION, n_rec, lam_prev, t_new, iters[0]
            detected = rc < rcond_thresh
        if (step + 1) % stride == 0 or detected or step + 1 == n_steps:
            rec_t[n_rec] = t_new
            rec_lam[n_rec] = lam
            for m in range(mon.shape[0]):
                rec_v[n_rec, m] = v[mon[m]]
            for m in range(2 * n_loads):
                rec_x[n_rec, m] = x[m]
            for m in range(k):
                rec_eta[n_rec, m] = eta[m]
            rec_rcond[n_rec] = rc
            n_rec += 1
        if detected:
            return _STATUS_DETECTED, n_rec, lam, t_new, iters[0]
    return _STATUS_HORIZON, n_rec, lam, n_steps * dt, iters[0]


# ------------------------------------------------------------ public API


def _kernel_inputs(model: GridModel, ou: OUParams):
    case = model.case
    n = model.n
    is_pv = np.zeros(n, dtype=bool)
    v_set = np.array([b.v0 for b in case.buses], dtype=float)
    qmin = np.full(n, -np.inf)
    qmax = np.full(n, np.inf)
    pg = np.zeros(n)
    for i, g in model.gen_at.items():
        if i != model.slack:
            pg[i] = g.p
        if i in model.pv_buses:
            is_pv[i] = True
            v_set[i] = g.v_set
            qmin[i] = g.qmin
            qmax[i] = g.qmax
    pd0 = np.array([b.pd for b in case.buses], dtype=float)
    qd0 = np.array([b.qd for b in case.buses], dtype=float)
    ramp_mask = np.array([b.ramp for b in case.buses], dtype=bool)
    lds = model.loads
    ld = dict(
        ld_bus=model.load_bus.astype(np.int64),
        ld_p0=np.array([l.p0 for l in lds]),
        ld_q0=np.array([l.q0 for l in lds]),
        ld_tp=np.array([l.tp for l in lds]),
        ld_tq=np.array([l.tq for l in lds]),
        ld_as=np.array([l.alpha_s for l in lds]),
        ld_at=np.array([l.alpha_t for l in lds]),
        ld_bs=np.array([l.beta_s for l in lds]),
        ld_bt=np.array([l.beta_t for l in lds]),
        ld_v0=np.array([l.v0 for l in lds]),
        ld_chan=np.array(
            [-1 if l.noise_channel is None else l.noise_channel
             for l in lds], dtype=np.int64),
        ld_ramped=np.array([l.ramped for l in lds], dtype=bool),
    )
    return dict(ybus=model.ybus, slack=model.slack, is_pv=is_pv, v_set=v_set,
                qmin=qmin, qmax=qmax, pg_bus=pg, pd0=pd0, qd0=qd0,
                ramp_mask=ramp_mask, **ld)


def _held_to_q_limited(model: GridModel, is_held: np.ndarray,
                       qg: np.ndarray) -> tuple[tuple[int, float], ...]:
    out = []
    for i in model.pv_buses:
        if not is_held[i]:
            out.append((i, float(qg[i])))
    return tuple(sorted(out))


def simulate_trajectory(case: NetworkCase, loads, ou: OUParams,
                        schedule: RampSchedule, cfg: IntegratorConfig,
                        rng: np.random.Generator,
                        detector: DetectorConfig | None = DetectorConfig(),
                        engine: str = "fast") -> TrajectoryRecord:
    """Simulate one ramped trajectory from the zero-fluctuation equilibrium.

    The initial recovery states come from the equilibrium at lam(0); the
    fluctuation channels start from their stationary law.  Passing
    detector=None disables the reduced-matrix check, so only a hard
    NO_SOLUTION terminates before the horizon.
    """
    if engine not in ("fast", "reference"):
        raise ValueError("engine must be 'fast' or 'reference'")
    model = GridModel(case, tuple(loads))
    if ou.k < model.n_channels():
        raise ValueError("fluctuation channels referenced by loads exceed "
                         "the supplied OUParams dimension")
    t_min = min([min(l.tp, l.tq) for l in model.loads], default=np.inf)
    if cfg.dt > t_min / 10.0:
        warnings.warn("dt exceeds a tenth of the fastest load recovery time "
                      "constant; the explicit scheme may be inaccurate",
                      stacklevel=2)
    lam0 = ramp_lambda(schedule, 0.0)
    eq = model.equilibrium(lam=lam0, n_channels=ou.k)
    if eq is None:
        raise ValueError("no equilibrium at the initial loading factor")
    eta0 = ou_initial_sample(ou, rng).eta
    state0 = model.solve(replace(eq, eta=eta0), cfg.newton_tol,
                         cfg.max_newton_iter)
    mon = cfg.monitor_buses
    if mon is None:
        mon = tuple(dict.fromkeys(l.bus for l in model.loads))
    mon_idx = np.array([model.idx[b] for b in mon], dtype=np.int64)
    n_steps = int(math.floor(cfg.horizon / cfg.dt + 1e-9))

    if state0 is None:
        # the stationary fluctuation sample already breaks solvability
        margin = MarginSample(s=0.0, lam=lam0, t=0.0,
                              cause=DetectionCause.NO_SOLUTION)
        empty = np.empty((0,))
        return TrajectoryRecord(
            t=empty, lam=empty, v=np.empty((0, len(mon))),
            x=np.empty((0, model.n_x)), eta=np.empty((0, ou.k)),
            rcond=empty, monitor_buses=tuple(mon),
            termination=Termination.NO_SOLUTION, margin=margin,
            newton_iters=0)

    if engine == "fast":
        return _run_fast(model, state0, ou, schedule, cfg, detector, rng,
                         mon, mon_idx, n_steps)
    return _run_reference(model, state0, ou, schedule, cfg, detector, rng,
                          mon, mon_idx, n_steps)


def _make_margin(model: GridModel, lam: float, t: float,
                 cause: DetectionCause) -> MarginSample:
    s = lam * model.ramped_p0() * model.case.base_mva
    return MarginSample(s=s, lam=lam, t=t, cause=cause)


def _run_fast(model, state0, ou, schedule, cfg, detector, rng,
              mon, mon_idx, n_steps) -> TrajectoryRecord:
    kw = _kernel_inputs(model, ou)
    k = ou.k
    use_noise = ou.sigma > 0.0
    if use_noise:
        zmat = rng.standard_normal((n_steps, k))
        noise_gain = ou.sigma * ou.beta * np.sqrt(cfg.dt)
    else:
        zmat = np.zeros((0, k))
        noise_gain = np.zeros(k)
    n_rec_max = n_steps // cfg.record_stride + 3
    rec_t = np.empty(n_rec_max)
    rec_lam = np.empty(n_rec_max)
    rec_v = np.empty((n_rec_max, len(mon_idx)))
    rec_x = np.empty((n_rec_max, model.n_x))
    rec_eta = np.empty((n_rec_max, k))
    rec_rcond = np.empty(n_rec_max)
    theta = state0.theta.copy()
    v = state0.v.copy()
    x = state0.x.copy()
    eta = state0.eta.copy()
    init_held = kw["is_pv"].copy()
    init_qg = np.zeros(model.n)
    for i, q in state0.q_limited:
        init_held[i] = False
        init_qg[i] = q
    detect = detector is not None
    thresh = detector.rcond_threshold if detect else 0.0
    every = detector.check_every if detect else 1
    status, n_rec, lam_end, t_end, iters = _fast_sim(
        kw["ybus"], kw["slack"], kw["is_pv"], kw["v_set"], kw["qmin"],
        kw["qmax"], kw["pg_bus"], kw["pd0"], kw["qd0"], kw["ramp_mask"],
        kw["ld_bus"], kw["ld_p0"], kw["ld_q0"], kw["ld_tp"], kw["ld_tq"],
        kw["ld_as"], kw["ld_at"], kw["ld_bs"], kw["ld_bt"], kw["ld_v0"],
        kw["ld_chan"], kw["ld_ramped"],
        np.asarray(ou.alpha, dtype=float), noise_gain, use_noise, zmat,
        schedule.delta_lambda, schedule.interval, schedule.lambda_max,
        cfg.dt, n_steps, cfg.newton_tol, cfg.max_newton_iter,
        detect, thresh, every, init_held, init_qg,
        theta, v, x, eta, mon_idx, cfg.record_stride,
        rec_t, rec_lam, rec_v, rec_x, rec_eta, rec_rcond)
    if status == _STATUS_HORIZON:
        termination = Termination.HORIZON_REACHED
        margin = None
    elif status == _STATUS_NO_SOLUTION:
        termination = Termination.NO_SOLUTION
        margin = _make_margin(model, lam_end, t_end,
                              DetectionCause.NO_SOLUTION)
    else:
        termination = Termination.SNB_DETECTED
        margin = _make_margin(model, lam_end, t_end,
                              DetectionCause.RCOND_THRESHOLD)
    return TrajectoryRecord(
        t=rec_t[:n_rec].copy(), lam=rec_lam[:n_rec].copy(),
        v=rec_v[:n_rec].copy(), x=rec_x[:n_rec].copy(),
        eta=rec_eta[:n_rec].copy(), rcond=rec_rcond[:n_rec].copy(),
        monitor_buses=tuple(mon), termination=termination, margin=margin,
        newton_iters=int(iters))


def _run_reference(model, state0, ou, schedule, cfg, detector, rng,
                   mon, mon_idx, n_steps) -> TrajectoryRecord:
    rows = {"t": [], "lam": [], "v": [], "x": [], "eta": [], "rcond": []}

    def push(state, rc):
        rows["t"].append(state.t)
        rows["lam"].append(state.lam)
        rows["v"].append(state.v[mon_idx].copy())
        rows["x"].append(state.x.copy())
        rows["eta"].append(state.eta.copy())
        rows["rcond"].append(rc)

    def rcond_at(state):
        try:
            return rcond_estimate(model.reduced_matrix(state, ou))
        except NoSolution:
            return -1.0

    def build(termination, margin):
        return TrajectoryRecord(
            t=np.array(rows["t"]), lam=np.array(rows["lam"]),
            v=np.array(rows["v"]).reshape(len(rows["t"]), len(mon_idx)),
            x=np.array(rows["x"]).reshape(len(rows["t"]), model.n_x),
            eta=np.array(rows["eta"]).reshape(len(rows["t"]), ou.k),
            rcond=np.array(rows["rcond"]), monitor_buses=tuple(mon),
            termination=termination, margin=margin,
            newton_iters=model.newton_iters)

    model.newton_iters = 0
    state = state0
    rc = np.nan
    if detector is not None:
        rc = rcond_at(state)
        if rc < 0.0:
            push(state, np.nan)
            return build(Termination.NO_SOLUTION,
                         _make_margin(model, state.lam, 0.0,
                                      DetectionCause.NO_SOLUTION))
    push(state, rc)
    if detector is not None and rc < detector.rcond_threshold:
        return build(Termination.SNB_DETECTED,
                     _make_margin(model, state.lam, 0.0,
                                  DetectionCause.RCOND_THRESHOLD))
    for step in range(n_steps):
        new = _reference_step(model, state, ou, schedule, cfg, rng, step)
        if new is None:
            t_new = (step + 1) * cfg.dt
            return build(Termination.NO_SOLUTION,
                         _make_margin(model, state.lam, t_new,
                                      DetectionCause.NO_SOLUTION))
        rc = np.nan
        detected = False
        if detector is not None and (step + 1) % detector.check_every == 0:
            rc = rcond_at(new)
            if rc < 0.0:
                return build(Termination.NO_SOLUTION,
                             _make_margin(model, state.lam, new.t,
                                          DetectionCause.NO_SOLUTION))
            detected = rc < detector.rcond_threshold
        if (step + 1) % cfg.record_stride == 0 or detected \
                or step + 1 == n_steps:
            push(new, rc)
        state = new
        if detected:
            return build(Termination.SNB_DETECTED,
                         _make_margin(model, new.lam, new.t,
                                      DetectionCause.RCOND_THRESHOLD))
    return build(Termination.HORIZON_REACHED, None)
