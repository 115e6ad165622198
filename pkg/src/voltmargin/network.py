"""Static grid description and the algebraic power-flow layer.

The model couples a transmission network (per-unit, polar power flow) with
exponential-recovery loads

    p = x_p / T_p + p_t,        dx_p/dt = -x_p / T_p + p_s - p_t,
    p_s = (p0 (1+lam) + eta) (V/V0)**alpha_s,
    p_t = (p0 (1+lam) + eta) (V/V0)**alpha_t,

(and the analogous q / x_q / beta exponents), where lam is the slow loading
factor applied to loads flagged as ramped and eta an additive stochastic
fluctuation of the nominal power.  Steady state consumes exactly
p_s: the transient voltage exponent alpha_t governs the instantaneous
response, the recovery state x_p restores consumption with time constant T_p.

Generators are quasi-static PV buses holding voltage magnitude within
reactive limits; a generator at a limit is clamped and the bus treated as PQ
for that solve (recomputed from scratch every solve, so the assignment is a
deterministic function of the requested state).

The reduced state matrix used for bifurcation detection is

    A_sys = d h1/d x - (d h1/d z)(d h2/d z)^{-1} (d h2/d x)

for differential residuals h1 (load recovery states) and algebraic residuals
h2 (power mismatches), augmented with the fluctuation block diag(-alpha) and
its cross-couplings, so its spectrum contains the fluctuation eigenvalues
-alpha_i exactly and loses invertibility where the reduced dynamics meets a
saddle-node.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .ou import OUParams

__all__ = [
    "BusKind",
    "Bus",
    "Branch",
    "Generator",
    "LoadDynParams",
    "NetworkCase",
    "RampSchedule",
    "GridState",
    "GridModel",
    "NoSolution",
    "build_ybus",
    "load_consumption",
    "load_state_derivative",
    "algebraic_residuals",
    "solve_algebraic",
    "reduced_state_matrix",
    "ramp_lambda",
]


class BusKind(enum.Enum):
    SLACK = "slack"
    PV = "pv"
    PQ = "pq"


@dataclass(frozen=True)
class Bus:
    id: int
    kind: BusKind
    v0: float = 1.0          # voltage setpoint (slack/PV) or initial guess
    base_kv: float = 100.0
    pd: float = 0.0          # static constant-power load, per unit
    qd: float = 0.0
    ramp: bool = False       # static load scales with (1 + lambda)
    shunt_g: float = 0.0     # bus shunt admittance, per unit
    shunt_b: float = 0.0


@dataclass(frozen=True)
class Branch:
    from_bus: int
    to_bus: int
    g: float                 # series admittance, real part
    b: float                 # series admittance, imaginary part (<0 inductive)
    b_shunt: float = 0.0     # total line charging susceptance
    tap: float = 1.0         # off-nominal turns ratio on the from side


@dataclass(frozen=True)
class Generator:
    bus: int
    p: float = 0.0           # active setpoint, per unit (ignored at slack)
    v_set: float = 1.0
    qmin: float = -99.0
    qmax: float = 99.0


@dataclass(frozen=True)
class LoadDynParams:
    """Exponential-recovery load attached to one bus."""

    bus: int
    p0: float
    q0: float
    tp: float = 1.0
    tq: float = 1.0
    alpha_s: float = 0.0
    alpha_t: float = 2.0
    beta_s: float = 0.0
    beta_t: float = 2.0
    v0: float = 1.0
    noise_channel: int | None = None
    ramped: bool = False

    def __post_init__(self) -> None:
        if self.tp <= 0 or self.tq <= 0:
            raise ValueError(f"load at bus {self.bus}: Tp and Tq must be positive")
        if self.v0 <= 0:
            raise ValueError(f"load at bus {self.bus}: V0 must be positive")


@dataclass(frozen=True)
class NetworkCase:
    name: str
    base_mva: float
    buses: tuple[Bus, ...]
    branches: tuple[Branch, ...]
    generators: tuple[Generator, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "buses", tuple(self.buses))
        object.__setattr__(self, "branches", tuple(self.branches))
        object.__setattr__(self, "generators", tuple(self.generators))
        validate_case(self)

    def bus_index(self) -> dict[int, int]:
        return {b.id: i for i, b in enumerate(self.buses)}


def validate_case(case: NetworkCase) -> None:
    if case.base_mva <= 0:
        raise ValueError("base_mva must be positive")
    ids = [b.id for b in case.buses]
    if len(ids) != len(set(ids)):
        raise ValueError("duplicate bus ids")
    id_set = set(ids)
    slacks = [b.id for b in case.buses if b.kind is BusKind.SLACK]
    if len(slacks) != 1:
        raise ValueError(f"exactly one slack bus required, found {len(slacks)}")
    for br in case.branches:
        if br.from_bus not in id_set or br.to_bus not in id_set:
            raise ValueError(f"branch {br.from_bus}-{br.to_bus} references "
                             "an unknown bus")
        if br.tap <= 0:
            raise ValueError(f"branch {br.from_bus}-{br.to_bus}: tap must be "
                             "positive")
    gen_buses = [g.bus for g in case.generators]
    if len(gen_buses) != len(set(gen_buses)):
        raise ValueError("at most one generator per bus")
    kinds = {b.id: b.kind for b in case.buses}
    for g in case.generators:
        if g.bus not in id_set:
            raise ValueError(f"generator at unknown bus {g.bus}")
        if g.qmin > g.qmax:
            raise ValueError(f"generator at bus {g.bus}: qmin > qmax")
        if kinds[g.bus] is BusKind.PQ:
            raise ValueError(f"generator at bus {g.bus}: PQ bus cannot hold one")
    for b in case.buses:
        if b.kind is BusKind.PV and b.id not in gen_buses:
            raise ValueError(f"PV bus {b.id} has no generator")
    # connectivity from the slack over branch edges
    adj: dict[int, set[int]] = {i: set() for i in id_set}
    for br in case.branches:
        adj[br.from_bus].add(br.to_bus)
        adj[br.to_bus].add(br.from_bus)
    seen = {slacks[0]}
    stack = [slacks[0]]
    while stack:
        for nb in adj[stack.pop()]:
            if nb not in seen:
                seen.add(nb)
                stack.append(nb)
    if seen != id_set:
        missing = sorted(id_set - seen)
        raise ValueError(f"buses not connected to the slack: {missing}")


@dataclass(frozen=True)
class RampSchedule:
    """Stepwise loading ramp: lambda(t) = delta_lambda * floor(t / interval),
    capped at lambda_max."""

    delta_lambda: float
    interval: float
    lambda_max: float

    def __post_init__(self) -> None:
        if self.delta_lambda <= 0 or self.interval <= 0 or self.lambda_max <= 0:
            raise ValueError("ramp parameters must be positive")

    def speed_mw_per_s(self, p0_mw: float) -> float:
        """Equivalent continuous ramp speed for a ramped nominal power p0_mw."""
        return self.delta_lambda * p0_mw / self.interval

    @staticmethod
    def from_speed(speed_mw_per_s: float, p0_mw: float,
                   delta_lambda: float = 0.02,
                   lambda_max: float = 3.0) -> "RampSchedule":
        """Inverse of speed_mw_per_s at fixed delta_lambda."""
        if speed_mw_per_s <= 0 or p0_mw <= 0:
            raise ValueError("speed and p0_mw must be positive")
        interval = delta_lambda * p0_mw / speed_mw_per_s
        return RampSchedule(delta_lambda, interval, lambda_max)


def ramp_lambda(schedule: RampSchedule, t: float) -> float:
    if t < 0:
        raise ValueError("t must be non-negative")
    return min(schedule.delta_lambda * math.floor(t / schedule.interval),
               schedule.lambda_max)


@dataclass(frozen=True)
class GridState:
    """Trajectory point: time, loading factor, algebraic solution (theta, v
    over internal bus order), recovery states x = (x_p, x_q) per dynamic
    load, fluctuations eta, and the generator limit assignment of the last
    algebraic solve."""

    t: float
    lam: float
    theta: np.ndarray
    v: np.ndarray
    x: np.ndarray
    eta: np.ndarray
    q_limited: tuple[tuple[int, float], ...] = ()


def _load_eta(load: LoadDynParams, eta: np.ndarray) -> float:
    if load.noise_channel is None:
        return 0.0
    return float(eta[load.noise_channel])


def load_consumption(load: LoadDynParams, v: float, x_p: float, x_q: float,
                     eta: float = 0.0, lam: float = 0.0) -> tuple[float, float]:
    """Instantaneous consumed (p, q) of one recovery load."""
    if v <= 0:
        raise ValueError("voltage must be positive")
    lam_eff = lam if load.ramped else 0.0
    pn = load.p0 * (1.0 + lam_eff) + eta
    qn = load.q0 * (1.0 + lam_eff) + eta
    r = v / load.v0
    p = x_p / load.tp + pn * r ** load.alpha_t
    q = x_q / load.tq + qn * r ** load.beta_t
    return p, q


def load_state_derivative(load: LoadDynParams, v: float, x_p: float,
                          x_q: float, eta: float = 0.0,
                          lam: float = 0.0) -> tuple[float, float]:
    """Recovery dynamics (dx_p/dt, dx_q/dt)."""
    if v <= 0:
        raise ValueError("voltage must be positive")
    lam_eff = lam if load.ramped else 0.0
    pn = load.p0 * (1.0 + lam_eff) + eta
    qn = load.q0 * (1.0 + lam_eff) + eta
    r = v / load.v0
    dxp = -x_p / load.tp + pn * (r ** load.alpha_s - r ** load.alpha_t)
    dxq = -x_q / load.tq + qn * (r ** load.beta_s - r ** load.beta_t)
    return dxp, dxq


def build_ybus(case: NetworkCase) -> np.ndarray:
    idx = case.bus_index()
    n = len(case.buses)
    y = np.zeros((n, n), dtype=complex)
    for br in case.branches:
        i, j = idx[br.from_bus], idx[br.to_bus]
        ys = br.g + 1j * br.b
        ysh = 1j * br.b_shunt / 2.0
        a = br.tap
        y[i, i] += (ys + ysh) / (a * a)
        y[j, j] += ys + ysh
        y[i, j] -= ys / a
        y[j, i] -= ys / a
    for bus in case.buses:
        i = idx[bus.id]
        y[i, i] += bus.shunt_g + 1j * bus.shunt_b
    return y


class NoSolution(Exception):
    """Raised internally when the algebraic system has no Newton solution."""


class GridModel:
    """Case + loads with precomputed network matrices and index maps."""

    def __init__(self, case: NetworkCase, loads: tuple[LoadDynParams, ...]):
        self.case = case
        self.loads = tuple(loads)
        self.idx = case.bus_index()
        for ld in self.loads:
            if ld.bus not in self.idx:
                raise ValueError(f"dynamic load at unknown bus {ld.bus}")
        self.n = len(case.buses)
        self.ybus = build_ybus(case)
        self.slack = next(i for i, b in enumerate(case.buses)
                          if b.kind is BusKind.SLACK)
        self.pv_buses = [self.idx[g.bus] for g in case.generators
                         if case.buses[self.idx[g.bus]].kind is BusKind.PV]
        self.gen_at = {self.idx[g.bus]: g for g in case.generators}
        self.load_bus = np.array([self.idx[ld.bus] for ld in self.loads],
                                 dtype=int)
        self.n_x = 2 * len(self.loads)
        self.newton_iters = 0     # cumulative, for solver diagnostics

    # ---------------------------------------------------------- bookkeeping

    def n_channels(self) -> int:
        chans = [ld.noise_channel for ld in self.loads
                 if ld.noise_channel is not None]
        return max(chans) + 1 if chans else 0

    def flat_state(self, lam: float = 0.0,
                   n_channels: int | None = None) -> GridState:
        """Flat-ish start: zero angles, setpoint magnitudes, zero recovery
        states and fluctuations."""
        v = np.array([b.v0 for b in self.case.buses], dtype=float)
        for i, g in self.gen_at.items():
            if i != self.slack:
                v[i] = g.v_set
        k = self.n_channels() if n_channels is None else n_channels
        return GridState(t=0.0, lam=lam, theta=np.zeros(self.n), v=v,
                         x=np.zeros(self.n_x), eta=np.zeros(k))

    def equilibrium(self, lam: float = 0.0,
                    n_channels: int | None = None,
                    guess: GridState | None = None) -> GridState | None:
        """Zero-fluctuation equilibrium at loading factor lam.

        Solves the steady characteristic for (theta, v), then sets each
        recovery state to x_p = T_p (p_s - p_t) so the transient consumption
        equals p_s and both residual modes vanish at the same point.
        """
        start = guess if guess is not None else self.flat_state(lam, n_channels)
        start = replace(start, lam=lam, t=0.0)
        solved = self.solve(start, steady=True)
        if solved is None:
            return None
        x = np.empty(self.n_x)
        for j, ld in enumerate(self.loads):
            v = solved.v[self.load_bus[j]]
            lam_eff = lam if ld.ramped else 0.0
            pn = ld.p0 * (1.0 + lam_eff)
            qn = ld.q0 * (1.0 + lam_eff)
            r = v / ld.v0
            x[2 * j] = ld.tp * (pn * r ** ld.alpha_s - pn * r ** ld.alpha_t)
            x[2 * j + 1] = ld.tq * (qn * r ** ld.beta_s - qn * r ** ld.beta_t)
        return replace(solved, x=x)

    def ramped_p0(self) -> float:
        """Total ramped nominal active power, per unit."""
        total = sum(b.pd for b in self.case.buses if b.ramp)
        total += sum(ld.p0 for ld in self.loads if ld.ramped)
        return total

    def _pq_eff(self, q_limited: dict[int, float]) -> list[int]:
        """Bus indices whose voltage magnitude is free, in internal order."""
        out = []
        for i, b in enumerate(self.case.buses):
            if b.kind is BusKind.PQ or (b.kind is BusKind.PV and i in q_limited):
                out.append(i)
        return out

    def _nonslack(self) -> list[int]:
        return [i for i in range(self.n) if i != self.slack]

    # ----------------------------------------------------- load aggregation

    def _bus_demand(self, state: GridState, steady: bool
                    ) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """Total (pd, qd) per bus and their dV sensitivities."""
        pd = np.zeros(self.n)
        qd = np.zeros(self.n)
        dpd_dv = np.zeros(self.n)
        dqd_dv = np.zeros(self.n)
        for i, bus in enumerate(self.case.buses):
            fac = 1.0 + state.lam if bus.ramp else 1.0
            pd[i] += bus.pd * fac
            qd[i] += bus.qd * fac
        for j, ld in enumerate(self.loads):
            i = self.load_bus[j]
            v = state.v[i]
            eta = _load_eta(ld, state.eta)
            lam_eff = state.lam if ld.ramped else 0.0
            pn = ld.p0 * (1.0 + lam_eff) + eta
            qn = ld.q0 * (1.0 + lam_eff) + eta
            r = v / ld.v0
            if steady:
                pd[i] += pn * r ** ld.alpha_s
                qd[i] += qn * r ** ld.beta_s
                dpd_dv[i] += pn * ld.alpha_s * r ** (ld.alpha_s - 1) / ld.v0
                dqd_dv[i] += qn * ld.beta_s * r ** (ld.beta_s - 1) / ld.v0
            else:
                xp, xq = state.x[2 * j], state.x[2 * j + 1]
                pd[i] += xp / ld.tp + pn * r ** ld.alpha_t
                qd[i] += xq / ld.tq + qn * r ** ld.beta_t
                dpd_dv[i] += pn * ld.alpha_t * r ** (ld.alpha_t - 1) / ld.v0
                dqd_dv[i] += qn * ld.beta_t * r ** (ld.beta_t - 1) / ld.v0
        return pd, qd, dpd_dv, dqd_dv

    # ------------------------------------------------------------ residuals

    def residuals(self, state: GridState, steady: bool = False) -> np.ndarray:
        """Power mismatches (specified minus calculated) for the unknown
        ordering [theta at non-slack; V at PQ-effective]."""
        q_lim = dict(state.q_limited)
        vc = state.v * np.exp(1j * state.theta)
        s_calc = vc * np.conj(self.ybus @ vc)
        pd, qd, _, _ = self._bus_demand(state, steady)
        pg = np.zeros(self.n)
        qg = np.zeros(self.n)
        for i, g in self.gen_at.items():
            if i != self.slack:
                pg[i] = g.p
            if i in q_lim:
                qg[i] = q_lim[i]
        dp = pg - pd - s_calc.real
        dq = qg - qd - s_calc.imag
        rows_p = self._nonslack()
        rows_q = self._pq_eff(q_lim)
        return np.concatenate([dp[rows_p], dq[rows_q]])

    def _jacobian(self, state: GridState, steady: bool) -> np.ndarray:
        """d residuals / d [theta_nonslack; v_pq_eff]."""
        q_lim = dict(state.q_limited)
        vc = state.v * np.exp(1j * state.theta)
        ibus = self.ybus @ vc
        diag_v = np.diag(vc)
        diag_i = np.diag(ibus)
        diag_vn = np.diag(np.exp(1j * state.theta))
        ds_dth = 1j * diag_v @ np.conj(diag_i - self.ybus @ diag_v)
        ds_dvm = diag_v @ np.conj(self.ybus @ diag_vn) + \
            np.conj(diag_i) @ diag_vn
        _, _, dpd_dv, dqd_dv = self._bus_demand(state, steady)
        rows_p = self._nonslack()
        rows_q = self._pq_eff(q_lim)
        n_p, n_q = len(rows_p), len(rows_q)
        J = np.zeros((n_p + n_q, n_p + n_q))
        J[:n_p, :n_p] = -ds_dth.real[np.ix_(rows_p, rows_p)]
        J[:n_p, n_p:] = -ds_dvm.real[np.ix_(rows_p, rows_q)]
        J[n_p:, :n_p] = -ds_dth.imag[np.ix_(rows_q, rows_p)]
        J[n_p:, n_p:] = -ds_dvm.imag[np.ix_(rows_q, rows_q)]
        # demand voltage sensitivity enters the specified side
        for col, i in enumerate(rows_q):
            row_p = rows_p.index(i) if i in rows_p else None
            if row_p is not None:
                J[row_p, n_p + col] -= dpd_dv[i]
            J[n_p + rows_q.index(i), n_p + col] -= dqd_dv[i]
        return J

    # ---------------------------------------------------------- the solver

    def _newton(self, state: GridState, q_lim: dict[int, float],
                steady: bool, tol: float, max_iter: int) -> GridState:
        theta = state.theta.copy()
        v = state.v.copy()
        # PV and slack magnitudes are pinned to their setpoints
        for i, g in self.gen_at.items():
            if i not in q_lim and i != self.slack:
                v[i] = g.v_set
        v[self.slack] = self.case.buses[self.slack].v0
        theta[self.slack] = 0.0
        work = replace(state, theta=theta, v=v,
                       q_limited=tuple(sorted(q_lim.items())))
        rows_p = self._nonslack()
        rows_q = self._pq_eff(q_lim)
        n_p = len(rows_p)
        for _ in range(max_iter):
            r = self.residuals(work, steady)
            self.newton_iters += 1
            if not np.all(np.isfinite(r)):
                raise NoSolution("non-finite residual")
            if np.max(np.abs(r)) < tol:
                return work
            J = self._jacobian(work, steady)
            try:
                du = np.linalg.solve(J, -r)
            except np.linalg.LinAlgError as exc:
                raise NoSolution("singular Jacobian") from exc
            if not np.all(np.isfinite(du)) or np.max(np.abs(du)) > 1e6:
                raise NoSolution("Newton divergence")
            theta = work.theta.copy()
            v = work.v.copy()
            theta[rows_p] += du[:n_p]
            v[rows_q] += du[n_p:]
            if np.any(v[rows_q] <= 0):
                raise NoSolution("voltage collapse to non-physical value")
            work = replace(work, theta=theta, v=v)
        raise NoSolution("Newton iteration limit")

    def generator_reactive(self, state: GridState) -> dict[int, float]:
        """Reactive output each generator must supply at the solved state."""
        vc = state.v * np.exp(1j * state.theta)
        s_calc = vc * np.conj(self.ybus @ vc)
        pd, qd, _, _ = self._bus_demand(state, steady=False)
        out = {}
        for i, g in self.gen_at.items():
            out[g.bus] = float(s_calc.imag[i] + qd[i])
        return out

    def solve(self, state: GridState, tol: float = 1e-8, max_iter: int = 20,
              steady: bool = False) -> GridState | None:
        """Solve the algebraic constraints from a warm start.

        Reactive limits are re-derived from scratch: solve with all PV buses
        holding voltage, clamp violators to the binding limit, repeat until
        the assignment is stable.  Returns None when no solution is found.
        """
        q_lim: dict[int, float] = {}
        for _ in range(len(self.pv_buses) + 1):
            try:
                solved = self._newton(state, q_lim, steady, tol, max_iter)
            except NoSolution:
                return None
            new_lim = dict(q_lim)
            vc = solved.v * np.exp(1j * solved.theta)
            s_calc = vc * np.conj(self.ybus @ vc)
            pd, qd, _, _ = self._bus_demand(solved, steady)
            for i in self.pv_buses:
                if i in new_lim:
                    continue
                g = self.gen_at[i]
                q_need = s_calc.imag[i] + qd[i]
                if q_need > g.qmax:
                    new_lim[i] = g.qmax
                elif q_need < g.qmin:
                    new_lim[i] = g.qmin
            if new_lim == q_lim:
                return solved
            q_lim = new_lim
        return solved

    # ------------------------------------------------- reduced state matrix

    def state_derivative(self, state: GridState) -> np.ndarray:
        """h1: recovery-state derivatives at the given algebraic point."""
        out = np.empty(self.n_x)
        for j, ld in enumerate(self.loads):
            v = state.v[self.load_bus[j]]
            dxp, dxq = load_state_derivative(
                ld, v, state.x[2 * j], state.x[2 * j + 1],
                _load_eta(ld, state.eta), state.lam)
            out[2 * j] = dxp
            out[2 * j + 1] = dxq
        return out

    def reduced_matrix(self, state: GridState, ou_params: OUParams
                       ) -> np.ndarray:
        """A_sys over states [x_p, x_q per load; eta channels]."""
        k = ou_params.k
        n_x = self.n_x
        q_lim = dict(state.q_limited)
        rows_p = self._nonslack()
        rows_q = self._pq_eff(q_lim)
        n_p, n_q = len(rows_p), len(rows_q)
        n_z = n_p + n_q
        # d h1 / d states and d h1 / d z (V columns only)
        h1_x = np.zeros((n_x, n_x))
        h1_eta = np.zeros((n_x, k))
        h1_z = np.zeros((n_x, n_z))
        h2_x = np.zeros((n_z, n_x))
        h2_eta = np.zeros((n_z, k))
        vcol = {i: n_p + c for c, i in enumerate(rows_q)}
        prow = {i: c for c, i in enumerate(rows_p)}
        qrow = {i: n_p + c for c, i in enumerate(rows_q)}
        for j, ld in enumerate(self.loads):
            i = self.load_bus[j]
            v = state.v[i]
            eta = _load_eta(ld, state.eta)
            lam_eff = state.lam if ld.ramped else 0.0
            pn = ld.p0 * (1.0 + lam_eff) + eta
            qn = ld.q0 * (1.0 + lam_eff) + eta
            r = v / ld.v0
            h1_x[2 * j, 2 * j] = -1.0 / ld.tp
            h1_x[2 * j + 1, 2 * j + 1] = -1.0 / ld.tq
            dps_dv = pn * ld.alpha_s * r ** (ld.alpha_s - 1) / ld.v0
            dpt_dv = pn * ld.alpha_t * r ** (ld.alpha_t - 1) / ld.v0
            dqs_dv = qn * ld.beta_s * r ** (ld.beta_s - 1) / ld.v0
            dqt_dv = qn * ld.beta_t * r ** (ld.beta_t - 1) / ld.v0
            if i in vcol:
                h1_z[2 * j, vcol[i]] = dps_dv - dpt_dv
                h1_z[2 * j + 1, vcol[i]] = dqs_dv - dqt_dv
            if ld.noise_channel is not None:
                c = ld.noise_channel
                h1_eta[2 * j, c] = r ** ld.alpha_s - r ** ld.alpha_t
                h1_eta[2 * j + 1, c] = r ** ld.beta_s - r ** ld.beta_t
                if i in prow:
                    h2_eta[prow[i], c] += -(r ** ld.alpha_t)
                if i in qrow:
                    h2_eta[qrow[i], c] += -(r ** ld.beta_t)
            if i in prow:
                h2_x[prow[i], 2 * j] = -1.0 / ld.tp
            if i in qrow:
                h2_x[qrow[i], 2 * j + 1] = -1.0 / ld.tq
        h2_z = self._jacobian(state, steady=False)
        try:
            elim = np.linalg.solve(h2_z, np.hstack([h2_x, h2_eta]))
        except np.linalg.LinAlgError as exc:
            raise NoSolution("algebraic Jacobian singular") from exc
        top = np.hstack([h1_x, h1_eta]) - h1_z @ elim
        bottom = np.hstack([np.zeros((k, n_x)), -np.diag(ou_params.alpha)])
        return np.vstack([top, bottom])

    # -------------------------------------------------------------- reports

    def branch_flows(self, state: GridState) -> list[dict]:
        """Per-branch complex flows and series losses."""
        vc = state.v * np.exp(1j * state.theta)
        out = []
        for br in self.case.branches:
            i, j = self.idx[br.from_bus], self.idx[br.to_bus]
            ys = br.g + 1j * br.b
            ysh = 1j * br.b_shunt / 2.0
            a = br.tap
            i_f = (ys + ysh) / (a * a) * vc[i] - ys / a * vc[j]
            i_t = -ys / a * vc[i] + (ys + ysh) * vc[j]
            s_f = vc[i] * np.conj(i_f)
            s_t = vc[j] * np.conj(i_t)
            out.append({"from": br.from_bus, "to": br.to_bus,
                        "s_from": s_f, "s_to": s_t, "loss": s_f + s_t})
        return out

    def power_balance(self, state: GridState) -> dict:
        """Totals for the energy bookkeeping check (per unit)."""
        vc = state.v * np.exp(1j * state.theta)
        s_calc = vc * np.conj(self.ybus @ vc)
        pd, qd, _, _ = self._bus_demand(state, steady=False)
        gen_p = float(s_calc.real[self.slack] + pd[self.slack])
        for i, g in self.gen_at.items():
            if i != self.slack:
                gen_p += g.p
        return {
            "generation_p": gen_p,
            "load_p": float(pd.sum()),
            "network_loss_p": float(s_calc.real.sum()),
        }


# ------------------------------------------------------- free-function API


def algebraic_residuals(case: NetworkCase, loads, state: GridState,
                        steady: bool = False) -> np.ndarray:
    return GridModel(case, tuple(loads)).residuals(state, steady)


def solve_algebraic(case: NetworkCase, loads, state: GridState,
                    tol: float = 1e-8, max_iter: int = 20,
                    steady: bool = False) -> GridState | None:
    return GridModel(case, tuple(loads)).solve(state, tol, max_iter, steady)


def reduced_state_matrix(case: NetworkCase, loads, ou_params: OUParams,
                         state: GridState) -> np.ndarray:
    return GridModel(case, tuple(loads)).reduced_matrix(state, ou_params)
