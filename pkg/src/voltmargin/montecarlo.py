"""Monte Carlo margin sweeps over fluctuation intensity and ramp speed.

A sweep is a grid of cells, one per (sigma, schedule) pair.  Every cell runs
n_paths trajectories; each path owns the dedicated random stream
RngStream(seed_base, cell_index << 32 | path_index), so results do not
depend on execution order or on how paths are distributed over workers.
The deterministic baseline S_det is the sigma = 0 margin, computed once per
schedule (it consumes no randomness).  Censored paths (horizon reached
without detection) are excluded from the statistics and counted separately.
"""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .detector import DetectorConfig
from .integrator import IntegratorConfig, simulate_trajectory
from .network import LoadDynParams, NetworkCase, RampSchedule
from .ou import OUParams, RngStream
from .stats import Welford, bootstrap_se_of_mean, percentile_lower

__all__ = [
    "ExperimentSpec",
    "MarginStatistics",
    "run_experiment",
    "percent_diff",
    "histogram",
    "ci90_lower",
]

HIST_BINS = 20


@dataclass(frozen=True)
class ExperimentSpec:
    case: NetworkCase
    loads: tuple[LoadDynParams, ...]
    ou: OUParams                       # sigma is overridden per cell
    sigma_list: tuple[float, ...]
    schedule_list: tuple[RampSchedule, ...]
    integrator: IntegratorConfig
    n_paths: int = 1000
    seed_base: int = 0
    detector: DetectorConfig = field(default_factory=DetectorConfig)
    name: str = "sweep"

    def __post_init__(self) -> None:
        object.__setattr__(self, "loads", tuple(self.loads))
        object.__setattr__(self, "sigma_list", tuple(self.sigma_list))
        object.__setattr__(self, "schedule_list", tuple(self.schedule_list))
        if self.n_paths < 1:
            raise ValueError("n_paths must be a positive integer")
        if not self.sigma_list or not self.schedule_list:
            raise ValueError("sigma_list and schedule_list must be non-empty")
        if any(s < 0 for s in self.sigma_list):
            raise ValueError("sigma values must be non-negative")
        if self.seed_base < 0:
            raise ValueError("seed_base must be non-negative")

    def cell_index(self, i_sigma: int, i_schedule: int) -> int:
        """Row-major cell index used for stream derivation."""
        return i_sigma * len(self.schedule_list) + i_schedule


def percent_diff(value: float, reference: float) -> float:
    """(value - reference) / reference in percent, rounded to 2 decimals."""
    if reference == 0:
        raise ValueError("reference must be nonzero")
    return round((value - reference) / reference * 100.0, 2)


def histogram(samples, bins: int = HIST_BINS
              ) -> tuple[np.ndarray, np.ndarray]:
    """Counts and bin edges over the sample range."""
    counts, edges = np.histogram(np.asarray(samples, dtype=float), bins=bins)
    return counts, edges


def ci90_lower(samples) -> float:
    """Lower edge of the two-sided 90% sample interval (5th percentile,
    linear interpolation)."""
    return percentile_lower(samples, 5.0)


@dataclass(frozen=True)
class MarginStatistics:
    """Per-cell Monte Carlo summary of the detected margins, in MW."""

    sigma: float
    schedule: RampSchedule
    n: int                    # completed (uncensored) trajectories
    n_censored: int
    s_det: float              # deterministic baseline margin
    mean_s: float
    var_s: float
    pct_diff_vs_det: float
    ci90_lower: float
    se_boot: float            # bootstrap standard error of mean_s
    hist_counts: np.ndarray
    hist_edges: np.ndarray
    samples: np.ndarray       # path-ordered margins of completed paths


def _run_chunk(args) -> list[tuple[int, float]]:
    (case, loads, ou, schedule, integrator, detector,
     seed_base, cell_idx, lo, hi) = args
    out = []
    for i in range(lo, hi):
        rng = RngStream(seed_base, (cell_idx << 32) | i).generator()
        try:
            rec = simulate_trajectory(case, loads, ou, schedule, integrator,
                                      rng, detector=detector)
        except Exception as exc:
            raise RuntimeError(
                f"simulation failed at sigma={ou.sigma}, "
                f"interval={schedule.interval}, path {i}: {exc}") from exc
        # censored paths are reported as NaN and dropped from statistics
        s = rec.margin_s
        out.append((i, float("nan") if s is None else s))
    return out


def _cell_statistics(spec: ExperimentSpec, sigma: float,
                     schedule: RampSchedule, s_det: float,
                     margins: list[float | None]) -> MarginStatistics:
    if any(m is None for m in margins):
        raise RuntimeError("incomplete sweep reduction")
    arr = np.array(margins, dtype=float)
    samples = arr[~np.isnan(arr)]
    n_censored = int(np.isnan(arr).sum())
    if len(samples) == 0:
        nan = float("nan")
        return MarginStatistics(
            sigma=sigma, schedule=schedule, n=0, n_censored=n_censored,
            s_det=s_det, mean_s=nan, var_s=nan, pct_diff_vs_det=nan,
            ci90_lower=nan, se_boot=nan,
            hist_counts=np.zeros(HIST_BINS, dtype=int),
            hist_edges=np.zeros(HIST_BINS + 1), samples=samples)
    acc = Welford()
    acc.extend(samples)
    counts, edges = histogram(samples)
    return MarginStatistics(
        sigma=sigma, schedule=schedule, n=len(samples),
        n_censored=n_censored, s_det=s_det,
        mean_s=acc.mean, var_s=acc.variance,
        pct_diff_vs_det=percent_diff(acc.mean, s_det),
        ci90_lower=ci90_lower(samples),
        se_boot=bootstrap_se_of_mean(samples),
        hist_counts=counts, hist_edges=edges, samples=samples)


def run_experiment(spec: ExperimentSpec, workers: int = 1
                   ) -> dict[tuple[float, RampSchedule], MarginStatistics]:
    """Run the full sweep grid; the result is keyed by (sigma, schedule).

    The output is identical for any worker count: streams are derived from
    (seed_base, cell, path), and the reduction is in path order.
    """
    if workers < 1:
        raise ValueError("workers must be a positive integer")
    baselines: dict[int, float] = {}
    for j, sched in enumerate(spec.schedule_list):
        rec = simulate_trajectory(spec.case, spec.loads,
                                  spec.ou.with_sigma(0.0), sched,
                                  spec.integrator,
                                  RngStream(spec.seed_base, 0).generator(),
                                  detector=spec.detector)
        if rec.margin is None:
            raise ValueError(
                f"deterministic baseline for schedule {j} was censored; "
                "extend the integrator horizon or the ramp limit")
        baselines[j] = rec.margin.s

    chunk = max(1, min(spec.n_paths, 64))
    tasks = []
    for i, sigma in enumerate(spec.sigma_list):
        ou = spec.ou.with_sigma(sigma)
        for j, sched in enumerate(spec.schedule_list):
            ci = spec.cell_index(i, j)
            for lo in range(0, spec.n_paths, chunk):
                hi = min(lo + chunk, spec.n_paths)
                tasks.append((spec.case, spec.loads, ou, sched,
                              spec.integrator, spec.detector,
                              spec.seed_base, ci, lo, hi))

    margins: dict[int, list] = {
        spec.cell_index(i, j): [None] * spec.n_paths
        for i in range(len(spec.sigma_list))
        for j in range(len(spec.schedule_list))}
    if workers == 1:
        chunks = map(_run_chunk, tasks)
        for task, done in zip(tasks, chunks):
            for path_idx, s in done:
                margins[task[7]][path_idx] = s
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for task, done in zip(tasks, pool.map(_run_chunk, tasks)):
                for path_idx, s in done:
                    margins[task[7]][path_idx] = s

    result = {}
    for i, sigma in enumerate(spec.sigma_list):
        for j, sched in enumerate(spec.schedule_list):
            ci = spec.cell_index(i, j)
            result[(sigma, sched)] = _cell_statistics(
                spec, sigma, sched, baselines[j], margins[ci])
    return result


def default_workers() -> int:
    return min(4, os.cpu_count() or 1)
