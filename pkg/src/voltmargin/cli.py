"""Command line interface.

Subcommands:

* normalform: slow-fast normal-form experiments (deterministic delay table
  and an exit-probability sweep) written as plain data files.
* simulate:   one trajectory of a grid case, optionally dumped to CSV.
* sweep:      a full Monte Carlo margin sweep from an experiment file.
* report:     re-render tables and histogram files from a prior sweep.
* validate:   check case and experiment files without running anything.

Every flag can also be set through an environment variable with the
VOLTMARGIN_ prefix (--rcond-threshold -> VOLTMARGIN_RCOND_THRESHOLD); an
explicit flag wins.  All runs log the fully resolved configuration,
defaults included, to stderr.  Output files carry (version, seed, config
hash) and contain no timestamps, so identical configurations produce
byte-identical files regardless of worker count.

Exit codes: 0 success, 1 runtime or validation failure (with a diagnostic
naming the failing cell and path for sweep errors), 2 usage errors.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .caseio import (CaseFormatError, ExperimentFile, config_hash,
                     experiment_config, experiment_spec, infer_case_format,
                     parse_case, parse_experiment)
from .cases import CASE_BUILDERS
from .detector import DetectorConfig
from .integrator import IntegratorConfig, simulate_trajectory
from .montecarlo import (ExperimentSpec, default_workers, percent_diff,
                         run_experiment)
from .network import GridModel, RampSchedule
from .normalform import (NormalFormParams, airy_delay_constant,
                         classify_regime, exit_probability_sweep,
                         nf_deterministic_trajectory)
from .ou import OUParams, RngStream

log = logging.getLogger("voltmargin")

RESULTS_FORMAT = "voltmargin-results"


def _env_name(flag: str) -> str:
    return "VOLTMARGIN_" + flag.lstrip("-").replace("-", "_").upper()


def _add_flag(parser: argparse.ArgumentParser, flag: str, **kwargs) -> None:
    """add_argument with an environment-variable fallback for the default."""
    env = _env_name(flag)
    if env in os.environ:
        cast = kwargs.get("type", str)
        kwargs["default"] = cast(os.environ[env])
        kwargs.pop("required", None)
    parser.add_argument(flag, **kwargs)


def _float_list(text: str) -> list[float]:
    return [float(tok) for tok in text.split(",") if tok.strip()]


# ---------------------------------------------------------------------------
# deterministic file output

def _num(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def _csv_text(header: list[str], rows: list[list]) -> str:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(v if isinstance(v, str) else _num(v)
                              for v in row))
    return "\n".join(lines) + "\n"


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)
    log.info("wrote %s", path)


def _struct_text(payload: dict) -> str:
    return json.dumps(payload, indent=2, sort_keys=True) + "\n"


# ---------------------------------------------------------------------------
# normalform

_DELAY_HEADER = ["epsilon", "y_cross_zero", "ratio_to_eps23", "regime"]
_EXIT_HEADER = ["h", "h_over_sigma", "p_exit", "ci_low", "ci_high",
                "n_exits", "n_paths"]


def _cmd_normalform(args) -> int:
    eps_list = args.eps
    h_mult = args.h_multiples
    config = {"eps_list": eps_list, "sigma": args.sigma,
              "exit_eps": args.exit_eps, "h_multiples": h_mult,
              "y0": args.y0, "y_stop": args.y_stop, "paths": args.paths,
              "seed": args.seed}
    log.info("config: %s", json.dumps(config, sort_keys=True))

    airy = airy_delay_constant()
    delay_rows = []
    for eps in eps_list:
        path = nf_deterministic_trajectory(NormalFormParams(epsilon=eps))
        y_cross = path.escape.y_cross_zero
        regime = classify_regime(args.sigma, eps).value
        delay_rows.append([eps, y_cross, y_cross / eps ** (2.0 / 3.0),
                           regime])
        log.info("eps=%g y_cross=%g ratio=%g (Airy %g)", eps, y_cross,
                 y_cross / eps ** (2.0 / 3.0), airy)

    params = NormalFormParams(epsilon=args.exit_eps, sigma=args.sigma,
                              y0=args.y0)
    sweep = exit_probability_sweep(params,
                                   [m * args.sigma for m in h_mult],
                                   y_stop=args.y_stop, n_paths=args.paths,
                                   rng_base=RngStream(args.seed, 0))
    exit_rows = [[r.h, r.h / args.sigma, r.estimate, r.ci_low, r.ci_high,
                  r.n_exits, r.n_paths] for r in sweep]

    out = Path(args.out)
    _write(out / "delay.csv", _csv_text(_DELAY_HEADER, delay_rows))
    _write(out / "exit.csv", _csv_text(_EXIT_HEADER, exit_rows))
    payload = {
        "format": RESULTS_FORMAT, "version": __version__,
        "seed": args.seed, "config": config,
        "config_hash": config_hash(config),
        "airy_delay_constant": airy,
        "delay": [dict(zip(_DELAY_HEADER, row)) for row in delay_rows],
        "exit": [dict(zip(_EXIT_HEADER, row)) for row in exit_rows],
    }
    _write(out / "results.struct", _struct_text(payload))
    return 0


# ---------------------------------------------------------------------------
# case loading shared by simulate/validate

def _load_case(ref: str):
    """Builtin case name or case file path -> (case, loads, schedule)."""
    if ref in CASE_BUILDERS:
        return CASE_BUILDERS[ref]()
    doc = parse_case(ref, infer_case_format(ref))
    return doc.case, doc.loads, None


def _trajectory_csv(rec, loads) -> str:
    header = ["t", "lambda", "rcond"]
    header += [f"v_{b}" for b in rec.monitor_buses]
    for ld in loads:
        header += [f"xp_{ld.bus}", f"xq_{ld.bus}"]
    header += [f"eta_{c}" for c in range(rec.eta.shape[1])]
    rows = []
    for k in range(len(rec.t)):
        rows.append([rec.t[k], rec.lam[k], rec.rcond[k],
                     *rec.v[k], *rec.x[k], *rec.eta[k]])
    return _csv_text(header, rows)


def _cmd_simulate(args) -> int:
    case, loads, shipped = _load_case(args.case)
    if not loads:
        log.error("case %s has no dynamic loads", args.case)
        return 1
    delta = args.delta_lambda or (shipped.delta_lambda if shipped else 0.02)
    interval = args.interval or (shipped.interval if shipped else 1.0)
    lam_max = args.lambda_max or (shipped.lambda_max if shipped else 3.0)
    schedule = RampSchedule(delta, interval, lam_max)
    horizon = args.horizon
    if horizon is None:
        # enough time to walk the whole ramp plus a tail
        horizon = (lam_max / delta + 5.0) * interval
    model = GridModel(case, loads)
    k = model.n_channels()
    ou = OUParams(alpha=np.full(k, args.alpha), sigma=args.sigma)
    integ = IntegratorConfig(horizon=horizon, dt=args.dt,
                             record_stride=args.record_stride)
    det = DetectorConfig(rcond_threshold=args.rcond_threshold)
    config = {"case": args.case, "sigma": args.sigma, "alpha": args.alpha,
              "schedule": {"delta_lambda": delta, "interval": interval,
                           "lambda_max": lam_max},
              "horizon": horizon, "dt": args.dt,
              "record_stride": args.record_stride,
              "rcond_threshold": args.rcond_threshold, "seed": args.seed}
    log.info("config: %s", json.dumps(config, sort_keys=True))

    rng = RngStream(args.seed, 0).generator()
    rec = simulate_trajectory(case, loads, ou, schedule, integ, rng,
                              detector=det)
    margin = rec.margin_s
    print(f"termination: {rec.termination.value}")
    print(f"final lambda: {rec.lam[-1]:.4f}  t: {rec.t[-1]:.2f} s")
    print("margin_S_MW: " + ("censored" if margin is None else _num(margin)))
    if args.out:
        out = Path(args.out)
        _write(out / "trajectory.csv", _trajectory_csv(rec, loads))
        payload = {
            "format": RESULTS_FORMAT, "version": __version__,
            "seed": args.seed, "config": config,
            "config_hash": config_hash(config),
            "termination": rec.termination.value,
            "final_lambda": float(rec.lam[-1]),
            "final_t": float(rec.t[-1]),
            "margin_S_MW": None if margin is None else float(margin),
        }
        _write(out / "results.struct", _struct_text(payload))
    return 0


# ---------------------------------------------------------------------------
# sweep

_RESULT_COLS = ["sigma", "delta_lambda", "interval", "lambda_max",
                "speed_MW_per_s", "n", "n_censored", "S_det_MW", "mean_S_MW",
                "var_S_MW2", "pct_diff_vs_det", "ci90_lower_MW",
                "se_boot_MW"]


def _cell_record(stats, speed: float) -> dict:
    sched = stats.schedule
    return {
        "sigma": stats.sigma,
        "delta_lambda": sched.delta_lambda,
        "interval": sched.interval,
        "lambda_max": sched.lambda_max,
        "speed_MW_per_s": speed,
        "n": stats.n,
        "n_censored": stats.n_censored,
        "S_det_MW": float(stats.s_det),
        "mean_S_MW": float(stats.mean_s),
        "var_S_MW2": float(stats.var_s),
        "pct_diff_vs_det": float(stats.pct_diff_vs_det),
        "ci90_lower_MW": float(stats.ci90_lower),
        "se_boot_MW": float(stats.se_boot),
        "hist_counts": [int(c) for c in stats.hist_counts],
        "hist_edges": [float(e) for e in stats.hist_edges],
    }


def _results_csv(cells: list[dict]) -> str:
    rows = []
    for cell in cells:
        # the pct_diff column always recomputes from the mean and baseline
        pct = percent_diff(cell["mean_S_MW"], cell["S_det_MW"])
        row = [cell[c] for c in _RESULT_COLS]
        row[_RESULT_COLS.index("pct_diff_vs_det")] = pct
        rows.append(row)
    return _csv_text(_RESULT_COLS, rows)


def _hist_csv(cell: dict) -> str:
    edges = cell["hist_edges"]
    rows = [[edges[i], edges[i + 1], cell["hist_counts"][i]]
            for i in range(len(cell["hist_counts"]))]
    return _csv_text(["bin_lo_MW", "bin_hi_MW", "count"], rows)


def _write_report_files(out: Path, cells: list[dict]) -> None:
    _write(out / "results.csv", _results_csv(cells))
    for idx, cell in enumerate(cells):
        _write(out / f"hist_{idx:02d}.csv", _hist_csv(cell))


def _print_table(cells: list[dict]) -> None:
    head = (f"{'sigma':>7} {'interval':>9} {'MW_per_s':>9} {'n':>5} "
            f"{'cens':>5} {'S_det':>9} {'mean_S':>9} {'var_S':>9} "
            f"{'pct_diff':>9} {'ci90_lo':>9} {'se_boot':>8}")
    print(head)
    for cell in cells:
        pct = percent_diff(cell["mean_S_MW"], cell["S_det_MW"])
        print(f"{cell['sigma']:>7.3f} {cell['interval']:>9.3f} "
              f"{cell['speed_MW_per_s']:>9.4f} {cell['n']:>5d} "
              f"{cell['n_censored']:>5d} {cell['S_det_MW']:>9.3f} "
              f"{cell['mean_S_MW']:>9.3f} {cell['var_S_MW2']:>9.3f} "
              f"{pct:>9.2f} {cell['ci90_lower_MW']:>9.3f} "
              f"{cell['se_boot_MW']:>8.3f}")


def _dump_trajectories(exp: ExperimentFile, spec: ExperimentSpec,
                       out: Path, n_dump: int) -> None:
    """Re-run the first n_dump paths of each cell with dense recording.

    Streams are (seed, cell << 32 | path), identical to the sweep itself,
    so the dumped trajectories are the very paths that entered the
    statistics.
    """
    integ = replace(spec.integrator, record_stride=1)
    for i, sigma in enumerate(spec.sigma_list):
        for j, schedule in enumerate(spec.schedule_list):
            cell = spec.cell_index(i, j)
            ou_cell = spec.ou.with_sigma(sigma)
            for p in range(min(n_dump, spec.n_paths)):
                rng = RngStream(spec.seed_base, (cell << 32) | p).generator()
                rec = simulate_trajectory(spec.case, spec.loads, ou_cell,
                                          schedule, integ, rng,
                                          detector=spec.detector)
                _write(out / "trajectories" / f"{cell:02d}" / f"{p:04d}.csv",
                       _trajectory_csv(rec, spec.loads))


def _cmd_sweep(args) -> int:
    exp = parse_experiment(args.experiment)
    if args.seed is not None:
        exp = replace(exp, seed=args.seed)
    if args.paths is not None:
        exp = replace(exp, n_paths=args.paths)
    if args.rcond_threshold is not None:
        exp = replace(exp, detector=replace(
            exp.detector, rcond_threshold=args.rcond_threshold))
    if args.dt is not None:
        exp = replace(exp, integrator=replace(exp.integrator, dt=args.dt))
    out = Path(args.out or exp.out_dir or f"runs/{exp.name}")
    workers = args.threads if args.threads is not None else default_workers()

    config = experiment_config(exp)
    chash = config_hash(config)
    log.info("config: %s", json.dumps(config, sort_keys=True))
    log.info("config hash %s, %d workers, output %s", chash, workers, out)

    spec = experiment_spec(exp)
    results = run_experiment(spec, workers=workers)

    model = GridModel(spec.case, spec.loads)
    p0_mw = model.ramped_p0() * spec.case.base_mva
    cells = []
    for sigma in spec.sigma_list:
        for schedule in spec.schedule_list:
            stats = results[(sigma, schedule)]
            cells.append(_cell_record(stats, schedule.speed_mw_per_s(p0_mw)))

    payload = {
        "format": RESULTS_FORMAT, "version": __version__,
        "seed": exp.seed, "config": config, "config_hash": chash,
        "cells": cells,
    }
    _write(out / "results.struct", _struct_text(payload))
    _write_report_files(out, cells)
    if args.dump_trajectories:
        _dump_trajectories(exp, spec, out, args.dump_trajectories)
    _print_table(cells)
    return 0


# ---------------------------------------------------------------------------
# report / validate

def _cmd_report(args) -> int:
    run_dir = Path(args.run_dir)
    struct = run_dir / "results.struct"
    if not struct.is_file():
        log.error("no results.struct under %s", run_dir)
        return 1
    payload = json.loads(struct.read_text())
    if payload.get("format") != RESULTS_FORMAT:
        log.error("%s: not a results file", struct)
        return 1
    log.info("config hash %s (version %s, seed %s)",
             payload.get("config_hash"), payload.get("version"),
             payload.get("seed"))
    cells = payload["cells"]
    out = Path(args.out) if args.out else run_dir
    _write_report_files(out, cells)
    _print_table(cells)
    return 0


def _cmd_validate(args) -> int:
    if not args.case and not args.experiment:
        log.error("nothing to validate: give --case and/or --experiment")
        return 2
    if args.case:
        case, loads, _ = _load_case(args.case)
        print(f"OK case {case.name}: {len(case.buses)} buses, "
              f"{len(case.branches)} branches, {len(case.generators)} "
              f"generators, {len(loads)} dynamic loads")
    if args.experiment:
        exp = parse_experiment(args.experiment)
        n_cells = len(exp.sigma_list) * len(exp.schedules)
        print(f"OK experiment {exp.name}: case {exp.case.case.name}, "
              f"{n_cells} cells, {exp.n_paths} paths/cell, seed {exp.seed}")
    return 0


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="voltmargin",
        description="Stochastic voltage stability margin toolkit")
    parser.add_argument("--version", action="version",
                        version=f"voltmargin {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("normalform",
                       help="slow-fast normal-form experiments")
    _add_flag(p, "--out", required=True, help="output directory")
    _add_flag(p, "--seed", type=int, default=0)
    _add_flag(p, "--paths", type=int, default=1000,
              help="paths for the exit-probability sweep")
    p.add_argument("--eps", type=_float_list, default=[1e-2, 1e-3, 1e-4],
                   help="comma list of slow speeds for the delay table")
    p.add_argument("--sigma", type=float, default=0.01)
    p.add_argument("--exit-eps", type=float, default=1e-3,
                   help="slow speed for the exit sweep")
    p.add_argument("--h-multiples", type=_float_list,
                   default=[2, 3, 4, 5, 6, 7, 8],
                   help="layer depths as multiples of sigma")
    p.add_argument("--y0", type=float, default=-0.3)
    p.add_argument("--y-stop", type=float, default=-0.1)
    p.set_defaults(func=_cmd_normalform)

    p = sub.add_parser("simulate", help="run one trajectory")
    _add_flag(p, "--case", required=True,
              help="shipped case name or case file path")
    _add_flag(p, "--seed", type=int, default=0)
    _add_flag(p, "--out", default=None, help="output directory (optional)")
    _add_flag(p, "--dt", type=float, default=0.05)
    _add_flag(p, "--rcond-threshold", type=float, default=0.1)
    p.add_argument("--sigma", type=float, default=0.0)
    p.add_argument("--alpha", type=float, default=1.0,
                   help="OU mean-reversion rate for all channels")
    p.add_argument("--horizon", type=float, default=None,
                   help="default: time for the full ramp plus a tail")
    p.add_argument("--delta-lambda", type=float, default=None)
    p.add_argument("--interval", type=float, default=None)
    p.add_argument("--lambda-max", type=float, default=None)
    p.add_argument("--record-stride", type=int, default=1)
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("sweep", help="run a Monte Carlo margin sweep")
    _add_flag(p, "--experiment", required=True, help="experiment file")
    _add_flag(p, "--seed", type=int, default=None,
              help="override the experiment seed")
    _add_flag(p, "--paths", type=int, default=None,
              help="override paths per cell")
    _add_flag(p, "--threads", type=int, default=None,
              help="worker processes (default: up to 4)")
    _add_flag(p, "--out", default=None, help="override output directory")
    _add_flag(p, "--rcond-threshold", type=float, default=None)
    _add_flag(p, "--dt", type=float, default=None)
    _add_flag(p, "--dump-trajectories", type=int, default=0,
              help="dump the first N paths of each cell as CSV")
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("report", help="re-render tables from a sweep")
    p.add_argument("run_dir", help="directory holding results.struct")
    _add_flag(p, "--out", default=None,
              help="write files here instead of run_dir")
    p.set_defaults(func=_cmd_report)

    p = sub.add_parser("validate", help="check case/experiment files")
    _add_flag(p, "--case", default=None,
              help="shipped case name or case file path")
    _add_flag(p, "--experiment", default=None, help="experiment file")
    p.set_defaults(func=_cmd_validate)

    return parser


def main(argv=None) -> int:
    logging.basicConfig(stream=sys.stderr, level=logging.INFO,
                        format="%(levelname)s %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code in (0, None) else int(exc.code)
    try:
        return args.func(args)
    except CaseFormatError as exc:
        log.error("%s", exc)
        return 1
    except (RuntimeError, ValueError, OSError) as exc:
        log.error("%s", exc)
        return 1


if __name__ == "__main__":
    sys.exit(main())
