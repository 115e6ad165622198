"""Case and experiment file parsing, validation, and the canonical writer.

Two on-disk formats are supported for network cases:

* canonical: a JSON document with named sections (buses, branches,
  generators, loads).  Human-diffable, written with stable key order and
  fixed indentation so that the writer/parser pair round-trips exactly.
* matpower_subset: a read-only importer for the textual MATPOWER format
  (baseMVA scalar plus bus/gen/branch matrices).  Bus types 3/2/1 map to
  slack/PV/PQ; columns the model does not represent are ignored with a
  warning.

Experiment files are JSON as well: a case reference (shipped name or path),
an OU section, an optional loads override, and a sweep grid.  Schedule
entries give either {delta_lambda, interval} directly or speed_MW_per_s,
which is converted through the ramped nominal power of the resolved case;
the two spellings are mutually exclusive per entry.

All semantic errors are raised as CaseFormatError carrying the source path
and a dotted field location (e.g. "buses[2].kind").
"""

from __future__ import annotations

import hashlib
import json
import re
import warnings
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from .cases import CASE_BUILDERS
from .detector import DetectorConfig
from .integrator import IntegratorConfig
from .montecarlo import ExperimentSpec
from .network import (Branch, Bus, BusKind, Generator, GridModel,
                      LoadDynParams, NetworkCase, RampSchedule)
from .ou import OUParams

__all__ = [
    "CaseFormatError",
    "CaseDocument",
    "ExperimentFile",
    "parse_case",
    "write_case",
    "canonical_case_text",
    "parse_experiment",
    "experiment_spec",
    "experiment_config",
    "config_hash",
    "sha256_file",
]

CASE_FORMAT = "voltmargin-case"
EXPERIMENT_FORMAT = "voltmargin-experiment"
FORMAT_VERSION = 1


class CaseFormatError(ValueError):
    """Schema or consistency violation in a case/experiment file."""

    def __init__(self, source: str, location: str, message: str):
        self.source = source
        self.location = location
        super().__init__(f"{source}: {location}: {message}")


@dataclass(frozen=True)
class CaseDocument:
    """A parsed network case plus its dynamic loads and file provenance."""

    case: NetworkCase
    loads: tuple[LoadDynParams, ...]
    source: str
    fmt: str
    checksum: str


@dataclass(frozen=True)
class ExperimentFile:
    """A fully resolved experiment description.

    Schedules given as speed_MW_per_s in the file are already converted to
    {delta_lambda, interval} here, so downstream code sees RampSchedule
    only.  loads is the effective list: the experiment override when
    present, otherwise the loads shipped with the case document.
    """

    name: str
    case: CaseDocument
    loads: tuple[LoadDynParams, ...]
    ou: OUParams
    sigma_list: tuple[float, ...]
    schedules: tuple[RampSchedule, ...]
    n_paths: int
    seed: int
    detector: DetectorConfig
    integrator: IntegratorConfig
    out_dir: str | None
    source: str
    checksum: str


def sha256_file(path: str | Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


# ---------------------------------------------------------------------------
# schema helpers

_MISSING = object()

_KINDS = {
    "number": (int, float),
    "integer": int,
    "string": str,
    "boolean": bool,
    "array": list,
    "object": dict,
}


def _check_keys(data: dict, allowed: set[str], source: str, where: str) -> None:
    unknown = sorted(set(data) - allowed)
    if unknown:
        raise CaseFormatError(source, where,
                              f"unknown field(s): {', '.join(unknown)}")


def _get(data: dict, key: str, kind: str, source: str, where: str,
         default=_MISSING):
    loc = f"{where}.{key}" if where else key
    if key not in data:
        if default is _MISSING:
            raise CaseFormatError(source, loc, "required field is missing")
        return default
    value = data[key]
    want = _KINDS[kind]
    if kind == "number" and isinstance(value, bool):
        raise CaseFormatError(source, loc, "expected a number")
    if kind == "integer" and isinstance(value, bool):
        raise CaseFormatError(source, loc, "expected an integer")
    if not isinstance(value, want):
        raise CaseFormatError(source, loc, f"expected {kind}, "
                              f"got {type(value).__name__}")
    return value


def _load_json(path: Path, expect_format: str) -> dict:
    source = str(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise CaseFormatError(source, "<file>", str(exc))
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CaseFormatError(source, f"line {exc.lineno} column {exc.colno}",
                              exc.msg)
    if not isinstance(data, dict):
        raise CaseFormatError(source, "<root>", "expected a JSON object")
    fmt = _get(data, "format", "string", source, "")
    if fmt != expect_format:
        raise CaseFormatError(source, "format",
                              f"expected {expect_format!r}, got {fmt!r}")
    version = _get(data, "version", "integer", source, "")
    if version != FORMAT_VERSION:
        raise CaseFormatError(source, "version",
                              f"unsupported version {version}")
    return data


# ---------------------------------------------------------------------------
# canonical case format

_BUS_FIELDS = {"id", "kind", "v0", "base_kv", "pd", "qd", "ramp",
               "shunt_g", "shunt_b"}
_BRANCH_FIELDS = {"from_bus", "to_bus", "g", "b", "b_shunt", "tap"}
_GEN_FIELDS = {"bus", "p", "v_set", "qmin", "qmax"}
_LOAD_FIELDS = {"bus", "p0", "q0", "tp", "tq", "alpha_s", "alpha_t",
                "beta_s", "beta_t", "v0", "noise_channel", "ramped"}


def _parse_bus(entry: dict, source: str, where: str) -> Bus:
    _check_keys(entry, _BUS_FIELDS, source, where)
    kind_name = _get(entry, "kind", "string", source, where)
    try:
        kind = BusKind(kind_name)
    except ValueError:
        raise CaseFormatError(source, f"{where}.kind",
                              f"unknown bus kind {kind_name!r} "
                              "(expected slack, pv, or pq)")
    return Bus(id=_get(entry, "id", "integer", source, where),
               kind=kind,
               v0=float(_get(entry, "v0", "number", source, where, 1.0)),
               base_kv=float(_get(entry, "base_kv", "number", source, where,
                                  100.0)),
               pd=float(_get(entry, "pd", "number", source, where, 0.0)),
               qd=float(_get(entry, "qd", "number", source, where, 0.0)),
               ramp=_get(entry, "ramp", "boolean", source, where, False),
               shunt_g=float(_get(entry, "shunt_g", "number", source, where,
                                  0.0)),
               shunt_b=float(_get(entry, "shunt_b", "number", source, where,
                                  0.0)))


def _parse_branch(entry: dict, source: str, where: str) -> Branch:
    _check_keys(entry, _BRANCH_FIELDS, source, where)
    return Branch(from_bus=_get(entry, "from_bus", "integer", source, where),
                  to_bus=_get(entry, "to_bus", "integer", source, where),
                  g=float(_get(entry, "g", "number", source, where)),
                  b=float(_get(entry, "b", "number", source, where)),
                  b_shunt=float(_get(entry, "b_shunt", "number", source,
                                     where, 0.0)),
                  tap=float(_get(entry, "tap", "number", source, where, 1.0)))


def _parse_generator(entry: dict, source: str, where: str) -> Generator:
    _check_keys(entry, _GEN_FIELDS, source, where)
    return Generator(bus=_get(entry, "bus", "integer", source, where),
                     p=float(_get(entry, "p", "number", source, where, 0.0)),
                     v_set=float(_get(entry, "v_set", "number", source, where,
                                      1.0)),
                     qmin=float(_get(entry, "qmin", "number", source, where,
                                     -99.0)),
                     qmax=float(_get(entry, "qmax", "number", source, where,
                                     99.0)))


def _parse_load(entry: dict, source: str, where: str) -> LoadDynParams:
    _check_keys(entry, _LOAD_FIELDS, source, where)
    channel = entry.get("noise_channel")
    if channel is not None:
        channel = _get(entry, "noise_channel", "integer", source, where)
        if channel < 0:
            raise CaseFormatError(source, f"{where}.noise_channel",
                                  "must be non-negative")
    try:
        return LoadDynParams(
            bus=_get(entry, "bus", "integer", source, where),
            p0=float(_get(entry, "p0", "number", source, where)),
            q0=float(_get(entry, "q0", "number", source, where)),
            tp=float(_get(entry, "tp", "number", source, where, 1.0)),
            tq=float(_get(entry, "tq", "number", source, where, 1.0)),
            alpha_s=float(_get(entry, "alpha_s", "number", source, where,
                               0.0)),
            alpha_t=float(_get(entry, "alpha_t", "number", source, where,
                               2.0)),
            beta_s=float(_get(entry, "beta_s", "number", source, where, 0.0)),
            beta_t=float(_get(entry, "beta_t", "number", source, where, 2.0)),
            v0=float(_get(entry, "v0", "number", source, where, 1.0)),
            noise_channel=channel,
            ramped=_get(entry, "ramped", "boolean", source, where, False))
    except ValueError as exc:
        raise CaseFormatError(source, where, str(exc))


def _parse_section(data: dict, key: str, parser, source: str,
                   required: bool = True) -> list:
    raw = _get(data, key, "array", source, "",
               default=_MISSING if required else [])
    out = []
    for i, entry in enumerate(raw):
        where = f"{key}[{i}]"
        if not isinstance(entry, dict):
            raise CaseFormatError(source, where, "expected an object")
        out.append(parser(entry, source, where))
    return out


def _case_from_dict(data: dict, source: str) -> tuple[NetworkCase,
                                                      tuple[LoadDynParams, ...]]:
    _check_keys(data, {"format", "version", "name", "base_mva", "buses",
                       "branches", "generators", "loads"}, source, "<root>")
    name = _get(data, "name", "string", source, "")
    base_mva = float(_get(data, "base_mva", "number", source, ""))
    buses = _parse_section(data, "buses", _parse_bus, source)
    branches = _parse_section(data, "branches", _parse_branch, source)
    generators = _parse_section(data, "generators", _parse_generator, source,
                                required=False)
    loads = _parse_section(data, "loads", _parse_load, source, required=False)
    try:
        case = NetworkCase(name=name, base_mva=base_mva, buses=tuple(buses),
                           branches=tuple(branches),
                           generators=tuple(generators))
    except ValueError as exc:
        raise CaseFormatError(source, "<case>", str(exc))
    bus_ids = {b.id for b in case.buses}
    for i, load in enumerate(loads):
        if load.bus not in bus_ids:
            raise CaseFormatError(source, f"loads[{i}].bus",
                                  f"unknown bus {load.bus}")
    return case, tuple(loads)


def _bus_dict(b: Bus) -> dict:
    return {"id": b.id, "kind": b.kind.value, "v0": b.v0,
            "base_kv": b.base_kv, "pd": b.pd, "qd": b.qd, "ramp": b.ramp,
            "shunt_g": b.shunt_g, "shunt_b": b.shunt_b}


def _plain_dict(obj) -> dict:
    return {f.name: getattr(obj, f.name) for f in fields(obj)}


def case_to_dict(case: NetworkCase,
                 loads: tuple[LoadDynParams, ...] = ()) -> dict:
    return {
        "format": CASE_FORMAT,
        "version": FORMAT_VERSION,
        "name": case.name,
        "base_mva": case.base_mva,
        "buses": [_bus_dict(b) for b in case.buses],
        "branches": [_plain_dict(br) for br in case.branches],
        "generators": [_plain_dict(g) for g in case.generators],
        "loads": [_plain_dict(ld) for ld in loads],
    }


def canonical_case_text(case: NetworkCase,
                        loads: tuple[LoadDynParams, ...] = ()) -> str:
    """Serialize a case to the canonical format.

    Key order and indentation are fixed so that equal cases produce
    byte-identical text.
    """
    return json.dumps(case_to_dict(case, loads), indent=2) + "\n"


def write_case(path: str | Path, case: NetworkCase,
               loads: tuple[LoadDynParams, ...] = ()) -> CaseDocument:
    path = Path(path)
    path.write_text(canonical_case_text(case, loads))
    return CaseDocument(case=case, loads=tuple(loads), source=str(path),
                        fmt="canonical", checksum=sha256_file(path))


# ---------------------------------------------------------------------------
# matpower subset reader

_MP_BUS_COLS = ["bus_i", "type", "Pd", "Qd", "Gs", "Bs", "area", "Vm", "Va",
                "baseKV", "zone", "Vmax", "Vmin"]
_MP_GEN_COLS = ["bus", "Pg", "Qg", "Qmax", "Qmin", "Vg", "mBase", "status",
                "Pmax", "Pmin"]
_MP_BRANCH_COLS = ["fbus", "tbus", "r", "x", "b", "rateA", "rateB", "rateC",
                   "ratio", "angle", "status", "angmin", "angmax"]

_MP_BUS_USED = {0, 1, 2, 3, 4, 5, 7, 9}
_MP_GEN_USED = {0, 1, 3, 4, 5, 7}
_MP_BRANCH_USED = {0, 1, 2, 3, 4, 8, 10}

_MP_TYPES = {3: BusKind.SLACK, 2: BusKind.PV, 1: BusKind.PQ}


def _mp_strip(text: str) -> str:
    return "\n".join(line.split("%", 1)[0] for line in text.splitlines())


def _mp_matrix(text: str, name: str, source: str) -> list[list[float]]:
    m = re.search(rf"mpc\.{name}\s*=\s*\[(.*?)\];", text, re.DOTALL)
    if m is None:
        raise CaseFormatError(source, f"mpc.{name}", "matrix not found")
    rows = []
    for chunk in m.group(1).replace("\n", ";").split(";"):
        tokens = chunk.replace(",", " ").split()
        if not tokens:
            continue
        try:
            rows.append([float(tok) for tok in tokens])
        except ValueError as exc:
            raise CaseFormatError(source, f"mpc.{name}", str(exc))
    if not rows:
        raise CaseFormatError(source, f"mpc.{name}", "matrix is empty")
    return rows


def _mp_warn_ignored(name: str, n_cols: int, used: set[int],
                     col_names: list[str]) -> None:
    ignored = [col_names[i] if i < len(col_names) else f"col{i}"
               for i in range(n_cols) if i not in used]
    if ignored:
        warnings.warn(f"matpower {name} matrix: ignoring column(s) "
                      f"{', '.join(ignored)}", stacklevel=3)


def _parse_matpower(path: Path) -> tuple[NetworkCase,
                                         tuple[LoadDynParams, ...]]:
    source = str(path)
    text = _mp_strip(path.read_text())
    m = re.search(r"mpc\.baseMVA\s*=\s*([0-9.eE+-]+)\s*;", text)
    if m is None:
        raise CaseFormatError(source, "mpc.baseMVA", "scalar not found")
    base_mva = float(m.group(1))
    name_m = re.search(r"function\s+mpc\s*=\s*(\w+)", text)
    name = name_m.group(1) if name_m else path.stem

    bus_rows = _mp_matrix(text, "bus", source)
    gen_rows = _mp_matrix(text, "gen", source)
    branch_rows = _mp_matrix(text, "branch", source)
    _mp_warn_ignored("bus", max(len(r) for r in bus_rows), _MP_BUS_USED,
                     _MP_BUS_COLS)
    _mp_warn_ignored("gen", max(len(r) for r in gen_rows), _MP_GEN_USED,
                     _MP_GEN_COLS)
    _mp_warn_ignored("branch", max(len(r) for r in branch_rows),
                     _MP_BRANCH_USED, _MP_BRANCH_COLS)

    buses = []
    for i, row in enumerate(bus_rows):
        if len(row) < 10:
            raise CaseFormatError(source, f"mpc.bus row {i}",
                                  "expected at least 10 columns")
        type_code = int(row[1])
        if type_code not in _MP_TYPES:
            raise CaseFormatError(source, f"mpc.bus row {i}",
                                  f"unsupported bus type {type_code}")
        buses.append(Bus(id=int(row[0]), kind=_MP_TYPES[type_code],
                         v0=row[7], base_kv=row[9],
                         pd=row[2] / base_mva, qd=row[3] / base_mva,
                         shunt_g=row[4] / base_mva,
                         shunt_b=row[5] / base_mva))

    generators = []
    for i, row in enumerate(gen_rows):
        if len(row) < 8:
            raise CaseFormatError(source, f"mpc.gen row {i}",
                                  "expected at least 8 columns")
        if row[7] <= 0:
            warnings.warn(f"matpower gen row {i}: out of service, skipped",
                          stacklevel=2)
            continue
        generators.append(Generator(bus=int(row[0]), p=row[1] / base_mva,
                                    v_set=row[5], qmin=row[4] / base_mva,
                                    qmax=row[3] / base_mva))

    branches = []
    for i, row in enumerate(branch_rows):
        if len(row) < 5:
            raise CaseFormatError(source, f"mpc.branch row {i}",
                                  "expected at least 5 columns")
        if len(row) > 10 and row[10] <= 0:
            warnings.warn(f"matpower branch row {i}: out of service, skipped",
                          stacklevel=2)
            continue
        if len(row) > 9 and row[9] != 0.0:
            warnings.warn(f"matpower branch row {i}: phase shift ignored",
                          stacklevel=2)
        r, x = row[2], row[3]
        den = r * r + x * x
        if den == 0.0:
            raise CaseFormatError(source, f"mpc.branch row {i}",
                                  "zero series impedance")
        tap = row[8] if len(row) > 8 and row[8] != 0.0 else 1.0
        branches.append(Branch(from_bus=int(row[0]), to_bus=int(row[1]),
                               g=r / den, b=-x / den, b_shunt=row[4],
                               tap=tap))

    try:
        case = NetworkCase(name=name, base_mva=base_mva, buses=tuple(buses),
                           branches=tuple(branches),
                           generators=tuple(generators))
    except ValueError as exc:
        raise CaseFormatError(source, "<case>", str(exc))
    return case, ()


def parse_case(path: str | Path, fmt: str = "canonical") -> CaseDocument:
    """Read a case file.

    fmt is "canonical" or "matpower_subset".  The matpower reader imports
    the static network only; dynamic loads must come from an experiment
    file.
    """
    path = Path(path)
    if fmt == "canonical":
        data = _load_json(path, CASE_FORMAT)
        case, loads = _case_from_dict(data, str(path))
    elif fmt == "matpower_subset":
        case, loads = _parse_matpower(path)
    else:
        raise ValueError(f"unknown case format {fmt!r} "
                         "(expected canonical or matpower_subset)")
    return CaseDocument(case=case, loads=loads, source=str(path), fmt=fmt,
                        checksum=sha256_file(path))


def infer_case_format(path: str | Path) -> str:
    return "matpower_subset" if Path(path).suffix == ".m" else "canonical"


# ---------------------------------------------------------------------------
# experiment files

_SCHEDULE_FIELDS = {"delta_lambda", "interval", "speed_MW_per_s",
                    "lambda_max"}


def _resolve_case(ref: str, base_dir: Path) -> CaseDocument:
    """A case reference is either a shipped case name or a file path
    relative to the experiment file."""
    if ref in CASE_BUILDERS:
        case, loads, _ = CASE_BUILDERS[ref]()
        return CaseDocument(case=case, loads=loads, source=f"builtin:{ref}",
                            fmt="builtin", checksum="")
    path = Path(ref)
    if not path.is_absolute():
        path = base_dir / path
    return parse_case(path, infer_case_format(path))


def _parse_schedule(entry: dict, p0_mw: float, source: str,
                    where: str) -> RampSchedule:
    _check_keys(entry, _SCHEDULE_FIELDS, source, where)
    has_interval = "interval" in entry
    has_speed = "speed_MW_per_s" in entry
    if has_interval and has_speed:
        raise CaseFormatError(source, where, "interval and speed_MW_per_s "
                              "are mutually exclusive")
    if not (has_interval or has_speed):
        raise CaseFormatError(source, where, "one of interval or "
                              "speed_MW_per_s is required")
    delta = float(_get(entry, "delta_lambda", "number", source, where, 0.02))
    lam_max = float(_get(entry, "lambda_max", "number", source, where, 3.0))
    try:
        if has_interval:
            interval = float(_get(entry, "interval", "number", source, where))
            return RampSchedule(delta_lambda=delta, interval=interval,
                                lambda_max=lam_max)
        speed = float(_get(entry, "speed_MW_per_s", "number", source, where))
        if p0_mw <= 0:
            raise CaseFormatError(source, where, "speed_MW_per_s requires a "
                                  "case with ramped nominal load")
        return RampSchedule.from_speed(speed, p0_mw, delta_lambda=delta,
                                       lambda_max=lam_max)
    except ValueError as exc:
        raise CaseFormatError(source, where, str(exc))


def parse_experiment(path: str | Path) -> ExperimentFile:
    path = Path(path)
    source = str(path)
    data = _load_json(path, EXPERIMENT_FORMAT)
    _check_keys(data, {"format", "version", "name", "case", "ou", "loads",
                       "sweep", "detector", "integrator", "seed", "out"},
                source, "<root>")

    name = _get(data, "name", "string", source, "", path.stem)
    case_ref = _get(data, "case", "string", source, "")
    doc = _resolve_case(case_ref, path.parent)
    bus_ids = {b.id for b in doc.case.buses}

    if "loads" in data:
        loads = tuple(_parse_section(data, "loads", _parse_load, source))
        for i, load in enumerate(loads):
            if load.bus not in bus_ids:
                raise CaseFormatError(source, f"loads[{i}].bus",
                                      f"unknown bus {load.bus}")
    else:
        loads = doc.loads
    if not loads:
        raise CaseFormatError(source, "loads", "no dynamic loads: the case "
                              "ships none and the experiment defines none")

    ou_data = _get(data, "ou", "object", source, "")
    _check_keys(ou_data, {"alpha", "beta"}, source, "ou")
    alpha = _get(ou_data, "alpha", "array", source, "ou")
    beta = _get(ou_data, "beta", "array", source, "ou", None)
    try:
        ou = OUParams(alpha=np.asarray(alpha, dtype=float),
                      beta=None if beta is None
                      else np.asarray(beta, dtype=float))
    except ValueError as exc:
        raise CaseFormatError(source, "ou", str(exc))
    channels = [ld.noise_channel for ld in loads
                if ld.noise_channel is not None]
    if channels and max(channels) + 1 > ou.k:
        raise CaseFormatError(source, "ou.alpha",
                              f"{max(channels) + 1} noise channel(s) in use "
                              f"but only {ou.k} OU channel(s) defined")

    try:
        model = GridModel(doc.case, loads)
    except ValueError as exc:
        raise CaseFormatError(source, "loads", str(exc))
    p0_mw = model.ramped_p0() * doc.case.base_mva

    sweep = _get(data, "sweep", "object", source, "")
    _check_keys(sweep, {"sigma_list", "schedules", "n_paths"}, source,
                "sweep")
    sigma_raw = _get(sweep, "sigma_list", "array", source, "sweep")
    if not sigma_raw:
        raise CaseFormatError(source, "sweep.sigma_list", "must be non-empty")
    sigma_list = []
    for i, s in enumerate(sigma_raw):
        if isinstance(s, bool) or not isinstance(s, (int, float)) or s < 0:
            raise CaseFormatError(source, f"sweep.sigma_list[{i}]",
                                  "expected a non-negative number")
        sigma_list.append(float(s))
    sched_raw = _get(sweep, "schedules", "array", source, "sweep")
    if not sched_raw:
        raise CaseFormatError(source, "sweep.schedules", "must be non-empty")
    schedules = []
    for i, entry in enumerate(sched_raw):
        where = f"sweep.schedules[{i}]"
        if not isinstance(entry, dict):
            raise CaseFormatError(source, where, "expected an object")
        schedules.append(_parse_schedule(entry, p0_mw, source, where))
    n_paths = _get(sweep, "n_paths", "integer", source, "sweep", 1000)
    if n_paths < 1:
        raise CaseFormatError(source, "sweep.n_paths", "must be >= 1")

    det_data = _get(data, "detector", "object", source, "", {})
    _check_keys(det_data, {"rcond_threshold", "check_every"}, source,
                "detector")
    try:
        detector = DetectorConfig(
            rcond_threshold=float(_get(det_data, "rcond_threshold", "number",
                                       source, "detector", 0.1)),
            check_every=_get(det_data, "check_every", "integer", source,
                             "detector", 1))
    except ValueError as exc:
        raise CaseFormatError(source, "detector", str(exc))

    int_data = _get(data, "integrator", "object", source, "")
    _check_keys(int_data, {"horizon", "dt", "newton_tol", "max_newton_iter",
                           "record_stride", "monitor_buses"}, source,
                "integrator")
    monitor = _get(int_data, "monitor_buses", "array", source, "integrator",
                   None)
    try:
        integrator = IntegratorConfig(
            horizon=float(_get(int_data, "horizon", "number", source,
                               "integrator")),
            dt=float(_get(int_data, "dt", "number", source, "integrator",
                          0.05)),
            newton_tol=float(_get(int_data, "newton_tol", "number", source,
                                  "integrator", 1e-8)),
            max_newton_iter=_get(int_data, "max_newton_iter", "integer",
                                 source, "integrator", 20),
            record_stride=_get(int_data, "record_stride", "integer", source,
                               "integrator", 1),
            monitor_buses=None if monitor is None else tuple(monitor))
    except ValueError as exc:
        raise CaseFormatError(source, "integrator", str(exc))
    if integrator.monitor_buses is not None:
        for i, b in enumerate(integrator.monitor_buses):
            if b not in bus_ids:
                raise CaseFormatError(source,
                                      f"integrator.monitor_buses[{i}]",
                                      f"unknown bus {b}")

    seed = _get(data, "seed", "integer", source, "", 0)
    out_dir = _get(data, "out", "string", source, "", None)

    return ExperimentFile(name=name, case=doc, loads=loads, ou=ou,
                          sigma_list=tuple(sigma_list),
                          schedules=tuple(schedules), n_paths=n_paths,
                          seed=seed, detector=detector,
                          integrator=integrator, out_dir=out_dir,
                          source=source, checksum=sha256_file(path))


def experiment_spec(exp: ExperimentFile) -> ExperimentSpec:
    """Assemble the Monte Carlo sweep spec from a parsed experiment."""
    return ExperimentSpec(case=exp.case.case, loads=exp.loads, ou=exp.ou,
                          sigma_list=exp.sigma_list,
                          schedule_list=exp.schedules,
                          integrator=exp.integrator, n_paths=exp.n_paths,
                          seed_base=exp.seed, detector=exp.detector,
                          name=exp.name)


def experiment_config(exp: ExperimentFile) -> dict:
    """The fully resolved configuration, defaults included.

    This dict is what gets logged and hashed; it deliberately excludes
    anything that cannot affect the numbers (worker count, output paths).
    """
    model = GridModel(exp.case.case, exp.loads)
    p0_mw = model.ramped_p0() * exp.case.case.base_mva
    return {
        "name": exp.name,
        "case": {"name": exp.case.case.name, "source": exp.case.source,
                 "format": exp.case.fmt, "checksum": exp.case.checksum},
        "loads": [_plain_dict(ld) for ld in exp.loads],
        "ou": {"alpha": list(exp.ou.alpha), "beta": list(exp.ou.beta)},
        "sigma_list": list(exp.sigma_list),
        "schedules": [{"delta_lambda": s.delta_lambda,
                       "interval": s.interval, "lambda_max": s.lambda_max,
                       "speed_MW_per_s": s.speed_mw_per_s(p0_mw)}
                      for s in exp.schedules],
        "n_paths": exp.n_paths,
        "seed": exp.seed,
        "detector": {"rcond_threshold": exp.detector.rcond_threshold,
                     "check_every": exp.detector.check_every},
        "integrator": {"horizon": exp.integrator.horizon,
                       "dt": exp.integrator.dt,
                       "newton_tol": exp.integrator.newton_tol,
                       "max_newton_iter": exp.integrator.max_newton_iter,
                       "record_stride": exp.integrator.record_stride,
                       "monitor_buses":
                           None if exp.integrator.monitor_buses is None
                           else list(exp.integrator.monitor_buses)},
    }


def config_hash(config: dict) -> str:
    return hashlib.sha256(
        json.dumps(config, sort_keys=True).encode()).hexdigest()
