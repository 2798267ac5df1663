"""Batch front end: ``slq <command> --config <file> [--out DIR] [--format csv|json] [--jobs N]``.

A config is an INI file with one section per model plus optional ``[sweep]``,
``[run]`` and ``[output]`` sections.  Parsing is strict: unknown sections or
keys stop the run with exit code 2 before anything is computed.  The schema
of every section is the ``SCHEMAS`` table below and is documented in the
README.

Exit codes: 0 success, 2 invalid input (nothing written), 3 numerical abort
(whatever was produced is written with a ``.partial`` suffix).
"""
from __future__ import annotations

import argparse
import configparser
import csv
import dataclasses
import json
import math
import re
import sys
from concurrent.futures import ProcessPoolExecutor
from fractions import Fraction
from itertools import product
from pathlib import Path

import numpy as np

from . import bcs, kernels, laser, qhe
from .errors import NumericalAbort, ValidationError
from .lindblad import EIG_TOL, FOCK_TOL, TRACE_TOL, apply_heisenberg, evolve, format_float, superoperator
from .operators import OperatorMatrix, boson_ladder, embed_site_operator, fermion_site_pair, identity, pauli

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_ABORT = 3

# full superoperator comparison up to this Hilbert-space dimension
SUPEROPERATOR_DIM = 48


# value parsers ------------------------------------------------------------------

def _real(text):
    text = text.strip()
    if re.fullmatch(r"[+-]?\d+/\d+", text):
        return float(Fraction(text))
    return float(text)


def _exact(text):
    """Integers and ``p/q`` stay exact, anything else is a float."""
    text = text.strip()
    if re.fullmatch(r"[+-]?\d+", text):
        return int(text)
    if re.fullmatch(r"[+-]?\d+/\d+", text):
        return Fraction(text)
    return float(text)


def _length(text):
    """``2pi``, ``1/2 pi``, ``3*pi`` give an exact multiple of pi."""
    m = re.fullmatch(r"\s*([+-]?\d+(?:/\d+)?)?\s*\*?\s*pi\s*", text)
    if m:
        return qhe.PiMultiple(Fraction(m.group(1) or 1))
    return _exact(text)


def _integer(text):
    return int(text.strip())


def _boolean(text):
    states = configparser.ConfigParser.BOOLEAN_STATES
    key = text.strip().lower()
    if key not in states:
        raise ValueError(f"not a boolean: {text!r}")
    return states[key]


def _complex(text):
    return complex(text.replace(" ", ""))


def _optional_real(text):
    return None if text.strip().lower() in ("", "none") else _real(text)


def _list_of(item):
    def parse(text):
        return tuple(item(part) for part in text.split(",") if part.strip())
    parse.item = item
    return parse


def _levels(text):
    """``n:p`` pairs separated by commas, e.g. ``0:0, 0:-1``."""
    out = []
    for part in text.split(","):
        if not part.strip():
            continue
        n, p = part.split(":")
        out.append((int(n), int(p)))
    return tuple(out)


def _choice(*options):
    def parse(text):
        value = text.strip()
        if value not in options:
            raise ValueError(f"expected one of {', '.join(options)}")
        return value
    return parse


def _path(text):
    return text.strip()


REQUIRED = object()
NUMERIC_PARSERS = (_real, _exact, _length, _integer)

QHE_MODEL_KEYS = ("E", "B", "L_x", "e", "m", "c", "hbar", "n_max", "p_max", "alpha_c",
                  "h_equals_hbar", "ftc_tol", "higher_levels")

QHE_SECTION = {
    "E": (_exact, REQUIRED),
    "B": (_exact, REQUIRED),
    "L_x": (_length, REQUIRED),
    "e": (_exact, 1),
    "m": (_exact, 1),
    "c": (_exact, 1),
    "hbar": (_exact, 1),
    "n_max": (_integer, 0),
    "p_max": (_integer, 1),
    "alpha_c": (_real, 1.0),
    "h_equals_hbar": (_boolean, False),
    "ftc_tol": (_real, 1e-9),
    "higher_levels": (_boolean, False),
    "occupied": (_levels, REQUIRED),
    "kernels": (_choice("table", "form-factor"), "table"),
    "lambda_table": (_path, None),
    "sound_speed": (_real, 1.0),
    "k_max": (_real, 8.0),
    "k_points": (_integer, 800),
}

KERNEL_SECTION = {
    "density": (_path, REQUIRED),
    "resonance": (_real, REQUIRED),
    "orientation": (_integer, 1),
    "brute": (_boolean, False),
    "brute_etas": (_list_of(_real), ()),
}

GAP_SECTION = {
    "g": (_real, REQUIRED),
    "beta": (_real, REQUIRED),
}

PHASE_SECTION = {
    "g": (_real, None),
    "beta": (_real, None),
}

BCS_DYNAMICS_SECTION = {
    "eps_tilde": (_real, REQUIRED),
    "g": (_real, REQUIRED),
    "beta": (_real, REQUIRED),
    "S0": (_real, REQUIRED),
    "SpSm": (_real, REQUIRED),
}

SPIN_RUN_SECTION = {
    "t_final": (_real, REQUIRED),
    "dt": (_real, REQUIRED),
    "sigma_plus": (_complex, REQUIRED),
    "sigma_0": (_real, REQUIRED),
}

AS_SECTION = {
    "N": (_integer, 0),
    "n_modes": (_integer, 1),
    "eps": (_real, REQUIRED),
    "gamma1": (_real, REQUIRED),
    "gamma2": (_real, REQUIRED),
    "eta": (_real, REQUIRED),
    "omega": (_list_of(_real), (1.0,)),
    "kappa": (_list_of(_real), (0.5,)),
    "lam": (_list_of(_real), (0.0,)),
    "fock_cutoff": (_integer, 6),
}

HL_SECTION = {
    "N": (_integer, 0),
    "n_modes": (_integer, 1),
    "gamma_g": (_list_of(_complex), REQUIRED),
    "gamma_h1": (_complex, REQUIRED),
    "gamma_h2": (_complex, REQUIRED),
    "lam": (_list_of(_real), (0.0,)),
    "fock_cutoff": (_integer, 6),
    "rwa": (_boolean, True),
    "beta": (_real, 0.0),
    "omega_r": (_optional_real, None),
    "mu": (_optional_real, None),
}

DHL_SECTION = {
    "N": (_integer, 0),
    "n_modes": (_integer, 1),
    "gamma_g": (_list_of(_complex), REQUIRED),
    "gamma_b_plus": (_complex, REQUIRED),
    "gamma_b_minus": (_complex, REQUIRED),
    "gamma_c_plus": (_complex, REQUIRED),
    "gamma_c_minus": (_complex, REQUIRED),
    "lam": (_list_of(_real), (0.0,)),
    "fock_cutoff": (_integer, 6),
}

LASER_RUN_SECTION = {
    "t_final": (_real, REQUIRED),
    "dt": (_real, REQUIRED),
    "sample_every": (_integer, 1),
    "excited_population": (_real, 0.0),
    "trace_tol": (_real, TRACE_TOL),
    "eig_tol": (_real, EIG_TOL),
    "fock_tol": (_real, FOCK_TOL),
}

SWEEP_SECTION = {
    "axis": (_path, REQUIRED),
    "values": (_path, None),
    "start": (_real, None),
    "stop": (_real, None),
    "num": (_integer, None),
    "axis2": (_path, None),
    "values2": (_path, None),
    "start2": (_real, None),
    "stop2": (_real, None),
    "num2": (_integer, None),
}

OUTPUT_SECTION = {
    "figures": (_boolean, True),
}

# command -> {section: (schema, required?)}; the first entry is the model section
SCHEMAS = {
    "gamma": {"kernels": (KERNEL_SECTION, True), "sweep": (SWEEP_SECTION, False)},
    "qhe-transport": {"qhe": (QHE_SECTION, True)},
    "qhe-sweep": {"qhe": (QHE_SECTION, True), "sweep": (SWEEP_SECTION, True)},
    "laser-as": {"as": (AS_SECTION, True), "run": (LASER_RUN_SECTION, True)},
    "laser-match": {"hl": (HL_SECTION, True), "run": (LASER_RUN_SECTION, False)},
    "laser-dhl": {"dhl": (DHL_SECTION, True), "run": (LASER_RUN_SECTION, False)},
    "bcs-gap": {"bcs": (GAP_SECTION, True), "sweep": (SWEEP_SECTION, False)},
    "bcs-phase": {"bcs": (PHASE_SECTION, False), "sweep": (SWEEP_SECTION, True)},
    "bcs-dynamics": {"bcs": (BCS_DYNAMICS_SECTION, True), "run": (SPIN_RUN_SECTION, True)},
}
for _sections in SCHEMAS.values():
    _sections["output"] = (OUTPUT_SECTION, False)


# config loading ---------------------------------------------------------------

@dataclasses.dataclass
class Scenario:
    command: str
    sections: dict
    base_dir: Path

    @property
    def model_section(self):
        return next(iter(SCHEMAS[self.command]))

    @property
    def model(self) -> dict:
        return self.sections[self.model_section]


def _parse_section(name, raw: dict, schema: dict) -> dict:
    unknown = sorted(set(raw) - set(schema))
    if unknown:
        raise ValidationError(f"unknown keys in [{name}]: {', '.join(unknown)}")
    out = {}
    missing = []
    for key, (parse, default) in schema.items():
        if key in raw:
            try:
                out[key] = parse(raw[key])
            except (ValueError, TypeError, ZeroDivisionError) as exc:
                raise ValidationError(f"[{name}] {key} = {raw[key]!r}: {exc}") from None
        elif default is REQUIRED:
            missing.append(key)
        else:
            out[key] = default
    if missing:
        raise ValidationError(f"missing keys in [{name}]: {', '.join(missing)}")
    return out


def load_scenario(command: str, path) -> Scenario:
    path = Path(path)
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str  # keys are case sensitive (E and e differ)
    try:
        with open(path) as fh:
            parser.read_file(fh)
    except OSError as exc:
        raise ValidationError(f"cannot read config {path}: {exc}") from None
    except configparser.Error as exc:
        raise ValidationError(f"malformed config: {exc}") from None
    if parser.defaults():
        raise ValidationError("keys outside a section: " + ", ".join(sorted(parser.defaults())))
    schemas = SCHEMAS[command]
    unknown = sorted(set(parser.sections()) - set(schemas))
    if unknown:
        raise ValidationError(f"unknown sections for {command}: {', '.join(unknown)}")
    sections = {}
    for name, (schema, required) in schemas.items():
        if parser.has_section(name):
            sections[name] = _parse_section(name, dict(parser.items(name)), schema)
        elif required:
            raise ValidationError(f"missing section [{name}]")
        elif any(default is REQUIRED for _, default in schema.values()):
            sections[name] = None
        else:
            sections[name] = _parse_section(name, {}, schema)
    return Scenario(command, sections, path.resolve().parent)


def _resolve(scn: Scenario, relative):
    p = Path(relative)
    return str(p if p.is_absolute() else scn.base_dir / p)


# output helpers -----------------------------------------------------------------

def format_value(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, str):
        return v
    return format_float(v)


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, (complex, np.complexfloating)):
        return {"re": float(v.real), "im": float(v.imag)}
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (int, np.integer)):
        return int(v)
    if isinstance(v, (float, np.floating, Fraction, qhe.PiMultiple)):
        return float(v)
    return v


def dump_json(obj, indent=0) -> str:
    """JSON text with every float written as ``%.16e``."""
    pad = "  " * (indent + 1)
    end = "  " * indent
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(k)}: {dump_json(v, indent + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, list):
        if not obj:
            return "[]"
        return "[\n" + ",\n".join(pad + dump_json(v, indent + 1) for v in obj) + "\n" + end + "]"
    if isinstance(obj, float):
        if math.isnan(obj):
            return "NaN"
        if math.isinf(obj):
            return "Infinity" if obj > 0 else "-Infinity"
        return format_float(obj)
    return json.dumps(obj)


def write_table(path, columns, rows, fmt):
    if fmt == "csv":
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(columns)
            for row in rows:
                writer.writerow([format_value(row.get(c)) for c in columns])
    else:
        doc = {"columns": list(columns), "rows": [{c: _jsonable(row.get(c)) for c in columns} for row in rows]}
        Path(path).write_text(dump_json(doc) + "\n")


def _flatten(prefix, v, out):
    if isinstance(v, dict):
        for k, x in v.items():
            _flatten(f"{prefix}.{k}" if prefix else str(k), x, out)
    elif isinstance(v, (list, tuple)):
        for i, x in enumerate(v):
            _flatten(f"{prefix}.{i}", x, out)
    elif isinstance(v, complex):
        out.append((prefix + ".re", v.real))
        out.append((prefix + ".im", v.imag))
    else:
        out.append((prefix, v))


def write_report(path, report: dict, fmt):
    if fmt == "json":
        Path(path).write_text(dump_json(_jsonable(report)) + "\n")
    else:
        pairs = []
        _flatten("", report, pairs)
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["key", "value"])
            for key, value in pairs:
                writer.writerow([key, format_value(value)])


class PartialAbort(Exception):
    """A numerical abort together with the artifacts produced before it."""

    def __init__(self, cause: NumericalAbort, artifacts):
        super().__init__(str(cause))
        self.artifacts = artifacts


# sweeps -------------------------------------------------------------------------

def _axis_values(sweep, suffix, parse):
    values = sweep["values" + suffix]
    grid = (sweep["start" + suffix], sweep["stop" + suffix], sweep["num" + suffix])
    has_grid = any(v is not None for v in grid)
    if (values is None) == (not has_grid):
        raise ValidationError(f"[sweep] give either values{suffix} or start{suffix}/stop{suffix}/num{suffix}")
    if values is not None:
        try:
            return [parse(part) for part in values.split(",") if part.strip()]
        except (ValueError, TypeError, ZeroDivisionError) as exc:
            raise ValidationError(f"[sweep] values{suffix}: {exc}") from None
    if any(v is None for v in grid):
        raise ValidationError(f"[sweep] start{suffix}, stop{suffix} and num{suffix} go together")
    start, stop, num = grid
    if num < 0:
        raise ValidationError("[sweep] num must be >= 0")
    return [float(v) for v in np.linspace(start, stop, num)]


def sweep_points(scn: Scenario):
    """Grid points as ``(axes, overrides)``, sorted by grid value."""
    sweep = scn.sections["sweep"]
    schema = SCHEMAS[scn.command][scn.model_section][0]
    axes = [sweep["axis"]]
    if sweep["axis2"] is not None:
        axes.append(sweep["axis2"])
    elif any(sweep[k] is not None for k in ("values2", "start2", "stop2", "num2")):
        raise ValidationError("[sweep] second-axis values given without axis2")
    if len(set(axes)) != len(axes):
        raise ValidationError("[sweep] the two axes must differ")
    grids = []
    for axis, suffix in zip(axes, ("", "2")):
        if axis not in schema:
            raise ValidationError(f"[sweep] axis {axis!r} is not a parameter of [{scn.model_section}]")
        parse = schema[axis][0]
        if parse not in NUMERIC_PARSERS:
            raise ValidationError(f"[sweep] axis {axis!r} is not numeric")
        if parse is _integer and sweep["values" + suffix] is None:
            raise ValidationError(f"[sweep] integer axis {axis!r} needs explicit values{suffix}")
        grids.append(_axis_values(sweep, suffix, parse))
    points = [dict(zip(axes, combo)) for combo in product(*grids)]
    points.sort(key=lambda pt: tuple(float(pt[a]) for a in axes))
    return axes, points


def _run_point(command, params):
    """Evaluate one row; errors become a ``nan`` row with an error code."""
    try:
        return TABLE_COMMANDS[command].row(params), 0
    except ValidationError:
        return None, EXIT_INVALID
    except (NumericalAbort, ArithmeticError):
        return None, EXIT_ABORT


def _map(command, param_list, jobs):
    if jobs > 1 and len(param_list) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(_run_point, [command] * len(param_list), param_list))
    return [_run_point(command, p) for p in param_list]


# table commands -------------------------------------------------------------------

GAMMA_COLUMNS = ["resonance", "orientation", "gamma_re", "gamma_im"]
BRUTE_COLUMNS = ["brute_re", "brute_im", "brute_converged"]
QHE_COLUMNS = ["B", "E", "ratio", "ftc", "Theta_x", "Theta_y", "sigma_xx", "sigma_xy", "rho_xx", "rho_xy"]
BCS_COLUMNS = ["g", "beta", "omega", "superconducting"]


def _default_etas(density):
    h = float(np.min(np.diff(density.grid))) if density.grid.size > 1 else 1.0
    return tuple(h * np.array([0.05, 0.025, 0.0125, 0.00625]))


def gamma_row(params):
    density = kernels.load_density(params["density"])
    g = kernels.gamma(density, params["resonance"], params["orientation"])
    row = {"resonance": float(params["resonance"]), "orientation": params["orientation"],
           "gamma_re": g.real, "gamma_im": g.imag}
    if params["brute"]:
        etas = params["brute_etas"] or _default_etas(density)
        b = kernels.gamma_brute(density, params["resonance"], params["orientation"], etas)
        row.update(brute_re=b.value.real, brute_im=b.value.imag, brute_converged=b.converged)
    return row


def _validate_gamma(params):
    kernels.load_density(params["density"])
    if params["orientation"] not in (1, -1):
        raise ValidationError("orientation must be +1 or -1")


def landau_config(params) -> qhe.LandauConfig:
    return qhe.LandauConfig(**{k: params[k] for k in QHE_MODEL_KEYS})


def qhe_kernels(cfg, params):
    if params["kernels"] == "table":
        if params["lambda_table"] is None:
            raise ValidationError("[qhe] kernels = table needs lambda_table")
        table = qhe.load_lambda_table(params["lambda_table"])
        table.check_levels(cfg)
        return qhe.TableKernels(table, cfg)
    speed = params["sound_speed"]
    if not speed > 0 or not params["k_max"] > 0.02 or params["k_points"] < 2:
        raise ValidationError("form-factor kernels need sound_speed > 0, k_max > 0.02, k_points >= 2")
    k_grid = np.linspace(0.02, params["k_max"], params["k_points"]) / cfg.magnetic_length
    return qhe.FormFactorKernels(cfg, dispersion=lambda k: speed * k, k_grid=k_grid)


def _qhe_inputs(params):
    cfg = landau_config(params)
    occ = qhe.OccupationSet(params["occupied"])
    qhe._check_occupation(cfg, occ)
    return cfg, occ, qhe_kernels(cfg, params)


def qhe_row(params):
    cfg, occ, ker = _qhe_inputs(params)
    res = qhe.transport(cfg, occ, ker)
    return {"B": float(cfg.B), "E": float(cfg.E), "ratio": float(res.ratio), "ftc": res.ftc_satisfied,
            "Theta_x": res.Theta_x, "Theta_y": res.Theta_y,
            "sigma_xx": res.sigma[0, 0], "sigma_xy": res.sigma[0, 1],
            "rho_xx": res.rho[0, 0], "rho_xy": res.rho[0, 1]}


def gap_row(params):
    sol = bcs.gap_solve(params["g"], params["beta"])
    return {"g": float(params["g"]), "beta": float(params["beta"]), "omega": sol.omega,
            "superconducting": sol.superconducting}


def _validate_gap(params):
    bcs._check_gap_inputs(params["g"], params["beta"])


def _validate_phase(params, axes):
    if set(axes) != {"g", "beta"}:
        raise ValidationError("bcs-phase sweeps over both g and beta")


@dataclasses.dataclass(frozen=True)
class TableCommand:
    columns: list
    row: object
    validate: object


TABLE_COMMANDS = {
    "gamma": TableCommand(GAMMA_COLUMNS, gamma_row, _validate_gamma),
    "qhe-transport": TableCommand(QHE_COLUMNS, qhe_row, lambda p: _qhe_inputs(p)),
    "qhe-sweep": TableCommand(QHE_COLUMNS, qhe_row, lambda p: _qhe_inputs(p)),
    "bcs-gap": TableCommand(BCS_COLUMNS, gap_row, _validate_gap),
    "bcs-phase": TableCommand(BCS_COLUMNS, gap_row, None),
}


def _model_params(scn):
    params = dict(scn.model)
    for key in ("density", "lambda_table"):
        if params.get(key) is not None:
            params[key] = _resolve(scn, params[key])
    return params


def prepare_table(scn: Scenario):
    cmd = TABLE_COMMANDS[scn.command]
    params = _model_params(scn)
    columns = list(cmd.columns)
    if scn.command == "gamma" and params["brute"]:
        columns += BRUTE_COLUMNS
    if scn.sections.get("sweep") is None:
        cmd.validate(params)
        return {"params": params, "columns": columns, "axes": None, "points": [params]}
    axes, points = sweep_points(scn)
    if scn.command == "bcs-phase":
        _validate_phase(params, axes)
    else:
        # the base scenario as written must be valid; bad grid points only give nan rows
        cmd.validate(params)
    columns = [a for a in axes if a not in columns] + columns + ["error_code"]
    return {"params": params, "columns": columns, "axes": axes,
            "points": [{**params, **pt} for pt in points]}


def run_table(scn: Scenario, plan, fmt, jobs):
    stem = scn.command
    columns, axes = plan["columns"], plan["axes"]
    if axes is None:
        rows = [TABLE_COMMANDS[scn.command].row(plan["points"][0])]
    else:
        rows = []
        for params, (row, code) in zip(plan["points"], _map(scn.command, plan["points"], jobs)):
            if row is None:
                row = {c: math.nan for c in columns}
                for key in (*axes, "g", "beta", "B", "E", "resonance"):
                    if key in columns and params.get(key) is not None:
                        row[key] = _grid_value(params[key])
            else:
                row = {**row, **{a: _grid_value(params[a]) for a in axes}}
            row["error_code"] = code
            rows.append(row)
    artifacts = [(f"{stem}.{fmt}", lambda p: write_table(p, columns, rows, fmt))]
    if scn.command == "bcs-phase":
        boundary = _phase_boundary(rows)
        artifacts.append((f"{stem}_boundary.{fmt}",
                          lambda p: write_table(p, ["g", "beta_c"], boundary, fmt)))
    return artifacts, _table_figures(scn, rows, axes)


def _grid_value(v):
    return v if isinstance(v, int) and not isinstance(v, bool) and not isinstance(v, Fraction) else float(v)


def _phase_boundary(rows):
    """Critical ``beta`` for every ``g`` on the grid, from the located edge."""
    out = []
    for g in sorted({float(r["g"]) for r in rows if r.get("g") is not None}):
        try:
            beta_c = 1.0 / bcs.critical_temperature(g)
        except (ValidationError, NumericalAbort):
            beta_c = math.nan
        out.append({"g": g, "beta_c": beta_c})
    return out


def _table_figures(scn, rows, axes):
    from . import plotting

    if not rows:
        return []
    stem = scn.command
    if scn.command == "bcs-phase":
        return [(f"{stem}.png", lambda p: plotting.plot_phase_diagram(rows, p))]
    if axes is None:
        return []
    axis = axes[0]
    if scn.command == "qhe-sweep":
        return [(f"{stem}.png", lambda p: plotting.plot_qhe_sweep(rows, axis, p))]
    if scn.command == "bcs-gap":
        return [(f"{stem}.png", lambda p: plotting.plot_lines(rows, axis, ["omega"], p))]
    if scn.command == "gamma":
        return [(f"{stem}.png", lambda p: plotting.plot_lines(rows, axis, ["gamma_re", "gamma_im"], p))]
    return []


# laser commands -------------------------------------------------------------------

def _site_vector(kind, excited):
    up, down = math.sqrt(excited), math.sqrt(1.0 - excited)
    if kind == "spin":
        return np.array([up, down], dtype=complex)
    return np.array([0.0, up, down, 0.0], dtype=complex)  # |+> is the excited level


def initial_state(space, kind, N, n_modes, cutoff, excited) -> OperatorMatrix:
    """Every site in the same pure state, every mode in its vacuum."""
    psi = np.array([1.0 + 0j])
    for _ in range(2 * N + 1):
        psi = np.kron(psi, _site_vector(kind, excited))
    vac = np.zeros(cutoff, dtype=complex)
    vac[0] = 1.0
    for _ in range(n_modes):
        psi = np.kron(psi, vac)
    return OperatorMatrix(space, np.outer(psi, psi.conj()))


def laser_observables(space, kind, N, n_modes, cutoff) -> dict:
    if kind == "spin":
        z_local = pauli()[2]
    else:
        bp, bm = fermion_site_pair()
        z_local = bp.dag() @ bp - bm.dag() @ bm
    sites = 2 * N + 1
    z = embed_site_operator(space, 0, z_local)
    for s in range(1, sites):
        z = z + embed_site_operator(space, s, z_local)
    ops = {"sigma_z": z * (1.0 / sites)}
    if n_modes:
        a, ad = boson_ladder(cutoff)
        for j in range(n_modes):
            ops[f"n_{j}"] = embed_site_operator(space, sites + j, ad @ a)
    return ops


def _observable_fns(ops):
    return {name: (lambda rho, o=op.entries: float(np.real(np.einsum("ij,ji->", rho, o))))
            for name, op in ops.items()}


def _validate_run(run):
    if not run["dt"] > 0 or run["t_final"] < 0:
        raise ValidationError("[run] needs dt > 0 and t_final >= 0")
    if run["sample_every"] < 1:
        raise ValidationError("[run] sample_every must be >= 1")
    if not 0 <= run["excited_population"] <= 1:
        raise ValidationError("[run] excited_population must lie in [0, 1]")
    steps = round(run["t_final"] / run["dt"])
    if abs(steps * run["dt"] - run["t_final"]) > 1e-9 * max(1.0, run["t_final"]):
        raise ValidationError("[run] t_final must be an integer multiple of dt")


class LaserRun:
    """Generator, initial state and observables for one trajectory."""

    def __init__(self, label, gen, kind, N, n_modes, cutoff, run):
        self.label = label
        self.gen = gen
        self.run = run
        self.rho0 = initial_state(gen.space, kind, N, n_modes, cutoff, run["excited_population"])
        self.ops = laser_observables(gen.space, kind, N, n_modes, cutoff)

    def evolve(self):
        r = self.run
        return evolve(self.gen, self.rho0, r["t_final"], r["dt"], sample_every=r["sample_every"],
                      trace_tol=r["trace_tol"], eig_tol=r["eig_tol"], fock_tol=r["fock_tol"])


def _evolve_all(command, runs: list[LaserRun]):
    """Evolve every run; on abort the finished and partial trajectories are kept."""
    done = []
    for r in runs:
        try:
            done.append((r, r.evolve()))
        except NumericalAbort as exc:
            artifacts = [_trajectory_artifact(command, rr, tr) for rr, tr in done]
            if exc.partial is not None:
                artifacts.append(_trajectory_artifact(command, r, exc.partial))
            raise PartialAbort(exc, artifacts) from exc
    return done


def _trajectory_name(command, run):
    return f"{command}_{run.label}_trajectory.csv"


def _trajectory_artifact(command, run, traj):
    fns = _observable_fns(run.ops)
    return (_trajectory_name(command, run), lambda p: traj.write_csv(p, fns))


def _sigma_z(run, traj):
    return np.real(traj.expectation(run.ops["sigma_z"]))


def _params_dict(p):
    return {f.name: getattr(p, f.name) for f in dataclasses.fields(p)}


def _unitality(gen):
    return apply_heisenberg(gen, identity(gen.space)).norm()


def generator_difference(gen_a, gen_b) -> float:
    """Largest entry of the difference of two generators.

    Full superoperators for small spaces; above ``SUPEROPERATOR_DIM`` the
    comparison runs over a fixed set of matrix units.
    """
    dim = gen_a.space.dim
    if dim <= SUPEROPERATOR_DIM:
        return float(np.max(np.abs(superoperator(gen_a) - superoperator(gen_b))))
    worst = 0.0
    for k in range(SUPEROPERATOR_DIM * SUPEROPERATOR_DIM):
        i, j = k % dim, (7 * k + k // dim) % dim
        unit = np.zeros((dim, dim), dtype=complex)
        unit[i, j] = 1.0
        x = OperatorMatrix(gen_a.space, unit)
        diff = apply_heisenberg(gen_a, x) - apply_heisenberg(gen_b, x)
        worst = max(worst, float(np.max(np.abs(diff.entries))))
    return worst


def _trajectory_figure(command, pairs):
    from . import plotting

    series = {run.label: (np.array(traj.times), _sigma_z(run, traj)) for run, traj in pairs}
    return [(f"{command}_sigma_z.png", lambda p: plotting.plot_trajectories(series, p, "<sigma_z>"))]


def prepare_laser_as(scn):
    try:
        p = laser.ASParams(**scn.model)
    except TypeError as exc:
        raise ValidationError(str(exc)) from None
    run = scn.sections["run"]
    _validate_run(run)
    gen = laser.build_as_generator(p)
    return {"params": p, "runs": [LaserRun("as", gen, "spin", p.N, p.n_modes, p.fock_cutoff, run)]}


def run_laser_as(scn, plan, fmt):
    p = plan["params"]
    pairs = _evolve_all(scn.command, plan["runs"])
    run, traj = pairs[0]
    sz = _sigma_z(run, traj)
    report = {
        "command": scn.command,
        "matched_params": _params_dict(p),
        "residuals": {
            "unitality": _unitality(run.gen),
            "max_trace_drift": float(max(traj.trace_drift)),
            "final_sigma_z_minus_eta": float(sz[-1] - p.eta),
        },
        "trajectory_files": [_trajectory_name(scn.command, run)],
    }
    artifacts = [(f"{scn.command}.{fmt}", lambda path: write_report(path, report, fmt)),
                 _trajectory_artifact(scn.command, run, traj)]
    return artifacts, _trajectory_figure(scn.command, pairs)


def prepare_laser_match(scn):
    try:
        p = laser.HLParams(**scn.model)
    except TypeError as exc:
        raise ValidationError(str(exc)) from None
    hl_gen = laser.build_hl_generator(p)
    matched = laser.match_hl_to_as(p)
    as_gen = laser.build_as_generator(matched)
    runs = []
    run = scn.sections["run"]
    if run is not None:
        _validate_run(run)
        runs = [LaserRun("hl", hl_gen, "spin", p.N, p.n_modes, p.fock_cutoff, run),
                LaserRun("as", as_gen, "spin", p.N, p.n_modes, p.fock_cutoff, run)]
    return {"params": p, "matched": matched, "hl_gen": hl_gen, "as_gen": as_gen, "runs": runs}


def run_laser_match(scn, plan, fmt):
    p, matched = plan["params"], plan["matched"]
    residuals = {
        "generator_difference": generator_difference(plan["hl_gen"], plan["as_gen"]),
        "gamma2_minus_2gamma1": matched.gamma2 - 2 * matched.gamma1,
        "unitality": _unitality(plan["hl_gen"]),
    }
    report = {"command": scn.command, "matched_params": _params_dict(matched), "residuals": residuals}
    if plan["hl_gen"].space.dim <= SUPEROPERATOR_DIM:
        cr = laser.counter_rotating_vanishes(p)
        report["counter_rotating"] = {"identical": cr["identical"], "max_difference": cr["max_difference"]}
    pairs = _evolve_all(scn.command, plan["runs"])
    if pairs:
        (r_hl, t_hl), (r_as, t_as) = pairs
        residuals["sigma_z_max_difference"] = float(np.max(np.abs(_sigma_z(r_hl, t_hl) - _sigma_z(r_as, t_as))))
    report["trajectory_files"] = [_trajectory_name(scn.command, r) for r, _ in pairs]
    artifacts = [(f"{scn.command}.{fmt}", lambda path: write_report(path, report, fmt))]
    artifacts += [_trajectory_artifact(scn.command, r, t) for r, t in pairs]
    return artifacts, _trajectory_figure(scn.command, pairs) if pairs else []


def _dhl_closed_form_residuals(p: laser.DHLParams):
    """Brute-force site action against the closed form, on a bare site."""
    site = laser.DHLParams(N=0, n_modes=0, gamma_g=(), lam=(), fock_cutoff=p.fock_cutoff,
                           gamma_b_plus=p.gamma_b_plus, gamma_b_minus=p.gamma_b_minus,
                           gamma_c_plus=p.gamma_c_plus, gamma_c_minus=p.gamma_c_minus)
    gen = laser.build_dhl_generator(site)
    bp, bm = fermion_site_pair()
    up = embed_site_operator(gen.space, 0, bp)
    dn = embed_site_operator(gen.space, 0, bm)
    raising = up.dag() @ dn
    n_plus, n_minus = up.dag() @ up, dn.dag() @ dn
    coefficient, (c_plus, c_minus, constant) = laser.dhl_closed_form(site)
    raising_res = (apply_heisenberg(gen, raising) - raising * coefficient).norm()
    z_like = apply_heisenberg(gen, n_plus - n_minus)
    pop_res = (z_like - n_plus * c_plus - n_minus * c_minus - identity(gen.space) * constant).norm()
    return raising_res, pop_res


def prepare_laser_dhl(scn):
    try:
        p = laser.DHLParams(**scn.model)
    except TypeError as exc:
        raise ValidationError(str(exc)) from None
    dhl_gen = laser.build_dhl_generator(p)
    eq = laser.check_dhl_as_equivalence(p)
    matched = eq.as_params(p) if eq.holds and not eq.eta_out_of_range else None
    runs = []
    run = scn.sections["run"]
    if run is not None:
        _validate_run(run)
        runs.append(LaserRun("dhl", dhl_gen, "fermion-site", p.N, p.n_modes, p.fock_cutoff, run))
        if matched is not None:
            as_gen = laser.build_as_generator(matched)
            runs.append(LaserRun("as", as_gen, "spin", p.N, p.n_modes, p.fock_cutoff, run))
    return {"params": p, "eq": eq, "matched": matched, "gen": dhl_gen, "runs": runs}


def run_laser_dhl(scn, plan, fmt):
    p, eq, matched = plan["params"], plan["eq"], plan["matched"]
    raising_res, pop_res = _dhl_closed_form_residuals(p)
    residuals = {
        "matching_defect": eq.defect,
        "closed_form_raising": raising_res,
        "closed_form_population": pop_res,
        "unitality": _unitality(plan["gen"]),
    }
    report = {
        "command": scn.command,
        "equivalence_holds": eq.holds,
        "notes": list(eq.notes),
        "matched_params": _params_dict(matched) if matched is not None else None,
        "residuals": residuals,
    }
    pairs = _evolve_all(scn.command, plan["runs"])
    if len(pairs) == 2:
        (r_d, t_d), (r_a, t_a) = pairs
        residuals["sigma_z_max_difference"] = float(np.max(np.abs(_sigma_z(r_d, t_d) - _sigma_z(r_a, t_a))))
    report["trajectory_files"] = [_trajectory_name(scn.command, r) for r, _ in pairs]
    artifacts = [(f"{scn.command}.{fmt}", lambda path: write_report(path, report, fmt))]
    artifacts += [_trajectory_artifact(scn.command, r, t) for r, t in pairs]
    return artifacts, _trajectory_figure(scn.command, pairs) if pairs else []


# bcs dynamics ---------------------------------------------------------------------

def prepare_bcs_dynamics(scn):
    p = bcs.BCSParams(**scn.model)
    run = scn.sections["run"]
    s0 = bcs.SpinState(run["sigma_plus"], run["sigma_0"])
    if not run["dt"] > 0 or run["t_final"] < 0:
        raise ValidationError("[run] needs dt > 0 and t_final >= 0")
    return {"params": p, "state": s0, "run": run}


def run_bcs_dynamics(scn, plan, fmt):
    p, s0, run = plan["params"], plan["state"], plan["run"]
    traj = bcs.semiclassical_evolve(p, s0, run["t_final"], run["dt"])
    try:
        closed = bcs.closed_form_sigma_plus(p, s0, traj.times)
        closed_err = float(np.max(np.abs(closed - traj.sigma_plus)))
    except ValidationError:
        closed_err = math.nan  # no closed form at degenerate frequencies
    bloch = traj.sigma_0**2 + 4 * np.abs(traj.sigma_plus) ** 2
    summary = [{
        "t_final": run["t_final"],
        "closed_form_max_error": closed_err,
        "bloch_length_drift": float(np.max(np.abs(bloch - bloch[0]))),
        "sigma_plus_final_re": traj.sigma_plus[-1].real,
        "sigma_plus_final_im": traj.sigma_plus[-1].imag,
        "sigma_0_final": traj.sigma_0[-1],
    }]
    columns = list(summary[0])
    stem = scn.command
    artifacts = [(f"{stem}.{fmt}", lambda path: write_table(path, columns, summary, fmt)),
                 (f"{stem}_trajectory.csv", traj.write_csv)]

    def figure(path):
        from . import plotting

        plotting.plot_trajectories({
            "Re<sigma_plus>": (traj.times, traj.sigma_plus.real),
            "Im<sigma_plus>": (traj.times, traj.sigma_plus.imag),
            "<sigma_0>": (traj.times, traj.sigma_0),
        }, path)
    return artifacts, [(f"{stem}.png", figure)]


# dispatch -----------------------------------------------------------------------

REPORT_COMMANDS = {
    "laser-as": (prepare_laser_as, run_laser_as),
    "laser-match": (prepare_laser_match, run_laser_match),
    "laser-dhl": (prepare_laser_dhl, run_laser_dhl),
    "bcs-dynamics": (prepare_bcs_dynamics, run_bcs_dynamics),
}


def _write(out_dir: Path, artifacts, suffix=""):
    out_dir.mkdir(parents=True, exist_ok=True)
    for name, writer in artifacts:
        writer(out_dir / (name + suffix))


def build_parser():
    parser = argparse.ArgumentParser(prog="slq", description="Open-system generators, transport and gap equations.")
    parser.add_argument("command", choices=list(SCHEMAS))
    parser.add_argument("--config", required=True, help="INI scenario file")
    parser.add_argument("--out", default=".", help="output directory (created if missing)")
    parser.add_argument("--format", choices=("csv", "json"), default="csv")
    parser.add_argument("--jobs", type=int, default=1, help="worker processes for sweeps")
    return parser


def run(command, config, out=".", fmt="csv", jobs=1) -> int:
    if jobs < 1:
        print("slq: error: --jobs must be >= 1", file=sys.stderr)
        return EXIT_INVALID
    out_dir = Path(out)
    try:
        scn = load_scenario(command, config)
        if command in TABLE_COMMANDS:
            plan = prepare_table(scn)
        else:
            plan = REPORT_COMMANDS[command][0](scn)
    except ValidationError as exc:
        print(f"slq: invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID
    try:
        if command in TABLE_COMMANDS:
            artifacts, figures = run_table(scn, plan, fmt, jobs)
        else:
            artifacts, figures = REPORT_COMMANDS[command][1](scn, plan, fmt)
    except ValidationError as exc:
        print(f"slq: invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except PartialAbort as exc:
        print(f"slq: numerical abort: {exc}", file=sys.stderr)
        note = {"command": command, "error": str(exc), "partial_files": [n + ".partial" for n, _ in exc.artifacts]}
        _write(out_dir, exc.artifacts + [(f"{command}.{fmt}", lambda p: write_report(p, note, fmt))], ".partial")
        return EXIT_ABORT
    except NumericalAbort as exc:
        print(f"slq: numerical abort: {exc}", file=sys.stderr)
        note = {"command": command, "error": str(exc), "partial_files": []}
        _write(out_dir, [(f"{command}.{fmt}", lambda p: write_report(p, note, fmt))], ".partial")
        return EXIT_ABORT
    if scn.sections["output"]["figures"]:
        artifacts = artifacts + figures
    _write(out_dir, artifacts)
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return run(args.command, args.config, args.out, args.format, args.jobs)


if __name__ == "__main__":
    sys.exit(main())
