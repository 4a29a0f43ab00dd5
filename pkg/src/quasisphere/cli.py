"""Configuration-driven command-line front end.

Four commands share one config model (TOML file sections [shape],
[initial], [grid], [solver], [output]; positional specs and key=value
arguments override file values):

    solve            integrate outward, write series CSV + summary JSON
    verify           run, then evaluate the built-in check suite
    asymptotic       large-sphere shell report for a metric family
    curvature-check  curvature oracle residual table

Exit status: 0 when the run and all enabled checks succeed, 2 for
configuration errors or failed checks, 3 for numerical aborts (with a
diagnostics file).  All numeric output uses 17 significant digits and
fixed summation order, so identical configs produce identical bytes.
"""

from __future__ import annotations

import argparse
import hashlib
import math
import os
import sys

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:
    import tomli as tomllib

from .convex import (SupportShape, ellipsoid_shape, load_support_table,
                     parallel_geometry, shape_from_support, sphere_shape)
from .curvature import (fd_scalar_curvature, second_form_check,
                        shell_metric_from_function, shell_scalar_residual)
from .asymptotic import (conformal_schwarzschild, euclidean,
                         mass_from_spheres, quadrupole_perturbation)
from .mass import EIGHT_PI, SIXTEEN_PI, MassSeries
from .solver import (InitialData, SolverAbort, SolverConfig, solve,
                     solve_minimal)
from .sphere import (ScalarField, SphereGrid, integrate, laplace_beltrami,
                     make_grid, real_sph_harm, round_metric)

SERIES_HEADER = ("r,m_by,m_bartnik,m_aspect_mean,m_aspect_min,"
                 "m_aspect_max,sup_u_minus_1,dt_last")
_SERIES_FIELDS = tuple(SERIES_HEADER.split(","))


class ConfigError(Exception):
    """Bad configuration or failed file plumbing; exit status 2."""


# ---------------------------------------------------------------------------
# deterministic serialization


def format17(x: float) -> str:
    return f"{float(x):.17g}"


def _json_text(obj, indent: int = 0) -> str:
    pad = "  " * indent
    inner = "  " * (indent + 1)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        rows = [f'{inner}{_json_text(str(k))}: {_json_text(v, indent + 1)}'
                for k, v in obj.items()]
        return "{\n" + ",\n".join(rows) + f"\n{pad}}}"
    if isinstance(obj, (list, tuple)):
        if not len(obj):
            return "[]"
        rows = [f"{inner}{_json_text(v, indent + 1)}" for v in obj]
        return "[\n" + ",\n".join(rows) + f"\n{pad}]"
    if isinstance(obj, bool) or obj is None:
        return "true" if obj is True else ("false" if obj is False else "null")
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if not math.isfinite(x):
            return "null"
        return format17(x)
    if isinstance(obj, str):
        return '"' + obj.replace("\\", "\\\\").replace('"', '\\"') + '"'
    raise TypeError(f"cannot serialize {type(obj)!r}")


def write_json(path: str, obj) -> None:
    with open(path, "w") as fh:
        fh.write(_json_text(obj) + "\n")


def config_hash(config: dict) -> str:
    return hashlib.sha256(_json_text(config).encode()).hexdigest()


def write_series_csv(path: str, series: MassSeries) -> None:
    lines = [SERIES_HEADER]
    for rec in series.records:
        lines.append(",".join(format17(getattr(rec, f))
                              for f in _SERIES_FIELDS))
    with open(path, "w", newline="") as fh:
        fh.write("\n".join(lines) + "\n")


class _DirectoryLock:
    """Atomic-create lockfile; refuses a directory another run holds."""

    def __init__(self, directory: str):
        self.directory = directory
        self.path = os.path.join(directory, ".lock")

    def __enter__(self):
        os.makedirs(self.directory, exist_ok=True)
        try:
            fd = os.open(self.path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
        except FileExistsError:
            raise ConfigError(
                f"output directory {self.directory!r} is locked by "
                "another run") from None
        os.close(fd)
        return self

    def __exit__(self, *exc):
        try:
            os.unlink(self.path)
        except FileNotFoundError:
            pass
        return False


# ---------------------------------------------------------------------------
# configuration


_DEFAULTS = {
    "shape": {"spec": "sphere:1"},
    "initial": {"spec": "const:1"},
    "grid": {"n_theta": 16, "n_phi": 0, "mode": "spectral"},
    "solver": {"r_max": 100.0, "tol": 1e-9, "form": "u_form",
               "dt_initial": 1e-3, "safety": 0.9, "envelope_tol": 1e-6,
               "r_switch": 1.0, "max_steps": 200000,
               "ladder": [2.0, 4.0, 8.0, 16.0, 32.0],
               "extra_snapshot_rs": []},
    "output": {"directory": "qs_output",
               "reports": ["series", "summary", "verification"]},
    "asymptotic": {"family": "conformal-schwarzschild:1",
                   "shells": [50.0, 100.0, 200.0, 400.0]},
    "curvature": {"rho": 2.0},
}

_OVERRIDE_MAP = {
    "shape": ("shape", "spec", str),
    "initial": ("initial", "spec", str),
    "n_theta": ("grid", "n_theta", int),
    "n_phi": ("grid", "n_phi", int),
    "mode": ("grid", "mode", str),
    "r_max": ("solver", "r_max", float),
    "tol": ("solver", "tol", float),
    "form": ("solver", "form", str),
    "dt_initial": ("solver", "dt_initial", float),
    "safety": ("solver", "safety", float),
    "envelope_tol": ("solver", "envelope_tol", float),
    "r_switch": ("solver", "r_switch", float),
    "max_steps": ("solver", "max_steps", int),
    "ladder": ("solver", "ladder", "floats"),
    "extra_snapshot_rs": ("solver", "extra_snapshot_rs", "floats"),
    "directory": ("output", "directory", str),
    "reports": ("output", "reports", "strings"),
    "family": ("asymptotic", "family", str),
    "shells": ("asymptotic", "shells", "floats"),
    "m": ("asymptotic", "family_m", float),
    "amplitude": ("asymptotic", "family_amplitude", float),
    "rho": ("curvature", "rho", float),
}


def _coerce(raw: str, kind):
    try:
        if kind is int:
            return int(raw)
        if kind is float:
            return float(raw)
        if kind == "floats":
            return [float(v) for v in raw.split(",") if v]
        if kind == "strings":
            return [v for v in raw.split(",") if v]
    except ValueError as e:
        raise ConfigError(f"bad value {raw!r}: {e}") from None
    return raw


def resolve_config(command: str, positionals, overrides,
                   config_file: str | None) -> dict:
    """Defaults, then TOML file, then positional specs and key=value
    overrides, in increasing precedence."""
    cfg = {k: dict(v) for k, v in _DEFAULTS.items()}
    cfg_order = ["command"] + list(_DEFAULTS)

    if config_file is not None:
        try:
            with open(config_file, "rb") as fh:
                data = tomllib.load(fh)
        except (OSError, tomllib.TOMLDecodeError) as e:
            raise ConfigError(f"cannot read config file: {e}") from None
        for section, body in data.items():
            if section not in cfg:
                raise ConfigError(f"unknown config section [{section}]")
            if not isinstance(body, dict):
                raise ConfigError(f"section [{section}] must be a table")
            for key, value in body.items():
                if key not in cfg[section] and not key.startswith("family_"):
                    raise ConfigError(
                        f"unknown key {key!r} in section [{section}]")
                cfg[section][key] = value

    pos = list(positionals)
    if command in ("solve", "verify"):
        if len(pos) > 2:
            raise ConfigError("solve/verify take at most two positional "
                              "specs: shape and initial data")
        if pos:
            cfg["shape"]["spec"] = pos[0]
        if len(pos) == 2:
            cfg["initial"]["spec"] = pos[1]
    elif command == "asymptotic":
        if len(pos) > 1:
            raise ConfigError("asymptotic takes one positional family spec")
        if pos:
            cfg["asymptotic"]["family"] = pos[0]
    elif pos:
        raise ConfigError(f"{command} takes no positional arguments")

    for item in overrides:
        key, eq, raw = item.partition("=")
        if not eq:
            raise ConfigError(f"override {item!r} is not key=value")
        if key not in _OVERRIDE_MAP:
            raise ConfigError(f"unknown override key {key!r}")
        section, name, kind = _OVERRIDE_MAP[key]
        cfg[section][name] = _coerce(raw, kind)

    out = {"command": command}
    out.update({k: cfg[k] for k in _DEFAULTS})
    if out["grid"]["n_phi"] in (0, None):
        out["grid"]["n_phi"] = 2 * out["grid"]["n_theta"]
    del cfg_order
    return out


def build_grid(config: dict) -> SphereGrid:
    g = config["grid"]
    try:
        return make_grid(int(g["n_theta"]), int(g["n_phi"]),
                         mode=str(g["mode"]))
    except ValueError as e:
        raise ConfigError(str(e)) from None


def build_shape(config: dict, grid: SphereGrid) -> SupportShape:
    spec = str(config["shape"]["spec"])
    kind, _, arg = spec.partition(":")
    try:
        if kind == "sphere":
            return sphere_shape(grid, float(arg or "1"))
        if kind == "ellipsoid":
            a, b, c = (float(v) for v in arg.split(","))
            return ellipsoid_shape(grid, a, b, c)
        if kind == "support-file":
            if not arg:
                raise ConfigError("support-file spec needs a path")
            return shape_from_support(load_support_table(grid, arg))
    except ConfigError:
        raise
    except (OSError, ValueError) as e:
        raise ConfigError(f"bad shape spec {spec!r}: {e}") from None
    raise ConfigError(f"unknown shape kind {kind!r}")


def build_initial(config: dict, grid: SphereGrid) -> InitialData:
    spec = str(config["initial"]["spec"])
    kind, _, arg = spec.partition(":")
    try:
        if kind == "const":
            return InitialData.constant(grid, float(arg))
        if kind == "minimal":
            return InitialData.minimal_surface()
        if kind == "mean-curvature-file":
            field = load_support_table(grid, arg)
            return InitialData.from_boundary_mean_curvature(field)
    except ConfigError:
        raise
    except (OSError, ValueError) as e:
        raise ConfigError(f"bad initial spec {spec!r}: {e}") from None
    raise ConfigError(f"unknown initial data kind {kind!r}")


def build_solver_config(config: dict) -> SolverConfig:
    s = config["solver"]
    try:
        return SolverConfig(
            r_max=float(s["r_max"]), tol=float(s["tol"]),
            dt_initial=float(s["dt_initial"]), safety=float(s["safety"]),
            max_steps=int(s["max_steps"]), form=str(s["form"]),
            ladder=tuple(float(k) for k in s["ladder"]),
            r_switch=float(s["r_switch"]),
            envelope_tol=float(s["envelope_tol"]),
            extra_snapshot_rs=tuple(float(r)
                                    for r in s["extra_snapshot_rs"]))
    except (ValueError, TypeError) as e:
        raise ConfigError(f"bad solver configuration: {e}") from None


def build_family(config: dict):
    a = config["asymptotic"]
    spec = str(a["family"])
    name, _, arg = spec.partition(":")
    if name == "euclidean":
        return euclidean()
    if name == "conformal-schwarzschild":
        m = a.get("family_m")
        if m is None:
            m = float(arg or "1")
        return conformal_schwarzschild(float(m))
    if name == "quadrupole":
        amp = a.get("family_amplitude")
        if amp is None:
            amp = float(arg or "0.1")
        return quadrupole_perturbation(float(amp))
    raise ConfigError(f"unknown metric family {name!r}")


# ---------------------------------------------------------------------------
# check suite (shared with the acceptance tests)


def check_row(check_id: str, description: str, value: float,
              tolerance: float, passed: bool | None = None) -> dict:
    if passed is None:
        passed = bool(value <= tolerance)
    return {"check_id": check_id, "description": description,
            "value": float(value), "tolerance": float(tolerance),
            "pass": bool(passed)}


def monotonicity_checks(series: MassSeries) -> list[dict]:
    budget = series.monotonicity_tolerance
    by = np.array([r.m_by for r in series.records])
    bk = np.array([r.m_bartnik for r in series.records])
    up = float(np.max(np.diff(by), initial=0.0))
    down = float(-np.min(np.diff(bk), initial=0.0))
    return [
        check_row("monotone-brown-york",
                  "largest upward step of the nonincreasing series",
                  max(up, 0.0), budget),
        check_row("monotone-bartnik",
                  "largest downward step of the nondecreasing series",
                  max(down, 0.0), budget),
    ]


def envelope_check(snapshots, envelope_tol: float) -> dict:
    worst = 0.0
    for s in snapshots:
        hi = float(np.max(s.u.values)) / s.envelope_upper - 1.0
        lo = 1.0 - float(np.min(s.u.values)) / s.envelope_lower
        worst = max(worst, hi, lo)
    return check_row("envelope",
                     "relative excursion beyond the comparison envelopes",
                     max(worst, 0.0), envelope_tol)


def decay_checks(series: MassSeries) -> list[dict]:
    """Decay-exponent rows, skipped when the fitted quantity sits at the
    integrator's noise floor (fixed points, constant mass aspect)."""
    rows = []
    m0 = series.m0_estimate
    signal_u = max(r.sup_u_minus_1 for r in series.records)
    signal_m = 0.0
    if m0 is not None:
        signal_m = max(abs(r.m_aspect_mean - m0) for r in series.records)
    floors = {"decay-u": (signal_u, 1e3 * series.step_tolerance),
              "decay-mass-aspect": (signal_m,
                                    1e2 * series.monotonicity_tolerance)}
    for name, value in (("decay-u", series.decay_exponent_u),
                        ("decay-mass-aspect", series.decay_exponent_m)):
        signal, floor = floors[name]
        if value is None or signal <= floor:
            continue
        rows.append(check_row(
            name, "fitted decay exponent over the last octaves (>= 0.9)",
            value, 0.9, passed=value >= 0.9))
    return rows


def fixed_point_check(snapshots, tol: float = 1e-10) -> dict:
    worst = max(float(np.max(np.abs(s.u.values - 1.0))) for s in snapshots)
    return check_row("fixed-point", "sup|u - 1| for flat initial data",
                     worst, tol)


def sphere_closed_form_check(snapshots, radius: float, k: float,
                             tol: float = 1e-5) -> dict:
    """Round-sphere runs solve a radial ODE with the closed-form solution
    1 - 1/u^2 = (1 - 1/k^2) R / rho; compare in sup norm."""
    worst = 0.0
    for s in snapshots:
        rho = radius + s.r
        exact = (1.0 - (1.0 - 1.0 / k**2) * radius / rho) ** -0.5
        worst = max(worst, float(np.max(np.abs(s.u.values - exact))))
    return check_row("sphere-closed-form",
                     "sup|u - closed form| on a round sphere", worst, tol)


def eigenvalue_check(grid: SphereGrid | None = None, l_max: int = 8,
                     tol: float = 1e-10) -> dict:
    if grid is None:
        grid = make_grid(16, 32)
    metric = round_metric(grid, 1.0)
    worst = 0.0
    for ell in range(l_max + 1):
        for m in range(-ell, ell + 1):
            y = real_sph_harm(ell, m, grid.theta, grid.phi)
            lap = laplace_beltrami(metric, grid.scalar(y)).values
            worst = max(worst, float(np.max(np.abs(
                lap + ell * (ell + 1) * y))))
    return check_row("operator-eigenvalues",
                     "Laplace-Beltrami round-sphere eigenvalue defect",
                     worst, tol)


def quadrature_check(grid: SphereGrid | None = None, l_max: int = 8,
                     tol: float = 1e-11) -> dict:
    if grid is None:
        grid = make_grid(16, 32)
    fields = [real_sph_harm(ell, m, grid.theta, grid.phi)
              for ell in range(l_max + 1) for m in range(-ell, ell + 1)]
    basis = np.stack(fields)
    gram = (basis * grid.weights) @ basis.T
    worst = float(np.max(np.abs(gram - np.eye(len(basis)))))
    return check_row("operator-quadrature",
                     "orthonormality defect of the spherical harmonics",
                     worst, tol)


def gauss_bonnet_check(grid: SphereGrid | None = None,
                       shapes=None, tol: float = 1e-8) -> dict:
    if grid is None:
        grid = make_grid(16, 32)
    if shapes is None:
        ell = ellipsoid_shape(grid, 1.0, 1.0, 1.2)
        shapes = [sphere_shape(grid, 1.0), ell,
                  shape_from_support(grid.scalar(ell.h))]
    worst = 0.0
    for shape in shapes:
        for r in (0.0, 1.0, 10.0):
            geom = parallel_geometry(shape, r)
            total = integrate(grid.scalar(0.5 * geom.Rscal),
                              geom.area_element)
            worst = max(worst, abs(total - 4.0 * math.pi))
    return check_row("gauss-bonnet",
                     "total curvature 4*pi over shapes and offsets",
                     worst, tol)


def operator_suite(grid: SphereGrid | None = None) -> list[dict]:
    return [eigenvalue_check(grid), quadrature_check(grid),
            gauss_bonnet_check(grid)]


def verification_suite(config: dict, snapshots, series: MassSeries
                       ) -> list[dict]:
    """Everything applicable to a finished run, plus the operator suite."""
    rows = monotonicity_checks(series)
    rows.append(envelope_check(snapshots,
                               float(config["solver"]["envelope_tol"])))
    rows.extend(decay_checks(series))

    shape_kind, _, shape_arg = str(config["shape"]["spec"]).partition(":")
    init_kind, _, init_arg = str(config["initial"]["spec"]).partition(":")
    if init_kind == "const" and float(init_arg) == 1.0:
        rows.append(fixed_point_check(snapshots))
    if shape_kind == "sphere" and init_kind == "const":
        rows.append(sphere_closed_form_check(
            snapshots, float(shape_arg or "1"), float(init_arg)))
    rows.extend(operator_suite())
    return rows


# ---------------------------------------------------------------------------
# command runners


def _summarize(config: dict, cfg_hash: str, series: MassSeries,
               snapshots, extra: dict | None = None) -> dict:
    env = envelope_check(snapshots, float(config["solver"]["envelope_tol"]))
    bracket = None
    if series.m0_bracket is not None:
        bracket = [series.m0_bracket[0], series.m0_bracket[1]]
    summary = {
        "m0_estimate": series.m0_estimate,
        "m0_bracket": bracket,
        "m_by_initial": series.records[0].m_by,
        "monotone_m_by": series.monotone_m_by,
        "monotone_m_bartnik": series.monotone_m_bartnik,
        "decay_exponent_u": series.decay_exponent_u,
        "decay_exponent_m": series.decay_exponent_m,
        "envelope_ok": env["pass"],
        "config_hash": cfg_hash,
        "step_tolerance": series.step_tolerance,
        "monotonicity_tolerance": series.monotonicity_tolerance,
    }
    if series.crosscheck is not None:
        summary["crosscheck"] = dict(series.crosscheck)
    if extra:
        summary.update(extra)
    return summary


def _run_pipeline(config: dict):
    grid = build_grid(config)
    shape = build_shape(config, grid)
    solver_cfg = build_solver_config(config)
    initial = build_initial(config, grid)
    extra = None
    if initial.minimal:
        snapshots, series, report = solve_minimal(shape, solver_cfg)
        extra = {
            "m0_extrapolated": report["m0_extrapolated"],
            "m0_per_k": list(report["m0_per_k"]),
            "ladder_monotone": report["monotone"],
            "penrose_ratio": report["penrose_ratio"],
        }
        series = _series_with_m0(series, report["m0_extrapolated"])
    else:
        snapshots, series = solve(shape, initial, solver_cfg)
    return shape, snapshots, series, extra


def _series_with_m0(series: MassSeries, m0: float) -> MassSeries:
    import dataclasses
    lo, hi = series.m0_bracket if series.m0_bracket else (m0, m0)
    return dataclasses.replace(
        series, m0_estimate=m0,
        m0_bracket=(min(lo, m0), max(hi, m0)))


def run_solve(config: dict, out_dir: str, cfg_hash: str,
              with_verification: bool) -> int:
    _, snapshots, series, extra = _run_pipeline(config)
    reports = config["output"]["reports"]
    if "series" in reports:
        write_series_csv(os.path.join(out_dir, "series.csv"), series)
    if "summary" in reports:
        write_json(os.path.join(out_dir, "summary.json"),
                   _summarize(config, cfg_hash, series, snapshots, extra))
    if not with_verification:
        return 0
    rows = verification_suite(config, snapshots, series)
    write_json(os.path.join(out_dir, "verification.json"), rows)
    return 0 if all(r["pass"] for r in rows) else 2


def run_asymptotic(config: dict, out_dir: str, cfg_hash: str) -> int:
    family = build_family(config)
    shells = [float(r) for r in config["asymptotic"]["shells"]]
    if not shells or min(shells) <= 0:
        raise ConfigError("shells must be positive radii")
    grid = make_grid(int(config["grid"]["n_theta"]),
                     int(config["grid"]["n_phi"]),
                     mode=str(config["grid"]["mode"]))
    rep = mass_from_spheres(family, shells, grid)
    rows = []
    for i, r in enumerate(rep["radii"]):
        rows.append({
            "r": r,
            "h_integral": rep["h_integrals"][i],
            "h0_mid_integral": rep["h0_mid_integrals"][i],
            "gap_over_8pi": rep["gap_over_8pi"][i],
            "bracket_rel_width": rep["bracket_rel_width"][i],
            "bracket_valid": rep["bracket_valid"][i],
            "in_annulus": rep["in_annulus"][i],
        })
    report = {
        "family": family.name,
        "mass_estimate": rep["mass_estimate"],
        "annulus": list(rep["annulus"]) if rep["annulus"] else None,
        "shells": rows,
        "config_hash": cfg_hash,
    }
    write_json(os.path.join(out_dir, "asymptotic_report.json"), report)
    ok = all(rep["bracket_valid"]) and rep["mass_estimate"] is not None
    return 0 if ok else 2


_CURVATURE_TOLS = {"residual": 1e-9, "scalar_defect": 1e-5,
                   "ii_deviation": 1e-9, "gauss_deviation": 1e-5}


def curvature_oracle_table(grid: SphereGrid | None = None,
                           rho: float = 2.0) -> list[dict]:
    """Residuals of the curvature pipeline on exactly known metrics."""
    if grid is None:
        grid = make_grid(24, 48)
    one = lambda r, g: 1.0
    m = 0.1
    schw = lambda r, g: (1.0 - 2.0 * m / r) ** -0.5
    ell = ellipsoid_shape(grid, 1.0, 1.0, 1.2)
    cases = [
        ("euclidean-round",
         dict(background="round", rho_center=3.0, u_fn=one, grid=grid)),
        ("schwarzschild-round",
         dict(background="round", rho_center=3.0, u_fn=schw, grid=grid)),
        ("hyperbolic-static",
         dict(background="hyperbolic", rho_center=rho, u_fn=one, grid=grid,
              target_scalar=-6.0)),
        ("flat-convex",
         dict(background="convex", rho_center=rho, u_fn=one, shape=ell)),
    ]
    rows = []
    for name, kwargs in cases:
        sm = shell_metric_from_function(**kwargs)
        res = float(np.max(np.abs(shell_scalar_residual(sm).values)))
        sc = float(np.max(np.abs(fd_scalar_curvature(sm).values
                                 - sm.target_scalar)))
        sf = second_form_check(sm)
        row = {"case": name, "residual": res, "scalar_defect": sc,
               "ii_deviation": sf["ii_deviation"],
               "gauss_deviation": sf["gauss_deviation"]}
        row["pass"] = all(row[k] <= _CURVATURE_TOLS[k]
                          for k in _CURVATURE_TOLS)
        rows.append(row)
    return rows


def run_curvature_check(config: dict, out_dir: str, cfg_hash: str) -> int:
    grid = make_grid(int(config["grid"]["n_theta"]),
                     int(config["grid"]["n_phi"]),
                     mode=str(config["grid"]["mode"]))
    rows = curvature_oracle_table(grid, float(config["curvature"]["rho"]))
    report = {"tolerances": dict(_CURVATURE_TOLS), "cases": rows,
              "config_hash": cfg_hash}
    write_json(os.path.join(out_dir, "curvature_report.json"), report)
    return 0 if all(r["pass"] for r in rows) else 2


# ---------------------------------------------------------------------------
# entry point


def run(config: dict) -> int:
    out_dir = str(config["output"]["directory"])
    cfg_hash = config_hash(config)
    command = config["command"]
    with _DirectoryLock(out_dir):
        try:
            if command in ("solve", "verify"):
                return run_solve(config, out_dir, cfg_hash,
                                 with_verification=(command == "verify"))
            if command == "asymptotic":
                return run_asymptotic(config, out_dir, cfg_hash)
            if command == "curvature-check":
                return run_curvature_check(config, out_dir, cfg_hash)
            raise ConfigError(f"unknown command {command!r}")
        except SolverAbort as e:
            write_json(os.path.join(out_dir, "diagnostics.json"), {
                "error": str(e), "r": e.r, "dt": e.dt, "detail": e.detail,
                "config_hash": cfg_hash,
            })
            print(f"numerical abort: {e}", file=sys.stderr)
            return 3
        except ValueError as e:
            raise ConfigError(str(e)) from None


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="quasisphere",
        description="Quasi-spherical exterior metrics: solve, verify, "
                    "and analyze.")
    parser.add_argument("command",
                        choices=["solve", "verify", "asymptotic",
                                 "curvature-check"])
    parser.add_argument("args", nargs="*",
                        help="positional specs (shape/initial or family) "
                             "and key=value overrides")
    parser.add_argument("--config", default=None,
                        help="TOML configuration file")
    # key=value tokens may follow --config; collect them as arguments
    ns, extra = parser.parse_known_args(argv)
    tokens = list(ns.args) + list(extra)

    positionals = [a for a in tokens if "=" not in a]
    overrides = [a for a in tokens if "=" in a]
    try:
        config = resolve_config(ns.command, positionals, overrides,
                                ns.config)
        return run(config)
    except ConfigError as e:
        print(f"configuration error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
