"""Configuration, orchestration, and persistence: the front door to every module.

A run is described by a strict JSON config (unknown keys are rejected by
name), executed through the stock scenario builders, and persisted as a
directory of CSV snapshots plus JSON reports.  Everything written is
deterministic: floats are printed with 17 significant digits, JSON keys are
sorted, and no timestamps or environment details enter any output file, so a
rerun with the same config is byte-identical and so is a rerun with a
different worker count.

The manifest lists every file the run produced and the pass/fail verdict of
every enabled check.  Exit-code policy (enforced by the CLI wrapper): 0 when
all enabled checks pass, 1 when any fails, 2 for configuration errors (the
message names the offending key), 3 for numerical integrity failures.
"""

from __future__ import annotations

import glob as _glob
import hashlib
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import __version__
from .blowup import blowup_report, contradiction_time
from .diagnostics import (
    annulus_check_from_run,
    annulus_plateau_max_density,
    energy_report,
    interface_report,
    lambda_jump_decay,
    particle_residual_from_run,
    two_fluid_energy_balance,
    vacuum_overhang_cells,
    vacuum_report,
)
from .errors import ConfigurationError, DomainError
from .flowmap import VelocityHistory, integrate_path, ordering_check, track_interfaces, write_interfaces_csv, write_paths_csv
from .material import MaterialLaw
from .radial import RadialGrid, RunResult, Scenario, format_float, run, write_snapshot_csv
from .scenarios import (
    annulus_scenario,
    canonical_law,
    compact_scenario,
    jump_scenario,
    static_scenario,
    synthetic_field_snapshots,
)

SCHEMA_VERSION = 1

_KINDS = ("static", "jump", "vacuum_annulus", "compact_support", "synthetic_field")

_TOGGLES = ("energy", "jumps", "lambda_decay", "vacuum", "annulus_fit", "two_fluid", "particles", "blowup")

# Which diagnostics a scenario kind turns on when the config says nothing.
_DEFAULT_TOGGLES = {
    "static": ("energy",),
    "jump": ("energy", "jumps", "lambda_decay"),
    "vacuum_annulus": ("energy", "vacuum", "annulus_fit", "two_fluid"),
    "compact_support": ("energy", "blowup"),
    "synthetic_field": ("particles",),
}

# Default check tolerances.  A null tolerance means the value is recorded in
# the summary without being asserted.  blowup_margin_window is not a check of
# its own: it bounds the time window over which blowup_margin_floor looks.
_DEFAULT_TOLERANCES = {
    "energy_growth": 1.02,
    "rh_residual_rel": 0.05,
    "lambda_decay_dev": 0.05,
    "vacuum_overhang_cells": 2.0,
    "annulus_rms_rel": 0.05,
    "annulus_identity_rel": 0.05,
    "two_fluid_gap_rel": 0.05,
    "particle_residual_l2": None,
    "blowup_margin_floor": 1e-8,
    "blowup_margin_window": 0.012,
}

_LAW_KEYS = ("A", "gamma", "c_lam", "beta", "mu", "rho_tilde", "rho_bar", "q")

# Law fields a scenario kind re-defaults before config overrides apply.
_KIND_LAW_DEFAULTS = {"jump": {"mu": 4.0}}

_PARAM_KEYS = {
    "static": (),
    "jump": ("r_jump", "rho_inner", "rho_outer"),
    "vacuum_annulus": ("a", "b"),
    "compact_support": ("R0", "peak", "inertia_floor"),
    "synthetic_field": ("field_kind", "rho0", "k", "n_snapshots"),
}

_PARAM_DEFAULTS = {
    "static": {},
    "jump": {"r_jump": 1.0, "rho_inner": 2.0, "rho_outer": 1.0},
    "vacuum_annulus": {"a": 1.0, "b": 2.0},
    "compact_support": {"R0": 1.0, "peak": 1.0, "inertia_floor": 2e-2},
    "synthetic_field": {"field_kind": "linear_outflow", "rho0": 1.0, "k": 1.0, "n_snapshots": 41},
}

_SYNTHETIC_GRID = {"r_max": 4.0, "n_cells": 256}
_SYNTHETIC_T = 0.5

_SEED_FRACTIONS = (0.15, 0.3, 0.45, 0.6, 0.75)


# -- deterministic JSON -----------------------------------------------------------


def dumps_17g(obj, indent: int = 0) -> str:
    """Serialize to JSON with sorted keys and 17-significant-digit floats.

    The stdlib encoder prints shortest-roundtrip floats and writes bare NaN
    and Infinity tokens, which are not JSON; this writer pins the float format
    used everywhere else in the package and maps non-finite values to the
    strings "nan", "inf", "-inf".
    """
    pad = "  " * indent
    inner = "  " * (indent + 1)
    if obj is None:
        return "null"
    if isinstance(obj, bool):
        return "true" if obj else "false"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isnan(x):
            return '"nan"'
        if math.isinf(x):
            return '"inf"' if x > 0 else '"-inf"'
        return format_float(x)
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, (list, tuple, np.ndarray)):
        items = [dumps_17g(x, indent + 1) for x in obj]
        if not items:
            return "[]"
        return "[\n" + ",\n".join(inner + s for s in items) + "\n" + pad + "]"
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        parts = []
        for key in sorted(obj):
            if not isinstance(key, str):
                raise ConfigurationError(f"JSON object keys must be strings, got {key!r}")
            parts.append(inner + json.dumps(key) + ": " + dumps_17g(obj[key], indent + 1))
        return "{\n" + ",\n".join(parts) + "\n" + pad + "}"
    raise ConfigurationError(f"cannot serialize {type(obj).__name__} to JSON")


def _write_json(path: Path, obj) -> None:
    Path(path).write_text(dumps_17g(obj) + "\n")


# -- config validation ------------------------------------------------------------


def _reject_unknown(section: dict, allowed, path: str) -> None:
    for key in section:
        if key not in allowed:
            raise ConfigurationError(f"unknown config key: {path}{key}")


def _section(raw: dict, name: str) -> dict:
    value = raw.get(name, {})
    if not isinstance(value, dict):
        raise ConfigurationError(f"config key {name} must be an object")
    return value


def _number(section: dict, key: str, path: str, default=None):
    if key not in section or section[key] is None:
        return default
    value = section[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigurationError(f"config key {path}{key} must be a number")
    return float(value)


def _integer(section: dict, key: str, path: str, default=None):
    if key not in section:
        return default
    value = section[key]
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigurationError(f"config key {path}{key} must be an integer")
    return int(value)


def _boolean(section: dict, key: str, path: str, default=None):
    if key not in section:
        return default
    value = section[key]
    if not isinstance(value, bool):
        raise ConfigurationError(f"config key {path}{key} must be a boolean")
    return value


def _string(section: dict, key: str, path: str, default=None):
    if key not in section:
        return default
    value = section[key]
    if not isinstance(value, str):
        raise ConfigurationError(f"config key {path}{key} must be a string")
    return value


@dataclass(eq=False)
class RunConfig:
    """A validated run description plus the scenario built from it.

    ``normalized`` is the fully resolved config dict (defaults filled in);
    its serialized form is what gets echoed to config.json and hashed into
    the manifest.  ``scenario`` is None for synthetic-field runs, which
    fabricate their snapshots instead of time stepping.
    """

    kind: str
    label: str
    params: dict
    law: MaterialLaw
    snapshot_every: int
    toggles: dict
    tolerances: dict
    particle_seeds: tuple
    output_dir: str | None
    normalized: dict
    scenario: Scenario | None
    synthetic_T: float
    synthetic_grid: RadialGrid | None


def validate_config(raw: dict) -> RunConfig:
    """Check a parsed JSON config against the strict schema and build it out.

    Every unknown key anywhere in the tree fails with a message naming the
    key by its dotted path.  Scenario, grid, and law objects are constructed
    eagerly so their own validation (positive cell counts, gamma bounds, ...)
    fires here rather than mid-run.
    """
    if not isinstance(raw, dict):
        raise ConfigurationError("config root must be a JSON object")
    if "sweep" in raw:
        raise ConfigurationError(
            "config key sweep describes a parameter sweep; run it through the sweep command"
        )
    _reject_unknown(
        raw,
        ("schema_version", "label", "scenario", "law", "grid", "time", "regularization", "diagnostics", "output_dir"),
        "",
    )
    version = raw.get("schema_version")
    if version != SCHEMA_VERSION:
        raise ConfigurationError(
            f"config key schema_version must be {SCHEMA_VERSION}, got {version!r}"
        )

    scen = raw.get("scenario")
    if not isinstance(scen, dict):
        raise ConfigurationError("config key scenario must be an object with a kind")
    _reject_unknown(scen, ("kind", "params"), "scenario.")
    kind = scen.get("kind")
    if kind not in _KINDS:
        raise ConfigurationError(
            f"config key scenario.kind must be one of {', '.join(_KINDS)}; got {kind!r}"
        )
    given_params = scen.get("params", {})
    if not isinstance(given_params, dict):
        raise ConfigurationError("config key scenario.params must be an object")
    _reject_unknown(given_params, _PARAM_KEYS[kind], "scenario.params.")
    params = dict(_PARAM_DEFAULTS[kind])
    for key in _PARAM_KEYS[kind]:
        if key not in given_params:
            continue
        if key == "field_kind":
            params[key] = _string(given_params, key, "scenario.params.")
        elif key == "n_snapshots":
            params[key] = _integer(given_params, key, "scenario.params.")
        else:
            params[key] = _number(given_params, key, "scenario.params.")

    law_sec = _section(raw, "law")
    _reject_unknown(law_sec, _LAW_KEYS, "law.")
    law_overrides = dict(_KIND_LAW_DEFAULTS.get(kind, {}))
    for key in _LAW_KEYS:
        value = _number(law_sec, key, "law.")
        if value is not None:
            law_overrides[key] = value
    law = canonical_law(**law_overrides)

    grid_sec = _section(raw, "grid")
    _reject_unknown(grid_sec, ("r_max", "n_cells"), "grid.")
    r_max = _number(grid_sec, "r_max", "grid.")
    n_cells = _integer(grid_sec, "n_cells", "grid.")

    time_sec = _section(raw, "time")
    _reject_unknown(time_sec, ("T", "snapshot_every", "cfl_safety"), "time.")
    T = _number(time_sec, "T", "time.")
    snapshot_every = _integer(time_sec, "snapshot_every", "time.", default=100)
    if snapshot_every < 1:
        raise ConfigurationError("config key time.snapshot_every must be at least 1")
    cfl = _number(time_sec, "cfl_safety", "time.")

    reg_sec = _section(raw, "regularization")
    _reject_unknown(reg_sec, ("delta_floor", "mollifier_width"), "regularization.")
    delta_floor = _number(reg_sec, "delta_floor", "regularization.")
    mollifier_width = _number(reg_sec, "mollifier_width", "regularization.")

    diag_sec = _section(raw, "diagnostics")
    _reject_unknown(diag_sec, _TOGGLES + ("tolerances", "particle_seeds"), "diagnostics.")
    toggles = {name: name in _DEFAULT_TOGGLES[kind] for name in _TOGGLES}
    for name in _TOGGLES:
        value = _boolean(diag_sec, name, "diagnostics.")
        if value is not None:
            toggles[name] = value
    tol_sec = diag_sec.get("tolerances", {})
    if not isinstance(tol_sec, dict):
        raise ConfigurationError("config key diagnostics.tolerances must be an object")
    _reject_unknown(tol_sec, tuple(_DEFAULT_TOLERANCES), "diagnostics.tolerances.")
    tolerances = dict(_DEFAULT_TOLERANCES)
    for key in _DEFAULT_TOLERANCES:
        if key in tol_sec:
            if tol_sec[key] is None:
                tolerances[key] = None
            else:
                tolerances[key] = _number(tol_sec, key, "diagnostics.tolerances.")
    seeds_given = diag_sec.get("particle_seeds")
    if seeds_given is not None:
        if not isinstance(seeds_given, list) or not seeds_given:
            raise ConfigurationError("config key diagnostics.particle_seeds must be a non-empty array")
        for x in seeds_given:
            if isinstance(x, bool) or not isinstance(x, (int, float)):
                raise ConfigurationError("config key diagnostics.particle_seeds must hold numbers")

    if toggles["blowup"]:
        if law.gamma <= 1.0:
            raise ConfigurationError(
                "diagnostics.blowup needs gamma > 1: the breakdown argument rests on "
                "the internal-energy normalization, which degenerates at gamma = 1"
            )
        if not 1.0 < law.beta <= law.gamma:
            raise ConfigurationError(
                "diagnostics.blowup needs 1 < beta <= gamma for the decay bound to close"
            )

    label = _string(raw, "label", "")
    output_dir = _string(raw, "output_dir", "")

    # Build the scenario through the stock builders so geometry/time defaults
    # live in exactly one place, then layer the remaining overrides on top.
    scenario = None
    synthetic_grid = None
    synthetic_T = T if T is not None else _SYNTHETIC_T
    if kind == "synthetic_field":
        # fabricated snapshots never touch the solver, so knobs that only
        # steer time stepping or floor regularization are rejected as likely
        # mistakes rather than silently ignored
        for key, present in (("time.cfl_safety", cfl), ("regularization.delta_floor", delta_floor),
                             ("regularization.mollifier_width", mollifier_width)):
            if present is not None:
                raise ConfigurationError(
                    f"config key {key} has no effect on a synthetic_field run"
                )
        grid = RadialGrid(
            r_max if r_max is not None else _SYNTHETIC_GRID["r_max"],
            n_cells if n_cells is not None else _SYNTHETIC_GRID["n_cells"],
        )
        synthetic_grid = grid
        if params["n_snapshots"] < 3:
            raise ConfigurationError("config key scenario.params.n_snapshots must be at least 3")
        if params["field_kind"] not in ("linear_outflow", "rigid_expansion"):
            raise ConfigurationError(
                "config key scenario.params.field_kind must be linear_outflow or rigid_expansion"
            )
        if label is None:
            label = "synthetic"
        normal_grid = {"r_max": grid.r_max, "n_cells": grid.n_cells}
        normal_time = {"T": synthetic_T, "snapshot_every": snapshot_every}
        normal_reg = None
    else:
        builder = {
            "static": static_scenario,
            "jump": jump_scenario,
            "vacuum_annulus": annulus_scenario,
            "compact_support": compact_scenario,
        }[kind]
        kwargs = {}
        if r_max is not None:
            kwargs["r_max"] = r_max
        if n_cells is not None:
            kwargs["n_cells"] = n_cells
        if T is not None:
            kwargs["T"] = T
        if kind == "jump":
            kwargs.update(
                r_jump=params["r_jump"], rho_inner=params["rho_inner"], rho_outer=params["rho_outer"]
            )
        elif kind == "vacuum_annulus":
            kwargs.update(a=params["a"], b=params["b"])
            if delta_floor is not None:
                kwargs["delta"] = delta_floor
        elif kind == "compact_support":
            kwargs.update(R0=params["R0"], peak=params["peak"], inertia_floor=params["inertia_floor"])
        scenario = builder(law=law, **kwargs)
        overrides = {}
        if cfl is not None:
            overrides["cfl_safety"] = cfl
        if mollifier_width is not None:
            overrides["mollifier_width"] = mollifier_width
        if delta_floor is not None and kind != "vacuum_annulus":
            overrides["delta_floor"] = delta_floor
        if label is not None:
            overrides["label"] = label
        if overrides:
            scenario = replace(scenario, **overrides)
        label = scenario.label
        normal_grid = {"r_max": scenario.grid.r_max, "n_cells": scenario.grid.n_cells}
        normal_time = {"T": scenario.T, "snapshot_every": snapshot_every, "cfl_safety": scenario.cfl_safety}
        normal_reg = {"delta_floor": scenario.delta_floor, "mollifier_width": scenario.mollifier_width}

    if kind == "vacuum_annulus" and not params["a"] < params["b"]:
        raise ConfigurationError("config key scenario.params.a must be less than scenario.params.b")

    grid_for_seeds = synthetic_grid if synthetic_grid is not None else scenario.grid
    if seeds_given is not None:
        particle_seeds = tuple(float(x) for x in seeds_given)
    else:
        particle_seeds = tuple(f * grid_for_seeds.r_max for f in _SEED_FRACTIONS)
    for s in particle_seeds:
        if not 0.0 < s < grid_for_seeds.r_max:
            raise ConfigurationError(
                f"config key diagnostics.particle_seeds must lie strictly inside (0, r_max); got {s}"
            )

    # The echo written to config.json must itself parse against this schema,
    # so toggles stay flat inside the diagnostics section.
    diagnostics_echo: dict = dict(toggles)
    diagnostics_echo["tolerances"] = dict(tolerances)
    diagnostics_echo["particle_seeds"] = list(particle_seeds)
    normalized = {
        "schema_version": SCHEMA_VERSION,
        "label": label,
        "scenario": {"kind": kind, "params": params},
        "law": {key: getattr(law, key) for key in _LAW_KEYS},
        "grid": normal_grid,
        "time": normal_time,
        "diagnostics": diagnostics_echo,
    }
    if normal_reg is not None:
        normalized["regularization"] = normal_reg
    if output_dir is not None:
        normalized["output_dir"] = output_dir

    return RunConfig(
        kind=kind,
        label=label,
        params=params,
        law=law,
        snapshot_every=snapshot_every,
        toggles=toggles,
        tolerances=tolerances,
        particle_seeds=particle_seeds,
        output_dir=output_dir,
        normalized=normalized,
        scenario=scenario,
        synthetic_T=synthetic_T,
        synthetic_grid=synthetic_grid,
    )


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except FileNotFoundError:
        raise ConfigurationError(f"config file not found: {path}")
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"config file {path} is not valid JSON: {exc}")
    return validate_config(raw)


# -- execution --------------------------------------------------------------------


def _synthetic_scenario_shell(cfg: RunConfig) -> Scenario:
    """A Scenario wrapper for fabricated snapshot stacks.

    Both synthetic fields carry r-uniform density, so the nominal initial
    profile is a constant; the shell only exists so RunResult consumers can
    read law, grid, far-field pressure, and window length off it.
    """
    rho0 = cfg.params["rho0"]
    return Scenario(
        law=cfg.law,
        grid=cfg.synthetic_grid,
        rho0=lambda r: np.full_like(r, rho0),
        v0=None,
        T=cfg.synthetic_T,
        mollifier_width=0.0,
        label=cfg.label,
    )


def build_synthetic_result(cfg: RunConfig) -> RunResult:
    """Fabricate a RunResult from one of the closed-form field families."""
    grid = cfg.synthetic_grid
    times = np.linspace(0.0, cfg.synthetic_T, cfg.params["n_snapshots"])
    rho, v = synthetic_field_snapshots(
        cfg.params["field_kind"], grid, times, rho0=cfg.params["rho0"], k=cfg.params["k"]
    )
    dt = float(times[1] - times[0])
    return RunResult(
        scenario=_synthetic_scenario_shell(cfg),
        times=times,
        rho=rho,
        v=v,
        dt_at_snapshots=np.full(times.size, dt),
        steps=int(times.size - 1),
        clip_count=0,
        rho_min=float(np.min(rho)),
        rho_max=float(np.max(rho)),
        dt_min=dt,
        dt_max=dt,
        boundary_activity=float(np.max(np.abs(v[:, -1]))),
    )


def _initial_vacuum_faces(result: RunResult) -> tuple:
    eps = max(10.0 * result.scenario.delta_floor, 1e-8)
    vac = np.nonzero(result.rho[0] < eps)[0]
    if vac.size == 0:
        raise DomainError("no flagged vacuum cells in the initial snapshot")
    grid = result.grid
    return float(grid.faces[int(vac[0])]), float(grid.faces[int(vac[-1]) + 1])


def _check(value, tolerance, kind="upper", note="") -> dict:
    """One summary entry.  kind: upper (value <= tol), lower (value >= -tol),
    or recorded (tolerance is ignored and the check always passes)."""
    entry = {"value": value, "tolerance": tolerance, "pass": True}
    if note:
        entry["note"] = note
    if tolerance is None or kind == "recorded":
        entry["tolerance"] = None
        return entry
    if value is None or (isinstance(value, float) and math.isnan(value)):
        entry["pass"] = False
        return entry
    if kind == "upper":
        entry["pass"] = bool(value <= tolerance)
    elif kind == "lower":
        entry["pass"] = bool(value >= -tolerance)
    else:
        raise ConfigurationError(f"unknown check kind {kind!r}")
    return entry


def _failed_check(tolerance, exc) -> dict:
    return {"value": None, "tolerance": tolerance, "pass": False, "note": f"{type(exc).__name__}: {exc}"}


def _write_csv(path: Path, header: str, columns) -> None:
    rows = zip(*columns)
    lines = [header]
    for row in rows:
        lines.append(",".join(format_float(float(x)) for x in row))
    Path(path).write_text("\n".join(lines) + "\n")


def _energy_outputs(result: RunResult, out: Path, tolerances: dict, files: list, checks: dict) -> None:
    rep = energy_report(result)
    residual_col = np.concatenate([[np.nan], rep.residuals])
    _write_csv(
        out / "energy.csv",
        "t,energy,dissipation,balance_residual",
        (rep.times, rep.energy, rep.dissipation, residual_col),
    )
    files.append("energy.csv")
    checks["energy_growth"] = _check(rep.growth_ratio, tolerances["energy_growth"])


def _jump_outputs(result: RunResult, out: Path, tolerances: dict, files: list, checks: dict) -> None:
    grid, law = result.grid, result.law
    p_far = result.scenario.p_far
    header = (
        "t,position,rho_left,rho_right,s_left,s_right,flux_left,flux_right,"
        "rh_residual,rh_scale,lambda_jump,pressure_jump"
    )
    lines = [header]
    last_rel = None
    for k, t in enumerate(result.times):
        try:
            rep = interface_report(law, grid, result.rho[k], result.v[k], p_far)
        except DomainError:
            continue
        lines.append(
            ",".join(
                format_float(x)
                for x in (
                    t, rep.position, rep.rho_left, rep.rho_right, rep.s_left, rep.s_right,
                    rep.flux_left, rep.flux_right, rep.rh_residual, rep.rh_scale,
                    rep.lambda_jump, rep.pressure_jump,
                )
            )
        )
        last_rel = rep.rh_residual / rep.rh_scale if rep.rh_scale > 0 else np.inf
    (out / "jump_records.csv").write_text("\n".join(lines) + "\n")
    files.append("jump_records.csv")
    if last_rel is None:
        checks["rh_residual_rel"] = _failed_check(
            tolerances["rh_residual_rel"], DomainError("no usable interface in any snapshot")
        )
    else:
        checks["rh_residual_rel"] = _check(float(last_rel), tolerances["rh_residual_rel"])


def _decay_outputs(result: RunResult, out: Path, tolerances: dict, files: list, checks: dict) -> None:
    rep = lambda_jump_decay(result)
    _write_csv(
        out / "lambda_decay.csv",
        "t,measured,predicted,rate",
        (rep.times, rep.measured, rep.predicted, rep.rates),
    )
    files.append("lambda_decay.csv")
    note = rep.note if rep.truncated else ""
    checks["lambda_decay_dev"] = _check(rep.max_rel_dev, tolerances["lambda_decay_dev"], note=note)


def _vacuum_outputs(result: RunResult, out: Path, tolerances: dict, files: list, checks: dict) -> None:
    rep = vacuum_report(result)
    _write_csv(
        out / "vacuum_report.csv",
        "t,measure,r_inner,r_outer,l4_distance",
        (rep.times, rep.measure, rep.r_inner, rep.r_outer, rep.l4_distance),
    )
    files.append("vacuum_report.csv")

    a0, b0 = _initial_vacuum_faces(result)
    history = VelocityHistory(result.grid, result.times, result.v)
    track = track_interfaces(history, [a0, b0])
    write_interfaces_csv(out / "interfaces.csv", track)
    files.append("interfaces.csv")

    checks["vacuum_overhang_cells"] = _check(
        vacuum_overhang_cells(result), tolerances["vacuum_overhang_cells"]
    )
    try:
        plateau = annulus_plateau_max_density(result)
        checks["vacuum_plateau_max"] = _check(plateau, None, kind="recorded")
    except DomainError as exc:
        checks["vacuum_plateau_max"] = {
            "value": None, "tolerance": None, "pass": True, "note": f"DomainError: {exc}",
        }


def _annulus_fit_outputs(result: RunResult, out: Path, tolerances: dict, files: list, checks: dict) -> None:
    fit = annulus_check_from_run(result)
    header = "a,b,v_a,v_b,alpha,beta,rms,rms_rel,two_alpha,rhs_identity,rel_gap"
    values = (fit.a, fit.b, fit.v_a, fit.v_b, fit.alpha, fit.beta, fit.rms, fit.rms_rel,
              fit.two_alpha, fit.rhs_identity, fit.rel_gap)
    lines = [header, ",".join(format_float(float(x)) for x in values)]
    (out / "annulus_fit.csv").write_text("\n".join(lines) + "\n")
    files.append("annulus_fit.csv")
    if fit.skipped:
        exc = DomainError(fit.note or "fit skipped")
        checks["annulus_rms_rel"] = _failed_check(tolerances["annulus_rms_rel"], exc)
        checks["annulus_identity_rel"] = _failed_check(tolerances["annulus_identity_rel"], exc)
    else:
        checks["annulus_rms_rel"] = _check(fit.rms_rel, tolerances["annulus_rms_rel"])
        checks["annulus_identity_rel"] = _check(fit.rel_gap, tolerances["annulus_identity_rel"])


def _two_fluid_outputs(result: RunResult, out: Path, tolerances: dict, files: list, checks: dict) -> None:
    rep = two_fluid_energy_balance(result)
    _write_csv(
        out / "two_fluid.csv",
        "t,dEdt,rhs,dissipation,a,b",
        (rep.times, rep.dEdt, rep.rhs, rep.dissipation, rep.a_track[1:-1], rep.b_track[1:-1]),
    )
    files.append("two_fluid.csv")
    note = rep.note if rep.truncated else ""
    checks["two_fluid_gap_rel"] = _check(rep.max_gap_rel, tolerances["two_fluid_gap_rel"], note=note)


def _particle_outputs(result: RunResult, seeds, out: Path, tolerances: dict, files: list, checks: dict) -> None:
    rep = particle_residual_from_run(result, seeds)
    header = "t," + ",".join(f"residual_seed_{s:g}" for s in seeds)
    columns = (rep.times,) + tuple(rep.residuals[:, j] for j in range(rep.residuals.shape[1]))
    _write_csv(out / "particles.csv", header, columns)
    files.append("particles.csv")
    note = rep.note if rep.truncated else ""
    checks["particle_residual_l2"] = _check(rep.l2, tolerances["particle_residual_l2"], note=note)


def _blowup_outputs(result: RunResult, out: Path, tolerances: dict, files: list, checks: dict) -> None:
    rep = blowup_report(result)
    pad = np.full(1, np.nan)
    rate_col = np.concatenate([pad, rep.h_rate, pad])
    rate_direct_col = np.concatenate([pad, rep.h_rate_direct, pad])
    margin_col = np.concatenate([pad, rep.margin, pad])
    _write_csv(
        out / "blowup_series.csv",
        "t,h,rhs,bound,support_r,h_rate,h_rate_direct,margin",
        (rep.times, rep.h, rep.rhs, rep.bound, rep.support_r, rate_col, rate_direct_col, margin_col),
    )
    files.append("blowup_series.csv")
    window = tolerances["blowup_margin_window"]
    interior = rep.times[1:-1]
    in_window = interior <= window
    if not np.any(in_window):
        checks["blowup_margin_floor"] = _failed_check(
            tolerances["blowup_margin_floor"],
            DomainError(f"no interior snapshots before t={window}"),
        )
        min_margin_window = float("nan")
    else:
        min_margin_window = float(np.min(rep.margin[in_window]))
        checks["blowup_margin_floor"] = _check(
            min_margin_window, tolerances["blowup_margin_floor"], kind="lower"
        )
    checks["blowup_t_star"] = _check(rep.t_star, None, kind="recorded")
    _write_json(
        out / "blowup_report.json",
        {
            "mass": rep.mass,
            "area0": rep.area0,
            "threshold": rep.threshold,
            "t_star": rep.t_star,
            "h0": float(rep.h[0]),
            "min_margin": rep.min_margin,
            "min_margin_window": min_margin_window,
            "margin_window": window,
        },
    )
    files.append("blowup_report.json")


_DIAGNOSTIC_RUNNERS = {
    "energy": _energy_outputs,
    "jumps": _jump_outputs,
    "lambda_decay": _decay_outputs,
    "vacuum": _vacuum_outputs,
    "annulus_fit": _annulus_fit_outputs,
    "two_fluid": _two_fluid_outputs,
    "particles": _particle_outputs,
    "blowup": _blowup_outputs,
}

# The headline check of each diagnostic, used when a whole diagnostic dies
# with an exception and nothing else could be recorded.
_HEADLINE_CHECK = {
    "energy": "energy_growth",
    "jumps": "rh_residual_rel",
    "lambda_decay": "lambda_decay_dev",
    "vacuum": "vacuum_overhang_cells",
    "annulus_fit": "annulus_rms_rel",
    "two_fluid": "two_fluid_gap_rel",
    "particles": "particle_residual_l2",
    "blowup": "blowup_margin_floor",
}


def execute_run(cfg: RunConfig, out_dir, snapshot_every: int | None = None) -> dict:
    """Run a validated config and persist everything into ``out_dir``.

    Returns the manifest dict (also written to manifest.json).  The solver's
    IntegrityError propagates to the caller; diagnostic-level DomainErrors
    are converted into failed checks so one broken geometry assumption does
    not hide the other reports.
    """
    out = Path(out_dir)
    snap_dir = out / "snapshots"
    snap_dir.mkdir(parents=True, exist_ok=True)

    config_text = dumps_17g(cfg.normalized) + "\n"
    (out / "config.json").write_text(config_text)
    config_sha = hashlib.sha256(config_text.encode()).hexdigest()
    files = ["config.json"]

    cadence = cfg.snapshot_every if snapshot_every is None else int(snapshot_every)
    if cadence < 1:
        raise ConfigurationError("snapshot cadence must be at least 1")
    if cfg.kind == "synthetic_field":
        result = build_synthetic_result(cfg)
    else:
        result = run(cfg.scenario, snapshot_every=cadence)

    grid, law = result.grid, result.law
    p_far = result.scenario.p_far
    for k, t in enumerate(result.times):
        name = f"snapshots/snap_{k:06d}.csv"
        write_snapshot_csv(out / name, grid, law, t, result.rho[k], result.v[k], p_far)
        files.append(name)

    _write_json(
        out / "run_log.json",
        {
            "label": cfg.label,
            "kind": cfg.kind,
            "steps": result.steps,
            "clip_count": result.clip_count,
            "rho_min": result.rho_min,
            "rho_max": result.rho_max,
            "dt_min": result.dt_min,
            "dt_max": result.dt_max,
            "boundary_activity": result.boundary_activity,
            "partial": result.partial,
            "times": list(result.times),
            "dt_at_snapshots": list(result.dt_at_snapshots),
        },
    )
    files.append("run_log.json")

    checks = {}
    for name in _TOGGLES:
        if not cfg.toggles[name]:
            continue
        runner_fn = _DIAGNOSTIC_RUNNERS[name]
        try:
            if name == "particles":
                runner_fn(result, cfg.particle_seeds, out, cfg.tolerances, files, checks)
            else:
                runner_fn(result, out, cfg.tolerances, files, checks)
        except (DomainError, ConfigurationError) as exc:
            headline = _HEADLINE_CHECK[name]
            tol = cfg.tolerances.get(headline)
            checks[headline] = _failed_check(tol, exc)

    summary = {"label": cfg.label, "kind": cfg.kind, "checks": checks}
    _write_json(out / "summary.json", summary)
    files.append("summary.json")

    manifest = {
        "schema_version": SCHEMA_VERSION,
        "code_version": __version__,
        "config_sha256": config_sha,
        "files": sorted(files),
        "checks": {name: entry["pass"] for name, entry in checks.items()},
    }
    _write_json(out / "manifest.json", manifest)
    return manifest


def run_config_file(config_path, out_dir=None, snapshot_every: int | None = None) -> int:
    """Load, validate, execute; returns the process exit code (0 or 1)."""
    cfg = load_config(config_path)
    if out_dir is None:
        out_dir = cfg.output_dir if cfg.output_dir is not None else str(Path("runs") / cfg.label)
    manifest = execute_run(cfg, out_dir, snapshot_every=snapshot_every)
    return 0 if all(manifest["checks"].values()) else 1


# -- run-directory reload ----------------------------------------------------------


def _read_snapshot(path: Path):
    with open(path) as fh:
        first = fh.readline().strip()
        if not first.startswith("# t="):
            raise ConfigurationError(f"snapshot {path} lacks the '# t=' header line")
        t = float(first[4:])
        data = np.loadtxt(fh, delimiter=",", skiprows=1, ndmin=2)
    return t, data


def load_run(run_dir) -> RunResult:
    """Rebuild a RunResult from a persisted run directory.

    The snapshots on disk are the source of truth for the fields; config.json
    rebuilds the scenario (law, grid, regularization), and run_log.json
    restores the step bookkeeping.  The outermost face velocity is pinned to
    zero by the scheme and is not stored per row, so it is re-appended here.
    """
    run_dir = Path(run_dir)
    if not run_dir.is_dir():
        raise ConfigurationError(f"run directory not found: {run_dir}")
    cfg = load_config(run_dir / "config.json")
    snap_paths = sorted((run_dir / "snapshots").glob("snap_*.csv"))
    if not snap_paths:
        raise ConfigurationError(f"no snapshots under {run_dir}/snapshots")
    times = []
    rho = []
    v = []
    for path in snap_paths:
        t, data = _read_snapshot(path)
        times.append(t)
        rho.append(data[:, 1])
        v.append(np.append(data[:, 2], 0.0))
    scenario = cfg.scenario if cfg.scenario is not None else _synthetic_scenario_shell(cfg)
    n_cells = scenario.grid.n_cells
    if rho[0].size != n_cells:
        raise ConfigurationError(
            f"snapshots have {rho[0].size} cells but the config grid says {n_cells}"
        )
    log = json.loads((run_dir / "run_log.json").read_text())
    times = np.asarray(times)
    return RunResult(
        scenario=scenario,
        times=times,
        rho=np.asarray(rho),
        v=np.asarray(v),
        dt_at_snapshots=np.asarray(log["dt_at_snapshots"], dtype=float),
        steps=int(log["steps"]),
        clip_count=int(log["clip_count"]),
        rho_min=float(log["rho_min"]),
        rho_max=float(log["rho_max"]),
        dt_min=float(log["dt_min"]),
        dt_max=float(log["dt_max"]),
        boundary_activity=float(log["boundary_activity"]),
        partial=bool(log["partial"]),
    )


def _merge_manifest_files(run_dir: Path, new_files) -> None:
    """Add files produced after the run to the manifest's file list."""
    manifest_path = run_dir / "manifest.json"
    if not manifest_path.exists():
        return
    manifest = json.loads(manifest_path.read_text())
    manifest["files"] = sorted(set(manifest["files"]) | set(new_files))
    _write_json(manifest_path, manifest)


# -- paths subcommand ---------------------------------------------------------------


def paths_command(run_dir, seeds=None, out_dir=None) -> int:
    """Integrate flow-map paths through a stored run; write paths.csv.

    When the first snapshot carries flagged vacuum cells the two bounding
    interfaces are tracked as well and written to interfaces.csv.  Prints a
    short ordering/collision report; always exits 0 unless loading fails.
    """
    run_dir = Path(run_dir)
    result = load_run(run_dir)
    out = Path(out_dir) if out_dir is not None else run_dir
    out.mkdir(parents=True, exist_ok=True)
    grid = result.grid
    if seeds is None:
        seeds = tuple(f * grid.r_max for f in _SEED_FRACTIONS)
    history = VelocityHistory(grid, result.times, result.v)
    path = integrate_path(history, seeds)
    write_paths_csv(out / "paths.csv", path)
    produced = ["paths.csv"]
    ok, violations = ordering_check(path.radii)
    print(f"paths: {len(seeds)} seeds, quadrature residual {path.residual:.3e}, "
          f"ordering {'preserved' if ok else f'violated at {len(violations)} samples'}")
    try:
        a0, b0 = _initial_vacuum_faces(result)
    except DomainError:
        a0 = None
    if a0 is not None:
        track = track_interfaces(history, [a0, b0])
        write_interfaces_csv(out / "interfaces.csv", track)
        produced.append("interfaces.csv")
        tail = f"collision at t={track.collision_time:g}" if track.collided else "no collision"
        print(f"interfaces: tracked from ({a0:g}, {b0:g}), {tail}")
    if out == run_dir:
        _merge_manifest_files(run_dir, produced)
    return 0


# -- blowup subcommand ---------------------------------------------------------------


_PARAM_JSON_KEYS = ("A", "gamma", "c_lam", "beta", "mu", "rho_tilde", "h0", "m0", "area0")


def _blowup_from_params(raw: dict, out: Path) -> int:
    _reject_unknown(raw, _PARAM_JSON_KEYS, "")
    for key in ("h0", "m0", "area0"):
        if key not in raw:
            raise ConfigurationError(f"parameter file must set {key}")
    law_overrides = {}
    for key in ("A", "gamma", "c_lam", "beta", "mu", "rho_tilde"):
        value = _number(raw, key, "")
        if value is not None:
            law_overrides[key] = value
    law = canonical_law(**law_overrides)
    h0 = _number(raw, "h0", "")
    m0 = _number(raw, "m0", "")
    area0 = _number(raw, "area0", "")
    pred = contradiction_time(h0, law, m0, area0)
    out.mkdir(parents=True, exist_ok=True)
    _write_json(
        out / "blowup_report.json",
        {
            "t_star": pred.t_star,
            "threshold": pred.threshold,
            "h0": pred.h0,
            "mass": pred.m0,
            "area0": pred.area0,
        },
    )
    horizon = max(2.0 * pred.t_star, 1.0)
    ts = np.linspace(0.0, horizon, 201)
    bound = np.asarray(pred.bound(ts), dtype=float)
    _write_csv(out / "blowup_series.csv", "t,bound,threshold",
               (ts, bound, np.full(ts.size, pred.threshold)))
    print(f"contradiction time t_star = {pred.t_star:.12g} (threshold {pred.threshold:.6g})")
    return 0


def blowup_command(target, out_dir=None) -> int:
    """Breakdown report for a run directory, or for a pure-parameter JSON.

    A directory is reloaded and gets the full report (virial series, margins,
    decay bound, predicted contradiction time); a JSON file of law parameters
    plus h0/m0/area0 gets only the closed-form prediction and its envelope.
    """
    target = Path(target)
    if target.is_dir():
        result = load_run(target)
        out = Path(out_dir) if out_dir is not None else target
        out.mkdir(parents=True, exist_ok=True)
        files: list = []
        checks: dict = {}
        tolerances = dict(_DEFAULT_TOLERANCES)
        _blowup_outputs(result, out, tolerances, files, checks)
        entry = checks["blowup_margin_floor"]
        t_star = checks["blowup_t_star"]["value"]
        print(f"blowup: min margin in window = {entry['value']}, "
              f"floor pass = {entry['pass']}, t_star = {t_star}")
        if out == target:
            _merge_manifest_files(target, files)
        return 0 if entry["pass"] else 1
    if not target.exists():
        raise ConfigurationError(f"blowup target not found: {target}")
    raw = json.loads(target.read_text())
    if not isinstance(raw, dict):
        raise ConfigurationError("parameter file must be a JSON object")
    out = Path(out_dir) if out_dir is not None else target.parent
    return _blowup_from_params(raw, out)


# -- sweep -------------------------------------------------------------------------


def _resolve_jobs(jobs: int | None) -> int:
    if jobs is not None:
        value = jobs
    else:
        env = os.environ.get("VISCOFLUX_JOBS")
        if env is not None:
            try:
                value = int(env)
            except ValueError:
                raise ConfigurationError(f"VISCOFLUX_JOBS must be an integer, got {env!r}")
        else:
            value = min(4, os.cpu_count() or 1)
    if value < 1:
        raise ConfigurationError("jobs must be at least 1")
    return value


def _sweep_worker(args) -> dict:
    config_path, out_dir = args
    try:
        cfg = load_config(config_path)
        manifest = execute_run(cfg, out_dir)
        summary = json.loads((Path(out_dir) / "summary.json").read_text())
        return {
            "passed": all(manifest["checks"].values()),
            "checks": summary["checks"],
            "label": summary["label"],
            "kind": summary["kind"],
            "out_dir": str(out_dir),
        }
    except Exception as exc:  # recorded, the sweep must go on
        return {"error": f"{type(exc).__name__}: {exc}", "out_dir": str(out_dir)}


def _normalized_without_delta(config_path):
    cfg = load_config(config_path)
    if cfg.kind != "vacuum_annulus":
        return None, None, cfg.kind
    trimmed = json.loads(dumps_17g(cfg.normalized))
    trimmed["regularization"] = dict(trimmed["regularization"])
    trimmed["regularization"].pop("delta_floor", None)
    trimmed.pop("label", None)
    trimmed.pop("output_dir", None)
    return dumps_17g(trimmed), cfg.normalized["regularization"]["delta_floor"], cfg.kind


def _delta_pairs(config_paths, runs: dict) -> list:
    """Pair vacuum-annulus runs differing only in delta_floor; compare plateaus.

    For each consecutive pair (sorted by decreasing floor) the plateau ratio
    is compared against the floor ratio: linear scaling of the near-vacuum
    density level in the floor means the two agree within a factor of 1.5.
    """
    groups: dict = {}
    for path in config_paths:
        try:
            key, delta, kind = _normalized_without_delta(path)
        except ConfigurationError:
            continue
        if kind != "vacuum_annulus":
            continue
        groups.setdefault(key, []).append((delta, str(path)))
    pairs = []
    for key in sorted(groups):
        members = sorted(groups[key], reverse=True)
        if len(members) < 2:
            continue
        for (d_big, p_big), (d_small, p_small) in zip(members[:-1], members[1:]):
            plateau = []
            for p in (p_big, p_small):
                entry = runs.get(p, {})
                value = None
                if "checks" in entry:
                    value = entry["checks"].get("vacuum_plateau_max", {}).get("value")
                plateau.append(value)
            record = {
                "configs": [p_big, p_small],
                "delta_floor": [d_big, d_small],
                "plateau_max": plateau,
                "floor_ratio": d_small / d_big,
            }
            if plateau[0] and plateau[1]:
                ratio = plateau[1] / plateau[0]
                expected = d_small / d_big
                record["plateau_ratio"] = ratio
                record["linear_in_delta"] = bool(expected / 1.5 <= ratio <= expected * 1.5)
            else:
                record["plateau_ratio"] = None
                record["linear_in_delta"] = None
            pairs.append(record)
    return pairs


_BLOWUP_GRID_KEYS = ("kind", "gamma", "beta", "h0", "m0", "area0", "A", "c_lam")


def _blowup_grid(raw: dict) -> dict:
    """Contradiction-time table over a (gamma, beta) grid; pure closed form.

    Combinations violating 1 < beta <= gamma are skipped with a note rather
    than failing the sweep.  Monotonicity along each axis is reported where
    every entry in the row or column is defined.
    """
    sweep = raw["sweep"]
    _reject_unknown(sweep, _BLOWUP_GRID_KEYS, "sweep.")
    if sweep.get("kind") != "blowup_grid":
        raise ConfigurationError(f"unknown sweep kind: {sweep.get('kind')!r}")
    for key in ("gamma", "beta"):
        if not isinstance(sweep.get(key), list) or not sweep[key]:
            raise ConfigurationError(f"config key sweep.{key} must be a non-empty array")
    gammas = [float(x) for x in sweep["gamma"]]
    betas = [float(x) for x in sweep["beta"]]
    h0 = _number(sweep, "h0", "sweep.")
    m0 = _number(sweep, "m0", "sweep.")
    area0 = _number(sweep, "area0", "sweep.")
    if h0 is None or m0 is None or area0 is None:
        raise ConfigurationError("config keys sweep.h0, sweep.m0, sweep.area0 are all required")
    overrides = {}
    for key in ("A", "c_lam"):
        value = _number(sweep, key, "sweep.")
        if value is not None:
            overrides[key] = value

    table = []
    for g in gammas:
        row = []
        for b in betas:
            if not 1.0 < b <= g:
                row.append(None)
                continue
            law = canonical_law(gamma=g, beta=b, **overrides)
            try:
                row.append(contradiction_time(h0, law, m0, area0).t_star)
            except DomainError:
                row.append(None)
        table.append(row)

    def monotone(values):
        clean = [x for x in values if x is not None]
        if len(clean) != len(values) or len(clean) < 2:
            return None
        diffs = np.diff(clean)
        if np.all(diffs >= 0):
            return "nondecreasing"
        if np.all(diffs <= 0):
            return "nonincreasing"
        return "mixed"

    return {
        "kind": "blowup_grid",
        "gamma": gammas,
        "beta": betas,
        "h0": h0,
        "m0": m0,
        "area0": area0,
        "t_star": table,
        "monotone_in_gamma_per_beta": [monotone([table[i][j] for i in range(len(gammas))]) for j in range(len(betas))],
        "monotone_in_beta_per_gamma": [monotone(row) for row in table],
        "note": "entries are null where the hypotheses 1 < beta <= gamma fail",
    }


def sweep_command(patterns, out_root, jobs: int | None = None) -> int:
    """Run every matching config concurrently and aggregate the manifests.

    Individual failures (bad config, failed checks, solver errors) are
    recorded in sweep_summary.json and do not stop the sweep.  Config files
    carrying a top-level "sweep" object are closed-form parameter scans and
    are evaluated inline.  Exit 0 only when every run passed every check.
    """
    if isinstance(patterns, (str, Path)):
        patterns = [patterns]
    paths = []
    for pattern in patterns:
        paths.extend(_glob.glob(str(pattern)))
    paths = sorted(set(paths))
    if not paths:
        raise ConfigurationError(f"no config files match {', '.join(str(p) for p in patterns)}")

    out_root = Path(out_root)
    out_root.mkdir(parents=True, exist_ok=True)

    run_paths = []
    grids = {}
    for path in paths:
        try:
            raw = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            grids[path] = {"error": f"{type(exc).__name__}: {exc}"}
            continue
        if isinstance(raw, dict) and "sweep" in raw:
            try:
                _reject_unknown(raw, ("schema_version", "sweep"), "")
                if raw.get("schema_version") != SCHEMA_VERSION:
                    raise ConfigurationError(
                        f"config key schema_version must be {SCHEMA_VERSION}, got {raw.get('schema_version')!r}"
                    )
                grids[path] = _blowup_grid(raw)
            except (ConfigurationError, DomainError) as exc:
                grids[path] = {"error": f"{type(exc).__name__}: {exc}"}
        else:
            run_paths.append(path)

    stems = {}
    for path in run_paths:
        stem = Path(path).stem
        if stem in stems:
            raise ConfigurationError(
                f"config files {stems[stem]} and {path} share the stem {stem!r}; "
                "give them distinct names so their output directories cannot collide"
            )
        stems[stem] = path

    n_jobs = _resolve_jobs(jobs)
    tasks = [(path, str(out_root / Path(path).stem)) for path in run_paths]
    results: dict = {}
    if tasks:
        if n_jobs == 1:
            outcomes = [_sweep_worker(task) for task in tasks]
        else:
            with ProcessPoolExecutor(max_workers=n_jobs) as pool:
                outcomes = list(pool.map(_sweep_worker, tasks))
        for (path, _), outcome in zip(tasks, outcomes):
            results[path] = outcome

    summary = {
        "schema_version": SCHEMA_VERSION,
        "code_version": __version__,
        "runs": results,
        "parameter_scans": grids,
        "delta_pairs": _delta_pairs(run_paths, results),
    }
    _write_json(out_root / "sweep_summary.json", summary)

    all_ok = all(entry.get("passed") is True for entry in results.values()) if results else True
    grids_ok = all("error" not in entry for entry in grids.values())
    for path in sorted(results):
        entry = results[path]
        verdict = "ERROR" if "error" in entry else ("pass" if entry["passed"] else "FAIL")
        print(f"{verdict:5s}  {path}")
    for path in sorted(grids):
        verdict = "ERROR" if "error" in grids[path] else "done"
        print(f"{verdict:5s}  {path}")
    return 0 if (all_ok and grids_ok) else 1
