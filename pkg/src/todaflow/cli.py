"""Scenario runner: JSON config in, CSV/JSON/SVG artifacts plus manifest out.

Configs use a strict schema: unknown keys are errors, every validation
problem is reported with its JSON pointer, and numeric preconditions are
checked before any computation starts.  Exit codes: 0 success, 1 config
error, 2 numerical breakdown (cusp, shock, absorption); partial outputs are
kept, with the manifest marking the run incomplete.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy

from . import __version__, dyson, growth, hydro, laurent, loewner, svgout
from .errors import (
    ConfigError,
    CuspError,
    IntegrationBreakdownError,
    NonUnivalentError,
    PointAbsorbedError,
    RootFindError,
    ShockError,
)

log = logging.getLogger(__name__)

SCENARIOS = ("grow", "loewner", "hydro", "dyson", "moments")
FORMATS = ("csv", "json", "svg")

_BREAKDOWN_ERRORS = (
    CuspError,
    NonUnivalentError,
    ShockError,
    PointAbsorbedError,
    IntegrationBreakdownError,
    RootFindError,
)


@dataclass
class ScenarioConfig:
    scenario: str
    seed: int
    out_dir: str
    formats: tuple
    m_order: int | None
    grid_n: int | None
    params: dict
    sha256: str


@dataclass
class ExitReport:
    status: str
    exit_code: int
    out_dir: Path
    manifest: dict


# ---------------------------------------------------------------------------
# validation


class _Ctx:
    def __init__(self):
        self.problems = []

    def err(self, ptr, msg):
        self.problems.append((ptr, msg))


def _check_keys(ctx, obj, ptr, allowed):
    for key in obj:
        if key not in allowed:
            ctx.err(f"{ptr}/{key}", "unknown key")


def _field(ctx, obj, ptr, key, kinds, required=True, default=None):
    if key not in obj:
        if required:
            ctx.err(f"{ptr}/{key}", "missing required key")
        return default
    value = obj[key]
    if kinds == "number":
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            ctx.err(f"{ptr}/{key}", "must be a number")
            return default
        return float(value)
    if kinds == "int":
        if isinstance(value, bool) or not isinstance(value, int):
            ctx.err(f"{ptr}/{key}", "must be an integer")
            return default
        return value
    if kinds == "str":
        if not isinstance(value, str):
            ctx.err(f"{ptr}/{key}", "must be a string")
            return default
        return value
    if kinds == "object":
        if not isinstance(value, dict):
            ctx.err(f"{ptr}/{key}", "must be an object")
            return default
        return value
    if kinds == "array":
        if not isinstance(value, list):
            ctx.err(f"{ptr}/{key}", "must be an array")
            return default
        return value
    raise AssertionError(kinds)


def _complex_pair(ctx, value, ptr):
    if (
        not isinstance(value, list)
        or len(value) != 2
        or any(isinstance(v, bool) or not isinstance(v, (int, float)) for v in value)
    ):
        ctx.err(ptr, "must be a [re, im] number pair")
        return 0j
    return complex(value[0], value[1])


def _validate_map(ctx, obj, ptr):
    if not isinstance(obj, dict):
        ctx.err(ptr, "must be an object")
        return None
    _check_keys(ctx, obj, ptr, {"r", "coeffs"})
    r = _field(ctx, obj, ptr, "r", "number")
    coeffs = _field(ctx, obj, ptr, "coeffs", "array", required=False, default=[])
    if r is not None and r <= 0:
        ctx.err(f"{ptr}/r", "must be positive")
    parsed = []
    for i, c in enumerate(coeffs or []):
        parsed.append(_complex_pair(ctx, c, f"{ptr}/coeffs/{i}"))
    return {"r": r, "coeffs": parsed}


def _validate_potential(ctx, obj, ptr):
    if obj is None:
        return {"kind": "quadratic"}
    if not isinstance(obj, dict):
        ctx.err(ptr, "must be an object")
        return {"kind": "quadratic"}
    _check_keys(ctx, obj, ptr, {"kind"})
    kind = _field(ctx, obj, ptr, "kind", "str")
    if kind not in (None, "quadratic"):
        ctx.err(f"{ptr}/kind", "only the quadratic potential is available via config")
    return {"kind": "quadratic"}


def _validate_flow(ctx, obj, ptr):
    if not isinstance(obj, dict):
        ctx.err(ptr, "must be an object")
        return None
    _check_keys(ctx, obj, ptr, {"kind", "k", "z0", "sign", "duration", "steps"})
    kind = _field(ctx, obj, ptr, "kind", "str")
    if kind not in growth.FlowSpec._KINDS:
        ctx.err(f"{ptr}/kind", f"must be one of {growth.FlowSpec._KINDS}")
    out = {"kind": kind}
    if kind in ("tk_real", "tk_imag"):
        k = _field(ctx, obj, ptr, "k", "int")
        if k is not None and k < 1:
            ctx.err(f"{ptr}/k", "must be >= 1")
        out["k"] = k
    elif "k" in obj:
        ctx.err(f"{ptr}/k", "only harmonic flows take k")
    if kind == "t0_source":
        if "z0" not in obj:
            ctx.err(f"{ptr}/z0", "missing required key")
        else:
            out["z0"] = _complex_pair(ctx, obj["z0"], f"{ptr}/z0")
    elif "z0" in obj:
        ctx.err(f"{ptr}/z0", "only the source flow takes z0")
    sign = _field(ctx, obj, ptr, "sign", "int", required=False, default=1)
    if sign not in (1, -1):
        ctx.err(f"{ptr}/sign", "must be +1 or -1")
    out["sign"] = sign
    duration = _field(ctx, obj, ptr, "duration", "number")
    steps = _field(ctx, obj, ptr, "steps", "int")
    if steps is not None and steps < 1:
        ctx.err(f"{ptr}/steps", "must be >= 1")
    out["duration"] = duration
    out["steps"] = steps
    return out


def _validate_driving(ctx, obj, ptr):
    if not isinstance(obj, dict):
        ctx.err(ptr, "must be an object")
        return None
    kind = _field(ctx, obj, ptr, "kind", "str")
    if kind == "constant":
        _check_keys(ctx, obj, ptr, {"kind", "theta0"})
        return {"kind": kind, "theta0": _field(ctx, obj, ptr, "theta0", "number",
                                               required=False, default=0.0)}
    if kind == "piecewise_linear":
        _check_keys(ctx, obj, ptr, {"kind", "knots"})
        knots = _field(ctx, obj, ptr, "knots", "array", default=[])
        parsed = []
        for i, kn in enumerate(knots or []):
            if (not isinstance(kn, list) or len(kn) != 2
                    or any(isinstance(v, bool) or not isinstance(v, (int, float)) for v in kn)):
                ctx.err(f"{ptr}/knots/{i}", "must be a [q, theta] number pair")
            else:
                parsed.append((float(kn[0]), float(kn[1])))
        if len(parsed) < 2:
            ctx.err(f"{ptr}/knots", "needs at least two knots")
        return {"kind": kind, "knots": parsed}
    if kind == "brownian":
        _check_keys(ctx, obj, ptr, {"kind", "kappa", "dq_grid"})
        kappa = _field(ctx, obj, ptr, "kappa", "number")
        if kappa is not None and kappa < 0:
            ctx.err(f"{ptr}/kappa", "must be non-negative")
        dq = _field(ctx, obj, ptr, "dq_grid", "number", required=False, default=1e-3)
        if dq is not None and dq <= 0:
            ctx.err(f"{ptr}/dq_grid", "must be positive")
        return {"kind": kind, "kappa": kappa, "dq_grid": dq}
    ctx.err(f"{ptr}/kind", "must be one of ('constant', 'piecewise_linear', 'brownian')")
    return None


def _validate_grow(ctx, obj, ptr):
    _check_keys(ctx, obj, ptr, {"map", "potential", "flows", "moment_order", "snapshots"})
    out = {}
    out["map"] = _validate_map(ctx, obj.get("map"), f"{ptr}/map") if "map" in obj else (
        ctx.err(f"{ptr}/map", "missing required key") or None)
    out["potential"] = _validate_potential(ctx, obj.get("potential"), f"{ptr}/potential")
    flows = _field(ctx, obj, ptr, "flows", "array")
    out["flows"] = [
        _validate_flow(ctx, f, f"{ptr}/flows/{i}") for i, f in enumerate(flows or [])
    ]
    if flows is not None and not flows:
        ctx.err(f"{ptr}/flows", "needs at least one leg")
    out["moment_order"] = _field(ctx, obj, ptr, "moment_order", "int", required=False)
    if out["moment_order"] is not None and out["moment_order"] < 1:
        ctx.err(f"{ptr}/moment_order", "must be >= 1")
    out["snapshots"] = _field(ctx, obj, ptr, "snapshots", "int", required=False, default=5)
    if out["snapshots"] is not None and out["snapshots"] < 1:
        ctx.err(f"{ptr}/snapshots", "must be >= 1")
    return out


def _validate_loewner(ctx, obj, ptr):
    _check_keys(ctx, obj, ptr, {"driving", "q0", "q_max", "trace_points", "tracked"})
    out = {}
    out["driving"] = (_validate_driving(ctx, obj.get("driving"), f"{ptr}/driving")
                      if "driving" in obj else ctx.err(f"{ptr}/driving", "missing required key"))
    q0 = _field(ctx, obj, ptr, "q0", "number", required=False, default=0.0)
    q_max = _field(ctx, obj, ptr, "q_max", "number")
    if q0 is not None and q_max is not None and q_max <= q0:
        ctx.err(f"{ptr}/q_max", "must exceed q0")
    out["q0"], out["q_max"] = q0, q_max
    out["trace_points"] = _field(ctx, obj, ptr, "trace_points", "int", required=False, default=64)
    if out["trace_points"] is not None and out["trace_points"] < 2:
        ctx.err(f"{ptr}/trace_points", "must be >= 2")
    tracked = _field(ctx, obj, ptr, "tracked", "array", required=False)
    if tracked is not None:
        pts = [_complex_pair(ctx, p, f"{ptr}/tracked/{i}") for i, p in enumerate(tracked)]
        r0 = np.exp(q0 if q0 is not None else 0.0)
        for i, p in enumerate(pts):
            if abs(p) <= r0:
                ctx.err(f"{ptr}/tracked/{i}", f"must start outside radius {r0:g}")
        out["tracked"] = pts
    else:
        out["tracked"] = None
    return out


def _validate_hydro(ctx, obj, ptr):
    _check_keys(ctx, obj, ptr, {"profile", "speed", "s"})
    out = {}
    prof = _field(ctx, obj, ptr, "profile", "object")
    if prof is not None:
        if "csv" in prof:
            _check_keys(ctx, prof, f"{ptr}/profile", {"csv"})
            out["profile"] = {"csv": _field(ctx, prof, f"{ptr}/profile", "csv", "str")}
        else:
            _check_keys(ctx, prof, f"{ptr}/profile", {"grid", "q_values"})
            grid = _field(ctx, prof, f"{ptr}/profile", "grid", "array")
            qv = _field(ctx, prof, f"{ptr}/profile", "q_values", "array")
            if grid is not None and qv is not None:
                if len(grid) != len(qv) or len(grid) < 2:
                    ctx.err(f"{ptr}/profile", "grid and q_values must match and have >= 2 nodes")
                elif any(b <= a for a, b in zip(grid, grid[1:])):
                    ctx.err(f"{ptr}/profile/grid", "must be strictly increasing")
            out["profile"] = {"grid": grid, "q_values": qv}
    speed = _field(ctx, obj, ptr, "speed", "object")
    if speed is not None:
        kind = _field(ctx, speed, f"{ptr}/speed", "kind", "str")
        if kind == "identity":
            _check_keys(ctx, speed, f"{ptr}/speed", {"kind"})
            out["speed"] = {"kind": kind}
        elif kind == "constant":
            _check_keys(ctx, speed, f"{ptr}/speed", {"kind", "value"})
            out["speed"] = {"kind": kind,
                            "value": _field(ctx, speed, f"{ptr}/speed", "value", "number")}
        elif kind == "table":
            _check_keys(ctx, speed, f"{ptr}/speed", {"kind", "q", "c"})
            qs = _field(ctx, speed, f"{ptr}/speed", "q", "array")
            cs = _field(ctx, speed, f"{ptr}/speed", "c", "array")
            if qs is not None and cs is not None and (len(qs) != len(cs) or len(qs) < 2):
                ctx.err(f"{ptr}/speed", "q and c tables must match and have >= 2 nodes")
            out["speed"] = {"kind": kind, "q": qs, "c": cs}
        elif kind == "table_csv":
            _check_keys(ctx, speed, f"{ptr}/speed", {"kind", "path"})
            out["speed"] = {"kind": kind,
                            "path": _field(ctx, speed, f"{ptr}/speed", "path", "str")}
        elif kind == "family":
            _check_keys(ctx, speed, f"{ptr}/speed", {"kind", "k", "driving", "q0", "q_max"})
            k = _field(ctx, speed, f"{ptr}/speed", "k", "int")
            if k is not None and k < 1:
                ctx.err(f"{ptr}/speed/k", "must be >= 1")
            drv = (_validate_driving(ctx, speed.get("driving"), f"{ptr}/speed/driving")
                   if "driving" in speed else ctx.err(f"{ptr}/speed/driving", "missing required key"))
            out["speed"] = {
                "kind": kind, "k": k, "driving": drv,
                "q0": _field(ctx, speed, f"{ptr}/speed", "q0", "number", required=False, default=0.0),
                "q_max": _field(ctx, speed, f"{ptr}/speed", "q_max", "number"),
            }
        else:
            ctx.err(f"{ptr}/speed/kind",
                    "must be one of ('identity', 'constant', 'table', 'table_csv', 'family')")
    s = _field(ctx, obj, ptr, "s", "number")
    out["s"] = s
    return out


def _validate_dyson(ctx, obj, ptr):
    _check_keys(ctx, obj, ptr, {"N", "hbar", "times", "measure", "mode", "sweeps",
                                "bins", "schedule"})
    out = {}
    n_particles = _field(ctx, obj, ptr, "N", "int")
    if n_particles is not None and n_particles < 1:
        ctx.err(f"{ptr}/N", "must be >= 1")
    hbar = _field(ctx, obj, ptr, "hbar", "number")
    if hbar is not None and hbar <= 0:
        ctx.err(f"{ptr}/hbar", "must be positive")
    out["N"], out["hbar"] = n_particles, hbar
    times = _field(ctx, obj, ptr, "times", "array", required=False, default=[])
    out["times"] = [_complex_pair(ctx, t, f"{ptr}/times/{i}") for i, t in enumerate(times or [])]
    measure = _field(ctx, obj, ptr, "measure", "object", required=False,
                     default={"kind": "plane"})
    if measure is not None:
        kind = _field(ctx, measure, f"{ptr}/measure", "kind", "str")
        if kind == "plane":
            _check_keys(ctx, measure, f"{ptr}/measure", {"kind", "potential"})
            out["measure"] = {
                "kind": "plane",
                "potential": _validate_potential(ctx, measure.get("potential"),
                                                 f"{ptr}/measure/potential"),
            }
        elif kind == "curve":
            _check_keys(ctx, measure, f"{ptr}/measure", {"kind", "curve", "confine"})
            curve = _field(ctx, measure, f"{ptr}/measure", "curve", "object")
            parsed_curve = None
            if curve is not None:
                ckind = _field(ctx, curve, f"{ptr}/measure/curve", "kind", "str")
                if ckind == "real_line":
                    _check_keys(ctx, curve, f"{ptr}/measure/curve", {"kind"})
                    parsed_curve = {"kind": "real_line"}
                elif ckind == "ray":
                    _check_keys(ctx, curve, f"{ptr}/measure/curve", {"kind", "z0", "direction"})
                    parsed_curve = {"kind": "ray"}
                    if "z0" in curve:
                        parsed_curve["z0"] = _complex_pair(ctx, curve["z0"],
                                                           f"{ptr}/measure/curve/z0")
                    else:
                        ctx.err(f"{ptr}/measure/curve/z0", "missing required key")
                    if "direction" in curve:
                        parsed_curve["direction"] = _complex_pair(
                            ctx, curve["direction"], f"{ptr}/measure/curve/direction")
                    else:
                        ctx.err(f"{ptr}/measure/curve/direction", "missing required key")
                else:
                    ctx.err(f"{ptr}/measure/curve/kind",
                            "must be one of ('real_line', 'ray') via config")
            confine = _field(ctx, measure, f"{ptr}/measure", "confine", "object",
                             required=False, default={"kind": "quadratic_hbar"})
            if confine is not None:
                _check_keys(ctx, confine, f"{ptr}/measure/confine", {"kind", "coefficient"})
                ckind = _field(ctx, confine, f"{ptr}/measure/confine", "kind", "str")
                if ckind != "quadratic_hbar":
                    ctx.err(f"{ptr}/measure/confine/kind",
                            "only 'quadratic_hbar' (s^2 / (2 hbar)) is available via config")
                coeff = _field(ctx, confine, f"{ptr}/measure/confine", "coefficient",
                               "number", required=False, default=1.0)
            out["measure"] = {"kind": "curve", "curve": parsed_curve,
                              "confine": {"kind": "quadratic_hbar", "coefficient": coeff}}
        else:
            ctx.err(f"{ptr}/measure/kind", "must be 'plane' or 'curve'")
    mode = _field(ctx, obj, ptr, "mode", "str", required=False, default="minimize")
    if mode not in ("minimize", "metropolis"):
        ctx.err(f"{ptr}/mode", "must be 'minimize' or 'metropolis'")
    out["mode"] = mode
    sweeps = _field(ctx, obj, ptr, "sweeps", "int", required=False, default=200)
    if sweeps is not None and sweeps < 1:
        ctx.err(f"{ptr}/sweeps", "must be >= 1")
    out["sweeps"] = sweeps
    out["bins"] = _field(ctx, obj, ptr, "bins", "int", required=False, default=32)
    sched = _field(ctx, obj, ptr, "schedule", "object", required=False, default={})
    if sched is not None:
        _check_keys(ctx, sched, f"{ptr}/schedule",
                    {"max_iterations", "tolerance", "step0", "proposal_scale", "burn_in"})
        out["schedule"] = {
            "max_iterations": _field(ctx, sched, f"{ptr}/schedule", "max_iterations",
                                     "int", required=False),
            "tolerance": _field(ctx, sched, f"{ptr}/schedule", "tolerance", "number",
                                required=False),
            "step0": _field(ctx, sched, f"{ptr}/schedule", "step0", "number", required=False),
            "proposal_scale": _field(ctx, sched, f"{ptr}/schedule", "proposal_scale",
                                     "number", required=False),
            "burn_in": _field(ctx, sched, f"{ptr}/schedule", "burn_in", "int", required=False),
        }
    return out


def _validate_moments(ctx, obj, ptr):
    _check_keys(ctx, obj, ptr, {"map", "order"})
    out = {}
    out["map"] = (_validate_map(ctx, obj.get("map"), f"{ptr}/map")
                  if "map" in obj else ctx.err(f"{ptr}/map", "missing required key"))
    order = _field(ctx, obj, ptr, "order", "int", required=False, default=16)
    if order is not None and order < 1:
        ctx.err(f"{ptr}/order", "must be >= 1")
    out["order"] = order
    return out


_SECTION_VALIDATORS = {
    "grow": _validate_grow,
    "loewner": _validate_loewner,
    "hydro": _validate_hydro,
    "dyson": _validate_dyson,
    "moments": _validate_moments,
}


def parse_config(text: str) -> ScenarioConfig:
    """Validate UTF-8 JSON scenario text; raises ConfigError listing every problem."""
    ctx = _Ctx()
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError([("", f"invalid JSON: {exc}")])
    if not isinstance(raw, dict):
        raise ConfigError([("", "top level must be an object")])
    allowed = {"scenario", "seed", "output", "resolution"} | set(SCENARIOS)
    _check_keys(ctx, raw, "", allowed)
    scenario = _field(ctx, raw, "", "scenario", "str")
    if scenario is not None and scenario not in SCENARIOS:
        ctx.err("/scenario", f"must be one of {SCENARIOS}")
    present = [s for s in SCENARIOS if s in raw]
    if len(present) > 1:
        ctx.err("", f"exactly one scenario section allowed, found {present}")
    if scenario in SCENARIOS:
        if scenario not in raw:
            ctx.err(f"/{scenario}", "missing scenario section")
        elif not isinstance(raw[scenario], dict):
            ctx.err(f"/{scenario}", "must be an object")
    for s in present:
        if scenario in SCENARIOS and s != scenario:
            ctx.err(f"/{s}", f"section does not match scenario {scenario!r}")
    seed = _field(ctx, raw, "", "seed", "int", required=False, default=0)
    out_dir = "out"
    formats = FORMATS
    output = _field(ctx, raw, "", "output", "object", required=False)
    if output is not None:
        _check_keys(ctx, output, "/output", {"directory", "formats"})
        out_dir = _field(ctx, output, "/output", "directory", "str", required=False,
                         default="out")
        fmts = _field(ctx, output, "/output", "formats", "array", required=False)
        if fmts is not None:
            for i, f in enumerate(fmts):
                if f not in FORMATS:
                    ctx.err(f"/output/formats/{i}", f"must be one of {FORMATS}")
            formats = tuple(f for f in fmts if f in FORMATS)
    m_order = grid_n = None
    res = _field(ctx, raw, "", "resolution", "object", required=False)
    if res is not None:
        _check_keys(ctx, res, "/resolution", {"M", "n"})
        m_order = _field(ctx, res, "/resolution", "M", "int", required=False)
        grid_n = _field(ctx, res, "/resolution", "n", "int", required=False)
        if m_order is not None and m_order < 0:
            ctx.err("/resolution/M", "must be >= 0")
        if grid_n is not None and (grid_n < 8 or grid_n & (grid_n - 1)):
            ctx.err("/resolution/n", "must be a power of two >= 8")
        if m_order is not None and grid_n is not None and grid_n < 4 * (m_order + 1):
            ctx.err("/resolution/n", "must be at least 4*(M+1)")
    params = {}
    if scenario in SCENARIOS and isinstance(raw.get(scenario), dict):
        params = _SECTION_VALIDATORS[scenario](ctx, raw[scenario], f"/{scenario}")
    if ctx.problems:
        raise ConfigError(ctx.problems)
    return ScenarioConfig(
        scenario=scenario,
        seed=seed,
        out_dir=out_dir,
        formats=tuple(formats),
        m_order=m_order,
        grid_n=grid_n,
        params=params,
        sha256=hashlib.sha256(text.encode("utf-8")).hexdigest(),
    )


# ---------------------------------------------------------------------------
# artifact writers


def _float_repr(x) -> str:
    return repr(float(x))


def _write_csv(path: Path, header, rows):
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(_float_repr(v) if isinstance(v, float) else str(v) for v in row))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def _write_json(path: Path, obj):
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _complex_list(values) -> list:
    return [[float(v.real), float(v.imag)] for v in np.asarray(values, dtype=complex)]


# ---------------------------------------------------------------------------
# scenario pipelines


def _build_driving(spec: dict, seed: int, q_range=(0.0, 1.0)) -> loewner.DrivingFunction:
    if spec["kind"] == "constant":
        return loewner.DrivingFunction.constant(spec["theta0"])
    if spec["kind"] == "piecewise_linear":
        return loewner.DrivingFunction.piecewise_linear(spec["knots"])
    return loewner.DrivingFunction.brownian(spec["kappa"], seed, spec["dq_grid"], q_range)


def _run_grow(cfg: ScenarioConfig, out: Path, files: dict):
    p = cfg.params
    m = laurent.LaurentMap(p["map"]["r"], np.array(p["map"]["coeffs"], dtype=complex))
    if cfg.m_order is not None:
        m = m.with_order(cfg.m_order)
    potential = growth.PotentialSpec.quadratic()
    schedule = []
    for f in p["flows"]:
        flow = growth.FlowSpec(f["kind"], k=f.get("k", 0), z0=f.get("z0", 0j), sign=f["sign"])
        schedule.append((flow, f["duration"], f["steps"]))
    order = p["moment_order"] if p["moment_order"] is not None else m.order
    pending = None
    try:
        traj = growth.run(m, schedule, potential, moment_order=order, n=cfg.grid_n)
    except (CuspError, NonUnivalentError) as exc:
        # keep whatever the run produced before the breakdown
        traj = getattr(exc, "partial", None)
        if traj is None or not traj.records:
            raise
        pending = exc
    if "csv" in cfg.formats:
        header = ["step", "time", "t0", "r"]
        for j in range(m.order + 1):
            header += [f"re_a{j}", f"im_a{j}"]
        rows = []
        for rec in traj.records:
            row = [rec.index, float(rec.time), float(rec.moments.t0), float(rec.map.r)]
            for c in rec.map.coeffs:
                row += [float(c.real), float(c.imag)]
            rows.append(row)
        _write_csv(out / "trajectory.csv", header, rows)
        files["trajectory.csv"] = True
        rows = []
        for rec in traj.records:
            for k in range(1, order + 1):
                rows.append([
                    rec.index, k,
                    float(rec.moments.t[k - 1].real), float(rec.moments.t[k - 1].imag),
                    float(rec.moments.v[k - 1].real), float(rec.moments.v[k - 1].imag),
                ])
        _write_csv(out / "moments.csv", ["step", "k", "re_tk", "im_tk", "re_vk", "im_vk"], rows)
        files["moments.csv"] = True
    n_plot = cfg.grid_n or laurent.default_grid_size(m.order)
    picks = np.unique(np.linspace(0, len(traj.records) - 1, p["snapshots"]).astype(int))
    snapshots = []
    for i in picks:
        rec = traj.records[i]
        pts = laurent.evaluate(rec.map, laurent.circle_grid(n_plot))
        snapshots.append((rec.index, pts))
    if "json" in cfg.formats:
        _write_json(out / "contours.json", [
            {"step": int(i), "points": _complex_list(pts)} for i, pts in snapshots
        ])
        files["contours.json"] = True
    if "svg" in cfg.formats:
        layers = [("polyline", pts, {"closed": True}) for _, pts in snapshots]
        (out / "contours.svg").write_text(svgout.render_svg(layers), encoding="utf-8")
        files["contours.svg"] = True
    if pending is not None:
        raise pending
    final = traj.final
    return {"final_r": final.r, "final_t0": traj.records[-1].moments.t0,
            "steps": traj.records[-1].index}


def _run_loewner(cfg: ScenarioConfig, out: Path, files: dict):
    p = cfg.params
    driving = _build_driving(p["driving"], cfg.seed, (p["q0"], p["q_max"]))
    if p["tracked"] is not None:
        family = loewner.LoewnerFamily(p["q0"], p["q_max"], driving,
                                       tuple(p["tracked"]))
    else:
        family = loewner.default_family(p["q0"], p["q_max"], driving)
    q_grid = np.linspace(p["q0"], p["q_max"], p["trace_points"])
    tips = loewner.slit_trace(family, q_grid)
    if "csv" in cfg.formats:
        _write_csv(out / "trace.csv", ["q", "re_tip", "im_tip"],
                   [[float(q), float(t.real), float(t.imag)] for q, t in zip(q_grid, tips)])
        files["trace.csv"] = True
    if "json" in cfg.formats:
        snaps = []
        for q in (p["q0"], 0.5 * (p["q0"] + p["q_max"]), p["q_max"]):
            z0 = np.asarray(family.z_samples, dtype=complex)
            res = loewner.advance_many(z0 / family.r0, family.q0, q, driving,
                                       family.base_step)
            pairs = [
                [[float(z.real), float(z.imag)], [float(w.real), float(w.imag)]]
                for z, w, dead in zip(z0, res.w, res.absorbed) if not dead
            ]
            snaps.append({"q": float(q), "pairs": pairs})
        _write_json(out / "family.json", snaps)
        files["family.json"] = True
    if "svg" in cfg.formats:
        circle = family.r0 * laurent.circle_grid(128)
        layers = [("polyline", circle, {"closed": True}),
                  ("polyline", tips, {"stroke": "#b3402a"})]
        (out / "trace.svg").write_text(svgout.render_svg(layers), encoding="utf-8")
        files["trace.svg"] = True
    return {"final_tip": [float(tips[-1].real), float(tips[-1].imag)],
            "capacity_range": [p["q0"], p["q_max"]]}


def _build_speed(spec: dict, seed: int):
    if spec["kind"] == "identity":
        return lambda q: q
    if spec["kind"] == "constant":
        c0 = spec["value"]
        return lambda q: c0
    if spec["kind"] == "table":
        qs = np.asarray(spec["q"], dtype=float)
        cs = np.asarray(spec["c"], dtype=float)
        return lambda q: float(np.interp(q, qs, cs))
    if spec["kind"] == "table_csv":
        return hydro.read_speed_csv(spec["path"])
    driving = _build_driving(spec["driving"], seed, (spec["q0"], spec["q_max"]))
    family = loewner.default_family(spec["q0"], spec["q_max"], driving)
    k = spec["k"]
    return lambda q: hydro.characteristic_speed(k, family, q)


def _run_hydro(cfg: ScenarioConfig, out: Path, files: dict):
    p = cfg.params
    if "csv" in p["profile"]:
        profile = hydro.read_profile_csv(p["profile"]["csv"])
    else:
        profile = hydro.Profile(np.asarray(p["profile"]["grid"], dtype=float),
                                np.asarray(p["profile"]["q_values"], dtype=float))
    speed = _build_speed(p["speed"], cfg.seed)
    s_star = hydro.shock_time(profile, speed)
    result = hydro.solve_characteristics(profile, speed, p["s"])
    if "csv" in cfg.formats:
        _write_csv(out / "profile.csv", ["t0", "q"],
                   [[float(a), float(b)] for a, b in zip(result.grid, result.q_values)])
        files["profile.csv"] = True
    if "json" in cfg.formats:
        _write_json(out / "shock.json",
                    {"s": p["s"], "s_star": None if np.isinf(s_star) else s_star})
        files["shock.json"] = True
    return {"s": p["s"], "s_star": None if np.isinf(s_star) else s_star}


def _build_gas_config(cfg: ScenarioConfig) -> dyson.GasConfig:
    p = cfg.params
    sched_kwargs = {k: v for k, v in (p.get("schedule") or {}).items() if v is not None}
    schedule = dyson.Schedule(**sched_kwargs)
    times = np.array(p["times"], dtype=complex)
    measure = p["measure"]
    if measure["kind"] == "plane":
        return dyson.GasConfig(N=p["N"], hbar=p["hbar"], times=times, measure="plane",
                               seed=cfg.seed, schedule=schedule)
    curve_spec = measure["curve"]
    if curve_spec["kind"] == "real_line":
        curve = dyson.CurveSpec.real_line()
    else:
        curve = dyson.CurveSpec.ray(curve_spec["z0"], curve_spec["direction"])
    coeff = measure["confine"]["coefficient"]
    hbar = p["hbar"]
    confine = lambda s: coeff * np.asarray(s) ** 2 / (2.0 * hbar)
    return dyson.GasConfig(N=p["N"], hbar=hbar, times=times, measure="curve",
                           curve=curve, confine=confine, seed=cfg.seed, schedule=schedule)


def _run_dyson(cfg: ScenarioConfig, out: Path, files: dict):
    p = cfg.params
    config = _build_gas_config(cfg)
    if p["mode"] == "minimize":
        state = dyson.minimize(config)
        extra = {"converged": bool(state.converged), "iterations": int(state.iterations),
                 "energy": float(state.energy)}
        trace = state.trace
    else:
        run_result = dyson.metropolis(config, p["sweeps"])
        state = run_result.samples[-1]
        extra = {"acceptance": run_result.acceptance,
                 "proposal_scale": run_result.proposal_scale,
                 "energy": float(state.energy)}
        trace = None
    support = dyson.support_boundary(state, config, bins=p["bins"])
    if "csv" in cfg.formats:
        _write_csv(out / "state.csv", ["index", "re_z", "im_z"],
                   [[i, float(z.real), float(z.imag)] for i, z in enumerate(state.positions)])
        files["state.csv"] = True
        if trace:
            _write_csv(out / "energy_trace.csv", ["iteration", "energy", "grad_norm"],
                       [[i, float(e), float(g)] for i, e, g in trace])
            files["energy_trace.csv"] = True
    if "json" in cfg.formats:
        payload = {"kind": support.kind}
        if support.kind == "plane":
            payload["boundary"] = _complex_list(support.boundary)
            payload["fitted_map"] = support.fitted_map.to_json()
        else:
            payload["s_min"] = support.s_min
            payload["s_max"] = support.s_max
            counts, edges = support.histogram
            payload["histogram"] = {"counts": [int(c) for c in counts],
                                    "edges": [float(e) for e in edges]}
        _write_json(out / "support.json", payload)
        files["support.json"] = True
    if "svg" in cfg.formats:
        layers = [("points", state.positions, {})]
        if support.kind == "plane":
            layers.append(("polyline", support.boundary, {"closed": True}))
        (out / "cloud.svg").write_text(svgout.render_svg(layers), encoding="utf-8")
        files["cloud.svg"] = True
    if support.kind == "plane":
        extra["fitted_r"] = support.fitted_map.r
    else:
        extra["s_min"], extra["s_max"] = support.s_min, support.s_max
    return extra


def _run_moments(cfg: ScenarioConfig, out: Path, files: dict):
    p = cfg.params
    m = laurent.LaurentMap(p["map"]["r"], np.array(p["map"]["coeffs"], dtype=complex))
    moments = growth.moment_vector(m, p["order"], n=cfg.grid_n)
    if "csv" in cfg.formats:
        rows = [[k, float(moments.t[k - 1].real), float(moments.t[k - 1].imag),
                 float(moments.v[k - 1].real), float(moments.v[k - 1].imag)]
                for k in range(1, p["order"] + 1)]
        _write_csv(out / "moments.csv", ["k", "re_tk", "im_tk", "re_vk", "im_vk"], rows)
        files["moments.csv"] = True
    if "json" in cfg.formats:
        _write_json(out / "moments.json", {
            "t0": moments.t0,
            "t": _complex_list(moments.t),
            "v": _complex_list(moments.v),
        })
        files["moments.json"] = True
    return {"t0": moments.t0}


_RUNNERS = {
    "grow": _run_grow,
    "loewner": _run_loewner,
    "hydro": _run_hydro,
    "dyson": _run_dyson,
    "moments": _run_moments,
}


def run_scenario(cfg: ScenarioConfig, out_dir: str | None = None) -> ExitReport:
    """Execute a validated scenario, writing artifacts and a manifest."""
    out = Path(out_dir if out_dir is not None else cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files: dict = {}
    started = time.perf_counter()
    status, breakdown, summary = "ok", None, {}
    try:
        summary = _RUNNERS[cfg.scenario](cfg, out, files)
    except _BREAKDOWN_ERRORS as exc:
        status = "breakdown"
        breakdown = {"type": type(exc).__name__, "message": str(exc)}
        for attr in ("theta", "s_star", "q_absorbed"):
            val = getattr(exc, attr, None)
            if val is not None:
                breakdown[attr] = float(val)
        log.error("numerical breakdown: %s", exc)
    except (OSError, ValueError) as exc:
        # bad referenced files or precondition violations surfaced at build
        # time count as configuration problems, not numerical breakdown
        raise ConfigError([(f"/{cfg.scenario}", str(exc))]) from exc
    manifest = {
        "scenario": cfg.scenario,
        "seed": cfg.seed,
        "config_sha256": cfg.sha256,
        "versions": {"todaflow": __version__, "numpy": np.__version__,
                     "scipy": scipy.__version__},
        "status": status,
        "complete": status == "ok",
        "breakdown": breakdown,
        "summary": summary,
        "files": [],
        "wall_time_s": 0.0,
    }
    for name in sorted(files):
        data = (out / name).read_bytes()
        manifest["files"].append({
            "name": name,
            "sha256": hashlib.sha256(data).hexdigest(),
            "bytes": len(data),
        })
    manifest["wall_time_s"] = time.perf_counter() - started
    _write_json(out / "manifest.json", manifest)
    return ExitReport(status=status, exit_code=0 if status == "ok" else 2,
                      out_dir=out, manifest=manifest)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="todaflow",
        description="Run a growth / slit / transport / gas scenario from a JSON config.",
    )
    parser.add_argument("config", help="path to the scenario JSON")
    parser.add_argument("--out", help="output directory (overrides the config)")
    parser.add_argument("--seed", type=int, help="seed override")
    parser.add_argument("--format", help="comma-separated subset of csv,json,svg")
    args = parser.parse_args(argv)
    level = os.environ.get("TODAFLOW_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING))
    try:
        text = Path(args.config).read_text(encoding="utf-8")
    except OSError as exc:
        print(f"cannot read config: {exc}", file=sys.stderr)
        return 1
    try:
        cfg = parse_config(text)
    except ConfigError as exc:
        for ptr, msg in exc.problems:
            print(f"config error at {ptr or '/'}: {msg}", file=sys.stderr)
        return 1
    if args.seed is not None:
        cfg.seed = args.seed
    if args.format:
        fmts = tuple(f.strip() for f in args.format.split(","))
        bad = [f for f in fmts if f not in FORMATS]
        if bad:
            print(f"unknown formats: {bad}", file=sys.stderr)
            return 1
        cfg.formats = fmts
    try:
        report = run_scenario(cfg, out_dir=args.out)
    except ConfigError as exc:
        for ptr, msg in exc.problems:
            print(f"config error at {ptr or '/'}: {msg}", file=sys.stderr)
        return 1
    if report.status != "ok":
        print(f"scenario ended in {report.status}: see manifest.json", file=sys.stderr)
    return report.exit_code


if __name__ == "__main__":
    sys.exit(main())
