"""Config schema: parse, validate, resolve defaults, and echo.

INI format (configparser). Sections and keys:

    [device]
    lx_nm = 50            ; body length
    ly_nm = 10            ; body thickness
    lz_nm = 1000          ; assumed width (normalization only)
    temperature_k = 300

    [regions]             ; ordered; first listed wins boundary ties
    source  = x0=0  x1=15 y0=0 y1=10 material=silicon doping_cm3=-1e20
    channel = x0=15 x1=35 y0=0 y1=10 material=silicon doping_cm3=1e17
    drain   = x0=35 x1=50 y0=0 y1=10 material=silicon doping_cm3=1e20

    [gates]               ; side is top|bottom; segment in nm
    top    = side=top    x0=15 x1=35 workfunction_ev=4.5 t_ox_nm=1 eps_ox=3.9
    bottom = side=bottom x0=15 x1=35 workfunction_ev=4.5 t_ox_nm=1 eps_ox=3.9

    [contacts]            ; ohmic source at x=0, drain at x=lx (fixed)
    source = ohmic
    drain  = ohmic

    [materials]           ; optional overrides / additions to the shipped table
    mymat = eg=0.8 mc_star=0.1 mv_star=0.2 eps_r=13 chi=4.2

    [solver]
    mesh_spacing_nm = 1.0
    mesh_spacing_y_nm = 1.0   ; optional; defaults to mesh_spacing_nm
    backend = closed-boundary ; or negf
    relax = carrier           ; carrier | band | combined
    alpha = 0.7
    tol_v = 1e-5
    max_iter = 200
    pocket_removal = true
    extension_nm = 6.0
    eta_ev = 1e-6
    n_kz = 9
    threads = 1

    [sweep]
    vg_v = 0:1.5:0.1      ; start:stop:step (inclusive), or a space-separated list
    vd_v = 0.1

Unknown keys and malformed values raise ConfigError naming the key. The fully
resolved config is echoed next to the outputs; reloading the echo reproduces a
bit-identical DeviceSpec.
"""

from __future__ import annotations

import configparser
import hashlib
import io
from dataclasses import dataclass, field

import numpy as np

from .device import (DeviceError, DeviceSpec, GateSpec, MaterialParams,
                     Region, builtin_materials)


class ConfigError(ValueError):
    """Config text violates the documented schema."""


_DEVICE_KEYS = {"lx_nm", "ly_nm", "lz_nm", "temperature_k"}
_REGION_KEYS = {"x0", "x1", "y0", "y1", "material", "doping_cm3"}
_GATE_KEYS = {"side", "x0", "x1", "workfunction_ev", "t_ox_nm", "eps_ox"}
_MATERIAL_KEYS = {"eg", "mc_star", "mv_star", "eps_r", "chi"}
_SOLVER_DEFAULTS = {
    "mesh_spacing_nm": 1.0,
    "mesh_spacing_y_nm": None,
    "backend": "closed-boundary",
    "relax": "carrier",
    "alpha": 0.7,
    "tol_v": 1e-5,
    "max_iter": 200,
    "pocket_removal": True,
    "extension_nm": 6.0,
    "eta_ev": 1e-6,
    "n_kz": 9,
    "threads": 1,
}
_SWEEP_DEFAULTS = {"vg_v": "0.0", "vd_v": "0.0"}


@dataclass
class SolverConfig:
    mesh_spacing_nm: float = 1.0
    mesh_spacing_y_nm: float | None = None
    backend: str = "closed-boundary"
    relax: str = "carrier"
    alpha: float = 0.7
    tol_v: float = 1e-5
    max_iter: int = 200
    pocket_removal: bool = True
    extension_nm: float = 6.0
    eta_ev: float = 1e-6
    n_kz: int = 9
    threads: int = 1


@dataclass
class SweepConfig:
    vg: tuple[float, ...] = (0.0,)
    vd: tuple[float, ...] = (0.0,)
    vg_text: str = "0.0"
    vd_text: str = "0.0"


@dataclass
class SimConfig:
    device: DeviceSpec
    solver: SolverConfig = field(default_factory=SolverConfig)
    sweep: SweepConfig = field(default_factory=SweepConfig)
    extra_materials: dict[str, MaterialParams] = field(default_factory=dict)


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _parse_kv_line(section: str, name: str, text: str,
                   allowed: set[str]) -> dict[str, str]:
    out = {}
    for token in text.split():
        if "=" not in token:
            raise ConfigError(
                f"[{section}] {name}: token '{token}' is not key=value")
        k, v = token.split("=", 1)
        if k not in allowed:
            raise ConfigError(f"[{section}] {name}: unknown key '{k}'")
        if k in out:
            raise ConfigError(f"[{section}] {name}: duplicate key '{k}'")
        out[k] = v
    missing = allowed - out.keys()
    if missing:
        raise ConfigError(
            f"[{section}] {name}: missing keys {sorted(missing)}")
    return out


def _to_float(section: str, key: str, text: str) -> float:
    try:
        return float(text)
    except ValueError:
        raise ConfigError(f"[{section}] {key}: '{text}' is not a number") from None


def _parse_bias_list(section: str, key: str, text: str) -> tuple[float, ...]:
    text = text.strip()
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise ConfigError(f"[{section}] {key}: ranges are start:stop:step")
        start, stop, step = (_to_float(section, key, p) for p in parts)
        if step <= 0:
            raise ConfigError(f"[{section}] {key}: step must be positive")
        n = int(round((stop - start) / step))
        vals = start + step * np.arange(n + 1)
        return tuple(round(v, 12) for v in vals if v <= stop + 1e-12)
    vals = tuple(_to_float(section, key, t) for t in text.split())
    if not vals:
        raise ConfigError(f"[{section}] {key}: empty value")
    return vals


def parse_config(text: str) -> SimConfig:
    """Parse and validate config text into a fully resolved SimConfig."""
    cp = configparser.ConfigParser(delimiters=("=",), inline_comment_prefixes=(";", "#"))
    cp.optionxform = str  # keep key case; region/gate names are user-visible
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"config parse error: {exc}") from None

    known_sections = {"device", "regions", "gates", "contacts", "materials",
                      "solver", "sweep"}
    for s in cp.sections():
        if s not in known_sections:
            raise ConfigError(f"unknown section [{s}]")
    if "device" not in cp:
        raise ConfigError("missing section [device]")

    dev = dict(cp["device"])
    for k in dev:
        if k not in _DEVICE_KEYS:
            raise ConfigError(f"[device] unknown key '{k}'")
    for k in ("lx_nm", "ly_nm"):
        if k not in dev:
            raise ConfigError(f"[device] missing key '{k}'")
    lx = _to_float("device", "lx_nm", dev["lx_nm"])
    ly = _to_float("device", "ly_nm", dev["ly_nm"])
    lz = _to_float("device", "lz_nm", dev.get("lz_nm", "1000"))
    temp = _to_float("device", "temperature_k", dev.get("temperature_k", "300"))

    materials = builtin_materials()
    extra = {}
    if "materials" in cp:
        for name, line in cp["materials"].items():
            kv = _parse_kv_line("materials", name, line, _MATERIAL_KEYS)
            try:
                m = MaterialParams(
                    name=name,
                    eg=_to_float("materials", name, kv["eg"]),
                    mc_star=_to_float("materials", name, kv["mc_star"]),
                    mv_star=_to_float("materials", name, kv["mv_star"]),
                    eps_r=_to_float("materials", name, kv["eps_r"]),
                    chi=_to_float("materials", name, kv["chi"]),
                )
            except DeviceError as exc:
                raise ConfigError(str(exc)) from None
            materials[name] = m
            extra[name] = m

    regions = []
    if "regions" in cp:
        for name, line in cp["regions"].items():
            kv = _parse_kv_line("regions", name, line, _REGION_KEYS)
            regions.append(Region(
                name=name,
                x0=_to_float("regions", name, kv["x0"]),
                x1=_to_float("regions", name, kv["x1"]),
                y0=_to_float("regions", name, kv["y0"]),
                y1=_to_float("regions", name, kv["y1"]),
                material=kv["material"],
                doping=_to_float("regions", name, kv["doping_cm3"]),
            ))

    gates = []
    if "gates" in cp:
        for name, line in cp["gates"].items():
            kv = _parse_kv_line("gates", name, line, _GATE_KEYS)
            gates.append(GateSpec(
                name=name,
                side=kv["side"],
                x0=_to_float("gates", name, kv["x0"]),
                x1=_to_float("gates", name, kv["x1"]),
                workfunction=_to_float("gates", name, kv["workfunction_ev"]),
                t_ox=_to_float("gates", name, kv["t_ox_nm"]),
                eps_ox=_to_float("gates", name, kv["eps_ox"]),
            ))

    if "contacts" in cp:
        for name, line in cp["contacts"].items():
            if name not in ("source", "drain"):
                raise ConfigError(f"[contacts] unknown key '{name}'")
            if line.strip() != "ohmic":
                raise ConfigError(f"[contacts] {name}: only 'ohmic' is supported")

    try:
        spec = DeviceSpec(lx=lx, ly=ly, lz=lz, temperature=temp,
                          regions=tuple(regions), gates=tuple(gates),
                          materials=materials)
    except DeviceError as exc:
        raise ConfigError(str(exc)) from None

    solver = SolverConfig()
    if "solver" in cp:
        for k, v in cp["solver"].items():
            if k not in _SOLVER_DEFAULTS:
                raise ConfigError(f"[solver] unknown key '{k}'")
            if k in ("backend", "relax"):
                setattr(solver, k, v.strip())
            elif k in ("max_iter", "n_kz", "threads"):
                setattr(solver, k, int(_to_float("solver", k, v)))
            elif k == "pocket_removal":
                if v.strip().lower() not in ("true", "false"):
                    raise ConfigError(f"[solver] {k}: expected true/false")
                solver.pocket_removal = v.strip().lower() == "true"
            else:
                setattr(solver, k, _to_float("solver", k, v))
    if solver.backend not in ("closed-boundary", "negf"):
        raise ConfigError(f"[solver] backend: unknown backend '{solver.backend}'")
    if solver.relax not in ("carrier", "band", "combined"):
        raise ConfigError(f"[solver] relax: unknown mode '{solver.relax}'")
    if not (0.0 <= solver.alpha < 1.0):
        raise ConfigError("[solver] alpha: must satisfy 0 <= alpha < 1")

    sweep = SweepConfig()
    if "sweep" in cp:
        for k, v in cp["sweep"].items():
            if k not in _SWEEP_DEFAULTS:
                raise ConfigError(f"[sweep] unknown key '{k}'")
        if "vg_v" in cp["sweep"]:
            sweep.vg_text = cp["sweep"]["vg_v"].strip()
            sweep.vg = _parse_bias_list("sweep", "vg_v", sweep.vg_text)
        if "vd_v" in cp["sweep"]:
            sweep.vd_text = cp["sweep"]["vd_v"].strip()
            sweep.vd = _parse_bias_list("sweep", "vd_v", sweep.vd_text)

    return SimConfig(device=spec, solver=solver, sweep=sweep, extra_materials=extra)


def load_device(text: str) -> DeviceSpec:
    """Parse config text and return the validated DeviceSpec."""
    return parse_config(text).device


def render_config(cfg: SimConfig) -> str:
    """Canonical echo of a resolved config; reloading it is bit-identical."""
    spec = cfg.device
    out = io.StringIO()
    w = out.write
    w("[device]\n")
    w(f"lx_nm = {_fmt(spec.lx)}\n")
    w(f"ly_nm = {_fmt(spec.ly)}\n")
    w(f"lz_nm = {_fmt(spec.lz)}\n")
    w(f"temperature_k = {_fmt(spec.temperature)}\n")
    w("\n[regions]\n")
    for r in spec.regions:
        w(f"{r.name} = x0={_fmt(r.x0)} x1={_fmt(r.x1)} y0={_fmt(r.y0)} "
          f"y1={_fmt(r.y1)} material={r.material} doping_cm3={_fmt(r.doping)}\n")
    w("\n[gates]\n")
    for g in spec.gates:
        w(f"{g.name} = side={g.side} x0={_fmt(g.x0)} x1={_fmt(g.x1)} "
          f"workfunction_ev={_fmt(g.workfunction)} t_ox_nm={_fmt(g.t_ox)} "
          f"eps_ox={_fmt(g.eps_ox)}\n")
    w("\n[contacts]\n")
    w("source = ohmic\n")
    w("drain = ohmic\n")
    if cfg.extra_materials:
        w("\n[materials]\n")
        for m in cfg.extra_materials.values():
            w(f"{m.name} = eg={_fmt(m.eg)} mc_star={_fmt(m.mc_star)} "
              f"mv_star={_fmt(m.mv_star)} eps_r={_fmt(m.eps_r)} chi={_fmt(m.chi)}\n")
    s = cfg.solver
    w("\n[solver]\n")
    w(f"mesh_spacing_nm = {_fmt(s.mesh_spacing_nm)}\n")
    if s.mesh_spacing_y_nm is not None:
        w(f"mesh_spacing_y_nm = {_fmt(s.mesh_spacing_y_nm)}\n")
    w(f"backend = {s.backend}\n")
    w(f"relax = {s.relax}\n")
    w(f"alpha = {_fmt(s.alpha)}\n")
    w(f"tol_v = {_fmt(s.tol_v)}\n")
    w(f"max_iter = {s.max_iter}\n")
    w(f"pocket_removal = {_fmt(s.pocket_removal)}\n")
    w(f"extension_nm = {_fmt(s.extension_nm)}\n")
    w(f"eta_ev = {_fmt(s.eta_ev)}\n")
    w(f"n_kz = {s.n_kz}\n")
    w(f"threads = {s.threads}\n")
    w("\n[sweep]\n")
    w(f"vg_v = {cfg.sweep.vg_text}\n")
    w(f"vd_v = {cfg.sweep.vd_text}\n")
    return out.getvalue()


def config_hash(text: str) -> str:
    """Stable hash of the resolved config echo."""
    return hashlib.sha256(text.encode()).hexdigest()[:16]
