"""Batch front door: bias sweeps from a config file.

Exit codes: 0 ok, 1 usage, 2 config error, 3 numerical failure (any
non-converged bias point without --continue-on-divergence).

Bias points run sequentially with warm starts; the per-slice transport
work inside one bias point parallelizes over --threads with an ordered
reduction, so iv_curve.csv is byte-identical for any thread count.
"""

from __future__ import annotations

import argparse
import configparser
import io
import os
import sys
import time
from dataclasses import dataclass

import numpy as np

from . import __version__, outputs
from .carriers import FermiLevels
from .config import ConfigError, config_hash, parse_config, render_config
from .device import BiasPoint, DeviceError, build_mesh, sample_fields
from .scloop import LoopConfig, run_loop
from .transport import CurrentResult, integrate_current

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3

THREADS_ENV = "TFETSIM_THREADS"


class _Parser(argparse.ArgumentParser):
    """argparse with usage errors mapped to exit code 1."""

    def error(self, message):
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


@dataclass
class SweepPoint:
    """One bias point of a sweep: solver state plus integrated current."""

    bias: BiasPoint
    status: str
    iterations: int
    wall_s: float
    i_per_width: float
    ec: object = None
    ev: object = None
    fields: object = None
    current: CurrentResult | None = None


def _build_parser() -> _Parser:
    p = _Parser(prog="tfetsim",
                description="2D ballistic NEGF bias sweeps for tunnel FETs")
    p.add_argument("--config", required=True, help="config file (INI schema)")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                   help="override a config value (repeatable)")
    p.add_argument("--mesh-spacing", type=float, default=None,
                   help="override [solver] mesh_spacing_nm")
    p.add_argument("--backend", choices=("closed-boundary", "negf"), default=None,
                   help="override the carrier backend inside the loop")
    p.add_argument("--threads", type=int, default=None,
                   help=f"worker threads for transport slices "
                        f"(default: ${THREADS_ENV} or config)")
    p.add_argument("--dump-fields", action="store_true",
                   help="dump per-bias field grids and plot data")
    p.add_argument("--continue-on-divergence", action="store_true",
                   help="keep sweeping and exit 0 even if a bias point fails")
    return p


def _apply_overrides(text: str, sets: list[str]) -> str:
    cp = configparser.ConfigParser(delimiters=("=",),
                                   inline_comment_prefixes=(";", "#"))
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"config parse error: {exc}") from None
    for item in sets:
        if "=" not in item or "." not in item.split("=", 1)[0]:
            raise ConfigError(f"--set expects SECTION.KEY=VALUE, got '{item}'")
        target, value = item.split("=", 1)
        section, key = target.split(".", 1)
        if not cp.has_section(section):
            cp.add_section(section)
        cp[section][key] = value
    buf = io.StringIO()
    cp.write(buf)
    return buf.getvalue()


def run(config_path: str, out_dir: str, overrides: list[str] | None = None,
        mesh_spacing: float | None = None, backend: str | None = None,
        threads: int | None = None, dump_fields: bool = False,
        continue_on_divergence: bool = False) -> tuple[int, outputs.RunManifest]:
    """Execute a sweep; returns (exit status, manifest)."""
    with open(config_path) as fh:
        text = fh.read()
    if overrides:
        text = _apply_overrides(text, overrides)
    cfg = parse_config(text)
    if mesh_spacing is not None:
        cfg.solver.mesh_spacing_nm = mesh_spacing
    if backend is not None:
        cfg.solver.backend = backend
    if threads is None:
        threads = int(os.environ.get(THREADS_ENV, cfg.solver.threads))
    cfg.solver.threads = max(1, threads)

    os.makedirs(out_dir, exist_ok=True)
    resolved = render_config(cfg)
    chash = config_hash(resolved)
    manifest = outputs.RunManifest(config_hash=chash, version=__version__)
    with open(manifest.add_file(os.path.join(out_dir, "resolved_config.ini")), "w") as fh:
        fh.write(resolved)

    spec = cfg.device
    mesh = build_mesh(spec, cfg.solver.mesh_spacing_nm, cfg.solver.mesh_spacing_y_nm)
    fields = sample_fields(spec, mesh)
    loop_cfg = LoopConfig(
        relax=cfg.solver.relax, alpha=cfg.solver.alpha, tol_v=cfg.solver.tol_v,
        max_iter=cfg.solver.max_iter, backend=cfg.solver.backend,
        pocket_removal=cfg.solver.pocket_removal,
        extension_nm=cfg.solver.extension_nm, eta=cfg.solver.eta_ev)

    points: list[SweepPoint] = []
    any_failed = False
    for vd in cfg.sweep.vd:
        v_warm = None
        for vg in cfg.sweep.vg:
            bias = BiasPoint(vg=vg, vd=vd)
            t0 = time.perf_counter()
            res = run_loop(spec, mesh, fields, bias, loop_cfg, v_init=v_warm)
            v_warm = res.v
            status = res.trace.status
            current = None
            i_val = float("nan")
            if status == "converged":
                current = integrate_current(
                    res.ec, res.ev, fields, FermiLevels.from_bias(bias),
                    spec.temperature, n_kz=cfg.solver.n_kz,
                    eta=cfg.solver.eta_ev, threads=cfg.solver.threads)
                i_val = current.i_per_width
                if current.status == "no-overlap":
                    status = "converged"  # zero current, still a valid point
            else:
                any_failed = True
            wall = time.perf_counter() - t0
            points.append(SweepPoint(
                bias=bias, status=status, iterations=res.trace.iterations,
                wall_s=wall, i_per_width=i_val, ec=res.ec, ev=res.ev,
                fields=fields, current=current))
            manifest.bias_points.append({
                "vg_v": vg, "vd_v": vd, "status": status,
                "iterations": res.trace.iterations,
                "wall_s": round(wall, 3),
                "i_a_per_nm": None if np.isnan(i_val) else i_val,
            })
            trace_path = manifest.add_file(os.path.join(
                out_dir, f"convergence_vg{vg:+.3f}_vd{vd:+.3f}.csv"))
            outputs.write_columns(trace_path, {
                "iteration": np.arange(res.trace.iterations, dtype=float),
                "max_dv_v": np.array(res.trace.dv),
                "max_dn_rel": np.array(res.trace.dn_rel),
            }, {"config_hash": chash, "status": res.trace.status})
            if status != "converged" and not continue_on_divergence:
                break
        if any_failed and not continue_on_divergence:
            break

    iv_path = manifest.add_file(os.path.join(out_dir, "iv_curve.csv"))
    outputs.write_columns(iv_path, {
        "vg_v": np.array([p.bias.vg for p in points]),
        "vd_v": np.array([p.bias.vd for p in points]),
        "i_a_per_nm": np.array([p.i_per_width for p in points]),
        "status": np.array([p.status for p in points]),
    }, {"config_hash": chash, "version": __version__,
        "units": "V, V, A/nm, -"})

    converged_points = [p for p in points if p.status == "converged"]
    for path in outputs.emit_plots(converged_points, "iv", out_dir,
                                   {"config_hash": chash}):
        manifest.add_file(path)
    if dump_fields:
        for kind in ("te", "bands", "barrier"):
            for path in outputs.emit_plots(converged_points, kind, out_dir,
                                           {"config_hash": chash}):
                manifest.add_file(path)

    manifest_path = os.path.join(out_dir, "manifest.json")
    manifest.add_file(manifest_path)
    manifest.write(manifest_path)

    status = EXIT_OK if (not any_failed or continue_on_divergence) else EXIT_NUMERICAL
    return status, manifest


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        status, manifest = run(
            args.config, args.out, overrides=args.set,
            mesh_spacing=args.mesh_spacing, backend=args.backend,
            threads=args.threads, dump_fields=args.dump_fields,
            continue_on_divergence=args.continue_on_divergence)
    except (ConfigError, DeviceError) as exc:
        print(f"tfetsim: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"tfetsim: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # numerical failures surface as exit 3
        print(f"tfetsim: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    for bp in manifest.bias_points:
        i_txt = "n/a" if bp["i_a_per_nm"] is None else f"{bp['i_a_per_nm']:.6e} A/nm"
        print(f"Vg={bp['vg_v']:+.3f} V Vd={bp['vd_v']:+.3f} V: {bp['status']} "
              f"({bp['iterations']} iterations, {i_txt})")
    return status


if __name__ == "__main__":
    sys.exit(main())
