"""Self-consistent Poisson / quantum-carrier iteration.

One outer iteration: bands from the current potential, pocket removal,
carrier densities from the chosen backend (closed-boundary eigenproblem by
default, NEGF optionally), charge assembly, and a screened linear Poisson
solve. Fixed-point damping uses a forgetting factor on carriers and/or
bands; (1 - alpha) is halved adaptively when the update starts
oscillating. Convergence is max|dV| <= tol.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from .carriers import (FermiLevels, closed_boundary_density, fill_pockets,
                       negf_density, neutral_level, screening_derivative)
from .constants import COUL_NM, CM3_TO_NM3, HB2M, KB_EV
from .device import BiasPoint, DeviceFields, DeviceSpec, FieldMap, Mesh2D
from .poisson import (assemble_charge, band_reference, device_bc,
                      bands_from_potential, gate_effective_potential,
                      solve_poisson)

logger = logging.getLogger(__name__)


@dataclass
class LoopConfig:
    relax: str = "carrier"          # carrier | band | combined
    alpha: float = 0.7              # forgetting factor, 0 <= alpha < 1
    tol_v: float = 1e-5             # V, max-norm stop rule
    max_iter: int = 200
    backend: str = "closed-boundary"  # or 'negf'
    pocket_removal: bool = True
    extension_nm: float = 6.0
    eta: float = 1e-6
    adapt_alpha: bool = True
    per_kt: float = 5.0
    dump_dir: str | None = None

    def __post_init__(self):
        if not (0.0 <= self.alpha < 1.0):
            raise ValueError("alpha must satisfy 0 <= alpha < 1")
        if self.tol_v <= 0:
            raise ValueError("tolerance must be positive")
        if self.relax not in ("carrier", "band", "combined"):
            raise ValueError(f"unknown relaxation mode '{self.relax}'")
        if self.backend not in ("closed-boundary", "negf"):
            raise ValueError(f"unknown carrier backend '{self.backend}'")


@dataclass
class ConvergenceTrace:
    dv: list[float] = field(default_factory=list)
    dn_rel: list[float] = field(default_factory=list)
    wall_s: list[float] = field(default_factory=list)
    status: str = "max-iter"

    @property
    def iterations(self) -> int:
        return len(self.dv)


@dataclass
class LoopResult:
    v: FieldMap
    ec: FieldMap
    ev: FieldMap
    n: FieldMap
    p: FieldMap
    trace: ConvergenceTrace


def relax(new: np.ndarray, old: np.ndarray, alpha: float) -> np.ndarray:
    """out = (1 - alpha) * calculated + alpha * old."""
    return (1.0 - alpha) * new + alpha * old


def initial_guess(spec: DeviceSpec, mesh: Mesh2D, fields: DeviceFields,
                  bias: BiasPoint) -> FieldMap:
    """Depletion-approximation junction profile plus a screened gate term.

    Each region gets its neutral potential (shifted by a linear-in-x share
    of the applied source-drain bias); junction steps are smoothed with
    textbook depletion widths; gated segments add a surface term decaying
    into the body. Deterministic, used only to shorten the loop.
    """
    t = spec.temperature
    ec0 = band_reference(fields).values
    x = mesh.x

    # regions ordered by center for the 1D x profile (row at mid-thickness)
    j_mid = mesh.ny // 2
    y_mid = mesh.y[j_mid]
    row_regions = []
    for r in sorted(spec.regions, key=lambda r: 0.5 * (r.x0 + r.x1)):
        if r.y0 - 1e-9 <= y_mid <= r.y1 + 1e-9:
            row_regions.append(r)

    targets = []
    for r in row_regions:
        frac = 0.5 * (r.x0 + r.x1) / spec.lx
        mu = -(bias.vs + (bias.vd - bias.vs) * frac)
        mat = spec.materials[r.material]
        zeta = neutral_level(r.doping, mat, t)
        i_mid = int(round(0.5 * (r.x0 + r.x1) / mesh.ax))
        i_mid = min(max(i_mid, 0), mesh.nx)
        targets.append(ec0[i_mid, j_mid] - mu + zeta)

    v1d = np.zeros(mesh.nx + 1)
    for r, tv in zip(row_regions, targets):
        sel = (x >= r.x0 - 1e-9) & (x <= r.x1 + 1e-9)
        v1d[sel] = tv

    for k in range(len(row_regions) - 1):
        ra, rb = row_regions[k], row_regions[k + 1]
        dv = targets[k + 1] - targets[k]
        if abs(dv) < 1e-12:
            continue
        na = max(abs(ra.doping), 1e14) * CM3_TO_NM3
        nb = max(abs(rb.doping), 1e14) * CM3_TO_NM3
        eps_r = spec.materials[ra.material].eps_r
        w_tot = np.sqrt(2.0 * eps_r * abs(dv) * (na + nb) / (COUL_NM * na * nb))
        wa = min(w_tot * nb / (na + nb), 0.5 * (ra.x1 - ra.x0))
        wb = min(w_tot * na / (na + nb), 0.5 * (rb.x1 - rb.x0))
        xj = ra.x1
        span = wa + wb
        if span <= 0:
            continue
        left = (x > xj - wa) & (x <= xj)
        v1d[left] = targets[k] + dv * (x[left] - (xj - wa)) ** 2 / (wa * span)
        right = (x > xj) & (x < xj + wb)
        v1d[right] = targets[k + 1] - dv * ((xj + wb) - x[right]) ** 2 / (wb * span)

    v = np.repeat(v1d[:, None], mesh.ny + 1, axis=1)

    # screened gate-induced surface shift under gated segments
    lam = 2.0  # nm
    y = mesh.y
    for g in spec.gates:
        v_eff = gate_effective_potential(g.workfunction, fields, bias.vg)
        c_ox = g.eps_ox / g.t_ox
        eps_s = spec.materials[spec.regions[0].material].eps_r
        share = c_ox / (c_ox + eps_s / lam)
        sel = (x >= g.x0 - 1e-9) & (x <= g.x1 + 1e-9)
        dist = (spec.ly - y) if g.side == "top" else y
        v[sel, :] += share * (v_eff - v1d[sel, None]) * np.exp(-dist[None, :] / lam)

    return FieldMap(mesh, v, "V", "V")


def _remove_pockets(ec: FieldMap, ev: FieldMap) -> tuple[FieldMap, FieldMap, list]:
    """Clamp band fields against the pocket-free 1D envelopes.

    Detection runs on the y-minimum of the conduction profile (y-maximum
    for valence); outside pockets both fields are untouched.
    """
    report = []
    prof_c = ec.values.min(axis=1)
    env_c, rep_c = fill_pockets(prof_c, "conduction")
    ec_new = ec.like(np.maximum(ec.values, env_c[:, None]))
    for r in rep_c:
        report.append({"band": "conduction", **r})

    prof_v = ev.values.max(axis=1)
    env_v, rep_v = fill_pockets(prof_v, "valence")
    ev_new = ev.like(np.minimum(ev.values, env_v[:, None]))
    for r in rep_v:
        report.append({"band": "valence", **r})
    return ec_new, ev_new, report


def run_loop(spec: DeviceSpec, mesh: Mesh2D, fields: DeviceFields,
             bias: BiasPoint, cfg: LoopConfig,
             v_init: FieldMap | None = None) -> LoopResult:
    """Iterate Poisson and the carrier backend to self-consistency."""
    levels = FermiLevels.from_bias(bias)
    t = spec.temperature
    bc = device_bc(spec, mesh, fields, bias)
    v = v_init if v_init is not None else initial_guess(spec, mesh, fields, bias)
    v = FieldMap(mesh, v.values.copy(), "V", "V")

    trace = ConvergenceTrace()
    alpha = cfg.alpha
    n_prev = p_prev = None
    delta_prev = None
    n_use = p_use = None

    for it in range(cfg.max_iter):
        t0 = time.perf_counter()
        ec, ev = bands_from_potential(v, fields)
        if cfg.pocket_removal:
            ec_b, ev_b, _ = _remove_pockets(ec, ev)
        else:
            ec_b, ev_b = ec, ev

        if cfg.backend == "closed-boundary":
            n_calc, p_calc = closed_boundary_density(
                ec_b, ev_b, fields, levels, t, extension_nm=cfg.extension_nm)
        else:
            n_calc, p_calc = negf_density(
                ec_b, ev_b, fields, levels, t, eta=cfg.eta, per_kt=cfg.per_kt)

        if cfg.relax in ("carrier", "combined") and n_prev is not None:
            n_use = n_calc.like(relax(n_calc.values, n_prev, alpha))
            p_use = p_calc.like(relax(p_calc.values, p_prev, alpha))
        else:
            n_use, p_use = n_calc, p_calc

        rho = assemble_charge(n_use, p_use, fields.doping)
        v_raw = solve_poisson(rho, fields.eps, bc,
                              screening=screening_derivative(n_use, p_use, fields, t),
                              v_ref=v.values)
        if cfg.relax in ("band", "combined"):
            v_new = v.like(relax(v_raw.values, v.values, alpha))
        else:
            v_new = v_raw

        delta = v_new.values - v.values
        dv = float(np.abs(delta).max())
        if n_prev is not None:
            scale = max(float(n_use.values.max()), 1.0)
            dn = float(np.abs(n_use.values - n_prev).max()) / scale
        else:
            dn = np.inf
        trace.dv.append(dv)
        trace.dn_rel.append(dn)
        trace.wall_s.append(time.perf_counter() - t0)

        if cfg.dump_dir is not None:
            from . import outputs
            outputs.dump_iteration_fields(cfg.dump_dir, it, v=v_new, ec=ec,
                                          ev=ev, n=n_use, p=p_use)

        if cfg.adapt_alpha and delta_prev is not None:
            if float(np.vdot(delta, delta_prev).real) < 0.0:
                alpha = 0.5 * (1.0 + alpha)
                logger.debug("oscillation detected at iteration %d; alpha -> %.4f",
                             it, alpha)
        delta_prev = delta

        n_prev, p_prev = n_use.values, p_use.values
        v = v_new

        if dv <= cfg.tol_v:
            trace.status = "converged"
            break
        if it >= 10 and dv > 5.0 * trace.dv[it - 10]:
            trace.status = "diverged"
            break
    else:
        trace.status = "max-iter"

    ec, ev = bands_from_potential(v, fields)
    return LoopResult(v=v, ec=ec, ev=ev, n=n_use, p=p_use, trace=trace)
