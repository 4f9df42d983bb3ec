"""Terminal current over the tunneling window, the WKB comparator engine,
and the Kane local-generation diagnostic.

Current per unit width:

    I/Lz = q/(pi^2 hbar) int_0^kz_max dkz int_Emin^Emax dE T_kz(E) [f1 - f2]

with the (E, kz) limits from the kz = 0 band overlap. Each slice rebuilds
the effective fields and the Hamiltonian; quadrature is Gauss-Legendre in
kz (smooth integrand) and uniform trapezoid in E. Slices are independent;
they may run on a worker pool, and the reduction is an ordered sum over a
preallocated grid so results are bit-stable for any worker count.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import negf
from .bands import SubbandSlice, TunnelWindow, tunnel_window
from .carriers import FermiLevels, fermi
from .constants import CM_TO_NM, HB2M, HBAR_EVS, KB_EV, Q_E
from .device import DeviceFields, FieldMap, Mesh2D
from .hamiltonian import assemble

#: q / (pi^2 hbar) in A/eV: multiplied by an (eV * 1/nm) integral it gives A/nm.
CURRENT_PREF = Q_E / (np.pi**2 * HBAR_EVS)


@dataclass
class CurrentResult:
    """Integrated current per unit width plus the quadrature metadata."""

    i_per_width: float            # A/nm
    status: str                   # 'ok' | 'no-overlap'
    window: TunnelWindow
    e_grid: np.ndarray
    e_weights: np.ndarray
    kz_nodes: np.ndarray
    kz_weights: np.ndarray
    t_matrix: np.ndarray          # (n_kz, n_e) transmissions
    partial_kz: np.ndarray        # dI/dkz at the kz nodes, A/nm per 1/nm
    refinement_ok: bool | None = None   # set by the Richardson check


def _kz_rule(kz_max: float, n_kz: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = np.polynomial.legendre.leggauss(n_kz)
    return 0.5 * kz_max * (x + 1.0), 0.5 * kz_max * w


def _energy_rule(window: TunnelWindow, temperature: float,
                 e_spacing: float | None) -> tuple[np.ndarray, np.ndarray]:
    width = window.e_max - window.e_min
    de = e_spacing if e_spacing is not None else min(
        KB_EV * temperature / 5.0, width / 200.0)
    n = max(2, int(np.ceil(width / de)) + 1)
    e = np.linspace(window.e_min, window.e_max, n)
    w = np.full(n, e[1] - e[0])
    w[0] *= 0.5
    w[-1] *= 0.5
    return e, w


def slice_transmission(slc: SubbandSlice, energy: float,
                       eta: float = negf.DEFAULT_ETA,
                       method: str = "rgf") -> float:
    """NEGF transmission for one (E, k_z) with freshly built fields."""
    eff = slc.fields_at(energy)
    ham = assemble(eff.u, eff.m_star, slc.fields.mesh)
    return negf.solve_slice(ham, energy, kz=slc.kz, eta=eta, method=method,
                            with_ldos=False).t


def transmission_spectrum(ec: FieldMap, ev: FieldMap, fields: DeviceFields,
                          energies: np.ndarray, kz: float = 0.0,
                          eta: float = negf.DEFAULT_ETA,
                          method: str = "rgf") -> np.ndarray:
    """T(E) at fixed k_z (plot data and comparisons)."""
    slc = SubbandSlice.build(ec, ev, kz, fields)
    return np.array([slice_transmission(slc, e, eta=eta, method=method)
                     for e in energies])


def integrate_current(ec: FieldMap, ev: FieldMap, fields: DeviceFields,
                      levels: FermiLevels, temperature: float,
                      n_kz: int = 9, e_spacing: float | None = None,
                      eta: float = negf.DEFAULT_ETA, method: str = "rgf",
                      threads: int = 1,
                      refine_check: bool = False) -> CurrentResult:
    """Current per unit width over the band-to-band tunneling window."""
    window = tunnel_window(ec, ev, fields)
    if window.empty:
        return CurrentResult(
            i_per_width=0.0, status="no-overlap", window=window,
            e_grid=np.empty(0), e_weights=np.empty(0),
            kz_nodes=np.empty(0), kz_weights=np.empty(0),
            t_matrix=np.empty((0, 0)), partial_kz=np.empty(0))

    kz_nodes, kz_w = _kz_rule(window.kz_max, n_kz)
    e_grid, e_w = _energy_rule(window, temperature, e_spacing)
    slices = [SubbandSlice.build(ec, ev, kz, fields) for kz in kz_nodes]

    t_matrix = np.empty((n_kz, e_grid.size))

    def work(task):
        a, b = task
        t_matrix[a, b] = slice_transmission(slices[a], e_grid[b],
                                            eta=eta, method=method)

    tasks = [(a, b) for a in range(n_kz) for b in range(e_grid.size)]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(work, tasks))
    else:
        for task in tasks:
            work(task)

    occ = fermi(levels.mu1, e_grid, temperature) - fermi(levels.mu2, e_grid, temperature)
    partial = CURRENT_PREF * (t_matrix * (e_w * occ)[None, :]).sum(axis=1)
    current = float((kz_w * partial).sum())

    result = CurrentResult(
        i_per_width=current, status="ok", window=window,
        e_grid=e_grid, e_weights=e_w, kz_nodes=kz_nodes, kz_weights=kz_w,
        t_matrix=t_matrix, partial_kz=partial)

    if refine_check:
        fine = integrate_current(ec, ev, fields, levels, temperature,
                                 n_kz=2 * n_kz,
                                 e_spacing=(e_grid[1] - e_grid[0]) / 2.0,
                                 eta=eta, method=method, threads=threads)
        scale = max(abs(current), abs(fine.i_per_width), 1e-300)
        result.refinement_ok = abs(fine.i_per_width - current) / scale < 0.02
    return result


def partial_current(ec: FieldMap, ev: FieldMap, fields: DeviceFields,
                    levels: FermiLevels, temperature: float, kz: float,
                    e_spacing: float | None = None,
                    eta: float = negf.DEFAULT_ETA, method: str = "rgf") -> float:
    """dI/dkz at an explicit kz (A/nm per 1/nm); property-test helper."""
    window = tunnel_window(ec, ev, fields)
    if window.empty:
        return 0.0
    e_grid, e_w = _energy_rule(window, temperature, e_spacing)
    slc = SubbandSlice.build(ec, ev, kz, fields)
    t_vals = np.array([slice_transmission(slc, e, eta=eta, method=method)
                       for e in e_grid])
    occ = fermi(levels.mu1, e_grid, temperature) - fermi(levels.mu2, e_grid, temperature)
    return float(CURRENT_PREF * (t_vals * e_w * occ).sum())


# ---------------------------------------------------------------------------
# WKB comparator engine
# ---------------------------------------------------------------------------

def wkb_transmission(u: FieldMap, m_star: FieldMap, energy: float,
                     path: str = "straight-x") -> tuple[np.ndarray, float]:
    """Straight-x WKB transmission per y row and the parallel-path sum.

    T_row = exp(-2 int |k| dx) over the classically forbidden segment of
    the row, with the local effective mass inside the barrier; rows without
    a forbidden segment contribute 1. Segment endpoints are located by
    linear interpolation of U - E sign changes; edge cells use the exact
    integral of sqrt(linear) so thin barriers are not over-counted.
    """
    if path != "straight-x":
        raise ValueError("only the straight-x path policy is implemented")
    mesh = u.mesh
    t_rows = np.array([
        _wkb_path_t(u.values[:, j], m_star.values[:, j], energy, mesh.ax)
        for j in range(mesh.ny + 1)])
    return t_rows, float(t_rows.sum())


def confined_band_profiles(ec: FieldMap, ev: FieldMap, fields: DeviceFields,
                           window_kt: float = 4.0, temperature: float = 300.0
                           ) -> tuple[np.ndarray, np.ndarray]:
    """Confinement-overcorrected 1D band profiles along x.

    Per column, the band extremum is raised (lowered for valence) by the
    hard-wall first-bound-state energy of the local well: the contiguous
    span within `window_kt` kT of the extremum. A narrow surface well
    under the gate then charges its full zero-point energy, which is the
    assumption that makes confinement-corrected 1D WKB models collapse at
    high gate bias; on flat columns the span is the whole thickness and
    the correction is the mild full-body term.
    """
    mesh = fields.mesh
    nyp = mesh.ny + 1
    delta = window_kt * KB_EV * temperature
    ec1 = np.empty(mesh.nx + 1)
    ev1 = np.empty(mesh.nx + 1)

    def well_width(col) -> tuple[int, float]:
        j0 = int(np.argmin(col))
        low = col <= col[j0] + delta
        a = j0
        while a > 0 and low[a - 1]:
            a -= 1
        b = j0
        while b < nyp - 1 and low[b + 1]:
            b += 1
        return j0, (b - a + 1) * mesh.ay

    for i in range(mesh.nx + 1):
        j0, w = well_width(ec.values[i, :])
        ec1[i] = ec.values[i, j0] + HB2M * np.pi**2 / (fields.mc.values[i, j0] * w * w)
        j0, w = well_width(-ev.values[i, :])
        ev1[i] = ev.values[i, j0] - HB2M * np.pi**2 / (fields.mv.values[i, j0] * w * w)
    return ec1, ev1


def _wkb_path_t(u: np.ndarray, m: np.ndarray, energy: float, dx: float) -> float:
    """exp(-2 int |k| dx) along one precomputed 1D effective profile."""
    s = u - energy
    kappa = np.sqrt(np.maximum(s, 0.0) * m / HB2M)
    integral = 0.0
    for i in range(s.size - 1):
        sa, sb = s[i], s[i + 1]
        if sa <= 0.0 and sb <= 0.0:
            continue
        if sa > 0.0 and sb > 0.0:
            integral += 0.5 * (kappa[i] + kappa[i + 1]) * dx
        elif sa > 0.0:
            integral += (2.0 / 3.0) * kappa[i] * sa / (sa - sb) * dx
        else:
            integral += (2.0 / 3.0) * kappa[i + 1] * sb / (sb - sa) * dx
    return float(np.exp(-2.0 * integral))


def wkb_current_references(ec: FieldMap, ev: FieldMap, fields: DeviceFields,
                           levels: FermiLevels, temperature: float,
                           n_kz: int = 9, e_spacing: float | None = None
                           ) -> tuple[float, float]:
    """Bounding WKB reference currents (A/nm).

    Returns (ignoring confinement, overcorrecting confinement). The first
    sums every straight mesh row as an independent path at full energy:
    no transverse kinetic cost and maximal path multiplicity, an upper
    reference. The second collapses the device to the single first-
    transverse-subband path (profiles from `confined_band_profiles`):
    every higher mode is discarded and the full local zero-point energy is
    charged everywhere, a lower reference. Only the ordering against the
    NEGF current is meaningful, not the magnitudes.
    """
    kt5 = KB_EV * temperature / 5.0

    def grids(e_min, e_max, m_r):
        window = TunnelWindow(e_min=e_min, e_max=e_max,
                              kz_max=np.sqrt(max(e_max - e_min, 0.0) * m_r / HB2M),
                              m_reduced=m_r)
        if window.empty:
            return None
        kz_nodes, kz_w = _kz_rule(window.kz_max, n_kz)
        e_grid, e_w = _energy_rule(window, temperature, e_spacing)
        occ = fermi(levels.mu1, e_grid, temperature) \
            - fermi(levels.mu2, e_grid, temperature)
        return kz_nodes, kz_w, e_grid, e_w, occ

    # upper reference: full-energy straight rows, summed
    window = tunnel_window(ec, ev, fields)
    i_ignore = 0.0
    if not window.empty:
        kz_nodes, kz_w, e_grid, e_w, occ = grids(window.e_min, window.e_max,
                                                 window.m_reduced)
        for kz, wk in zip(kz_nodes, kz_w):
            slc = SubbandSlice.build(ec, ev, kz, fields)
            for e, we, f in zip(e_grid, e_w, occ):
                eff = slc.fields_at(e)
                _, t_sum = wkb_transmission(eff.u, eff.m_star, e)
                i_ignore += wk * we * f * t_sum
        i_ignore *= CURRENT_PREF

    # lower reference: single first-subband path
    ec1, ev1 = confined_band_profiles(ec, ev, fields, temperature=temperature)
    mc1 = fields.mc.values.mean(axis=1)
    mv1 = fields.mv.values.mean(axis=1)
    m_r = float((mc1 * mv1 / (mc1 + mv1)).max())
    i_over = 0.0
    made = grids(float(ec1.min()), float(ev1.max()), m_r)
    if made is not None:
        kz_nodes, kz_w, e_grid, e_w, occ = made
        for kz, wk in zip(kz_nodes, kz_w):
            ec_s = ec1 + HB2M * kz * kz / mc1
            ev_s = ev1 - HB2M * kz * kz / mv1
            for e, we, f in zip(e_grid, e_w, occ):
                u, m = _effective_profile_1d(e, ec_s, ev_s, mc1, mv1)
                i_over += wk * we * f * _wkb_path_t(u, m, e, fields.mesh.ax)
        i_over *= CURRENT_PREF
    return i_ignore, i_over


def _effective_profile_1d(e: float, ec_s: np.ndarray, ev_s: np.ndarray,
                          mc: np.ndarray, mv: np.ndarray
                          ) -> tuple[np.ndarray, np.ndarray]:
    """1D counterpart of the piecewise effective potential/mass."""
    from .bands import tunneling_mass, two_band_kxy_sq

    u = np.empty(ec_s.shape)
    m = np.empty(ec_s.shape)
    val = e <= ev_s
    con = e >= ec_s
    gap = ~(val | con)
    u[val] = 2.0 * e - ev_s[val]
    m[val] = mv[val]
    u[con] = ec_s[con]
    m[con] = mc[con]
    if gap.any():
        mt = tunneling_mass(e, ev_s[gap], ec_s[gap], mc[gap], mv[gap])
        kxy2 = two_band_kxy_sq(e, ec_s[gap], ev_s[gap], mc[gap], mv[gap])
        u[gap] = e - HB2M * kxy2 / mt
        m[gap] = mt
    return u, m


# ---------------------------------------------------------------------------
# Diagnostics
# ---------------------------------------------------------------------------

def kane_generation(v: FieldMap, eg: FieldMap, a: float, b: float,
                    gamma: float) -> FieldMap:
    """Kane local generation G = A F^gamma / sqrt(Eg) exp(-B Eg^1.5 / F).

    F = |grad V| by central differences, in V/cm; A, B, gamma are supplied
    model parameters. Reporting-only: never feeds the self-consistent loop.
    """
    mesh = v.mesh
    if mesh.nx >= 1 and mesh.ny >= 1:
        gx, gy = np.gradient(v.values, mesh.ax, mesh.ay)
    elif mesh.nx >= 1:
        gx = np.gradient(v.values, mesh.ax, axis=0)
        gy = np.zeros_like(v.values)
    else:
        gx = np.zeros_like(v.values)
        gy = np.gradient(v.values, mesh.ay, axis=1)
    f = np.hypot(gx, gy) * CM_TO_NM   # V/nm -> V/cm
    egv = eg.values
    with np.errstate(divide="ignore"):
        g = np.where(f > 0.0,
                     a * f**gamma / np.sqrt(egv) * np.exp(-b * egv**1.5 /
                                                          np.where(f > 0, f, 1.0)),
                     0.0)
    return FieldMap(mesh, g, "G_btbt", "1/(cm^3*s)")


def subthreshold_swing(vg: np.ndarray, current: np.ndarray) -> np.ndarray:
    """SS = dVg / dlog10(I) in mV/decade by centered finite differences."""
    vg = np.asarray(vg, dtype=float)
    i = np.abs(np.asarray(current, dtype=float))
    if np.any(i <= 0):
        raise ValueError("subthreshold swing needs strictly positive currents")
    return 1e3 * np.gradient(vg, np.log10(i))
