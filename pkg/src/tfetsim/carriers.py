"""Carrier statistics: Fermi functions, Fermi-Dirac integrals, and the
single-integral electron/hole densities built from lead-resolved LDOS.

The fast density path evaluates the LDOS on a "tunneling window closed"
slice: the exact infinite-transverse-momentum limit of the two-band fields,
which is the plain single-band problem (conduction slice U = Ec, m = mc;
valence slice U = 2E - Ev, m = mv). The transverse momentum integral then
collapses analytically into the order -1/2 Fermi-Dirac integral, so each
density needs a single energy integration. The unsimplified double
(E, k_z) quadrature is kept as `full_density_oracle` for validation.

A closed-boundary backend (device Hamiltonian extended beyond the leads,
plain eigenproblem) is provided for the self-consistent loop's fast path.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg as la
from scipy.optimize import brentq

from . import negf
from .constants import HB2M, HBAR_EVS, KB_EV, M0_KG, NM3_TO_CM3, CM3_TO_NM3, Q_E
from .device import DeviceFields, FieldMap, Mesh2D, MaterialParams, BiasPoint
from .hamiltonian import assemble


@dataclass(frozen=True)
class FermiLevels:
    """Source and drain Fermi levels (eV); mu1 - mu2 = e*V_DS."""

    mu1: float
    mu2: float

    @classmethod
    def from_bias(cls, bias: BiasPoint) -> "FermiLevels":
        return cls(mu1=-bias.vs, mu2=-bias.vd)


def fermi(mu, e, temperature):
    """Fermi-Dirac occupation 1/(1 + exp((E - mu)/kT)), overflow-safe."""
    if np.any(np.asarray(temperature) <= 0):
        raise ValueError("temperature must be positive")
    z = (np.asarray(e, dtype=float) - mu) / (KB_EV * temperature)
    return 0.5 * (1.0 - np.tanh(0.5 * z))


# ---------------------------------------------------------------------------
# Fermi-Dirac integrals F_k(x) = (1/Gamma(k+1)) int t^k/(exp(t-x)+1) dt
# ---------------------------------------------------------------------------

_TABLE_LO, _TABLE_HI, _TABLE_STEP = -50.0, 200.0, 0.02
_fd_splines: dict[float, object] = {}


def _fd_direct(x: np.ndarray, k: float) -> np.ndarray:
    """Composite-Simpson evaluation via t = u^2 (integrand made smooth)."""
    from scipy.special import gamma as _gamma

    x = np.atleast_1d(np.asarray(x, dtype=float))
    u_max = np.sqrt(max(float(x.max()), 0.0) + 45.0)
    n_u = int(np.ceil(u_max / 0.004)) | 1  # odd count for Simpson
    u = np.linspace(0.0, u_max, n_u)
    w = np.ones(n_u)
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    w *= (u[1] - u[0]) / 3.0

    out = np.empty(x.shape)
    for lo in range(0, x.size, 256):
        xs = x[lo:lo + 256, None]
        z = u[None, :] ** 2 - xs
        # stable logistic: exp(-|z|) based
        occ = np.where(z > 0, np.exp(-np.clip(z, 0, 745)) / (1 + np.exp(-np.clip(z, 0, 745))),
                       1.0 / (1.0 + np.exp(np.clip(z, -745, 0))))
        out[lo:lo + 256] = (occ * (u[None, :] ** (2 * k + 1)) * w).sum(axis=1)
    return 2.0 / _gamma(k + 1.0) * out


def _fd_spline(k: float):
    """Lazily built log-space cubic spline over the table range."""
    if k not in _fd_splines:
        from scipy.interpolate import CubicSpline

        xs = np.arange(_TABLE_LO, _TABLE_HI + 0.5 * _TABLE_STEP, _TABLE_STEP)
        _fd_splines[k] = CubicSpline(xs, np.log(_fd_direct(xs, k)))
    return _fd_splines[k]


def _fd_eval(x, k: float) -> np.ndarray:
    x = np.atleast_1d(np.asarray(x, dtype=float))
    out = np.empty(x.shape)

    lo = x < _TABLE_LO
    if lo.any():
        # Boltzmann tail: sum (-1)^(n+1) e^(n x) / n^(k+1)
        acc = np.zeros(lo.sum())
        for n in range(1, 6):
            acc += (-1.0) ** (n + 1) * np.exp(n * x[lo]) / n ** (k + 1.0)
        out[lo] = acc

    hi = x > _TABLE_HI
    if hi.any():
        xh = x[hi]
        if k == -0.5:
            out[hi] = 2.0 / np.sqrt(np.pi) * np.sqrt(xh) * (1.0 - np.pi**2 / (24.0 * xh**2))
        else:  # k == +0.5
            out[hi] = 4.0 / (3.0 * np.sqrt(np.pi)) * xh**1.5 * (1.0 + np.pi**2 / (8.0 * xh**2))

    mid = ~(lo | hi)
    if mid.any():
        out[mid] = np.exp(_fd_spline(k)(x[mid]))
    return out


def fd_half_neg(x):
    """Fermi-Dirac integral of order -1/2, relative accuracy ~1e-9."""
    out = _fd_eval(x, -0.5)
    return float(out[0]) if np.isscalar(x) else out.reshape(np.shape(x))


def fd_half(x):
    """Fermi-Dirac integral of order +1/2 (bulk-density plumbing)."""
    out = _fd_eval(x, 0.5)
    return float(out[0]) if np.isscalar(x) else out.reshape(np.shape(x))


_fd_half_inv_table = None


def fd_half_inverse(y):
    """x with F_1/2(x) = y (monotone); Boltzmann/Sommerfeld outside the table."""
    global _fd_half_inv_table
    if _fd_half_inv_table is None:
        xs = np.arange(_TABLE_LO, _TABLE_HI + 0.01, 0.01)
        _fd_half_inv_table = (np.log(_fd_eval(xs, 0.5)), xs)
    logf, xs = _fd_half_inv_table
    y = np.asarray(y, dtype=float)
    out = np.empty(y.shape)
    tiny = y < np.exp(logf[0])
    big = y > np.exp(logf[-1])
    mid = ~(tiny | big)
    out[tiny] = np.log(np.maximum(y[tiny], 1e-300))
    out[big] = (0.75 * np.sqrt(np.pi) * y[big]) ** (2.0 / 3.0)
    out[mid] = np.interp(np.log(y[mid]), logf, xs)
    return out


# ---------------------------------------------------------------------------
# Bulk statistics (effective-DOS form); contacts and test oracles
# ---------------------------------------------------------------------------

def edos(m_star: float, temperature: float) -> float:
    """Effective density of states 2 (m kT / 2 pi hbar^2)^(3/2), nm^-3."""
    kb_j = KB_EV * Q_E
    hbar_j = HBAR_EVS * Q_E
    val = 2.0 * (M0_KG * m_star * kb_j * temperature / (2.0 * np.pi * hbar_j**2)) ** 1.5
    return val * 1e-27


def bulk_electron_density(m_star: float, temperature: float, eta_c) -> np.ndarray:
    """n = Nc F_1/2((mu - Ec)/kT), nm^-3."""
    return edos(m_star, temperature) * fd_half(eta_c)


def screening_derivative(n: FieldMap, p: FieldMap, fields: DeviceFields,
                         temperature: float) -> np.ndarray:
    """d(n + p)/dV per node (cm^-3 per volt) for the Poisson predictor.

    Degeneracy-correct: dn/dmu = Nc F_(-1/2)(eta)/kT with eta recovered from
    the local density, which reduces to n/kT in the Boltzmann limit but is
    much smaller in the 1e20 contacts (where n/kT overdamps the update).
    """
    kt = KB_EV * temperature
    out = np.zeros(n.values.shape)
    for fm, m_field in ((n, fields.mc.values), (p, fields.mv.values)):
        dens_nm3 = np.maximum(fm.values, 0.0) * CM3_TO_NM3
        for m_val in np.unique(m_field):
            sel = m_field == m_val
            nref = edos(float(m_val), temperature)
            eta = fd_half_inverse(dens_nm3[sel] / nref)
            out[sel] += nref * fd_half_neg(eta) / kt
    return out * NM3_TO_CM3


def neutral_level(doping_cm3: float, mat: MaterialParams, temperature: float) -> float:
    """zeta = mu - Ec from bulk charge neutrality at the given net doping."""
    kt = KB_EV * temperature
    nc = edos(mat.mc_star, temperature)
    nv = edos(mat.mv_star, temperature)
    dop = doping_cm3 * CM3_TO_NM3

    def charge(zeta):
        n = nc * fd_half(zeta / kt)
        p = nv * fd_half((-zeta - mat.eg) / kt)
        return n - p - dop

    lo, hi = -mat.eg - 1.0, 1.0
    while charge(lo) > 0:
        lo -= 0.5
    while charge(hi) < 0:
        hi += 0.5
    return brentq(charge, lo, hi, xtol=1e-12)


def _transverse_modes(m_col: np.ndarray, ay: float) -> np.ndarray:
    """Eigenvalues of the hard-wall transverse kinetic operator (mirrored
    ghost edges, matching the device Hamiltonian)."""
    nyp = m_col.size
    if nyp == 1:
        return np.array([2.0 * HB2M / (m_col[0] * ay * ay)])
    m_half = 2.0 * m_col[:-1] * m_col[1:] / (m_col[:-1] + m_col[1:])
    t = HB2M / (m_half * ay * ay)
    diag = np.zeros(nyp)
    diag[:-1] += t
    diag[1:] += t
    diag[0] += t[0]
    diag[-1] += t[-1]
    h = np.diag(diag) - np.diag(t, 1) - np.diag(t, -1)
    return np.linalg.eigvalsh(h)


def lead_neutral_zeta(doping_cm3: float, mat: MaterialParams,
                      temperature: float, mesh: Mesh2D) -> float:
    """zeta = mu - Ec from charge neutrality of a flat quantized lead.

    Uses the model's own statistics: transverse hard-wall modes over the
    body thickness, a 1D lattice band along transport, and the analytic
    transverse-momentum Fermi factors. On thin bodies this differs
    strongly from bulk neutrality; pinning the contacts at the bulk value
    would build a spurious dipole against the quantized interior density.
    """
    kt = KB_EV * temperature
    nyp = mesh.ny + 1
    dop = doping_cm3 * CM3_TO_NM3

    kap_c = _transverse_modes(np.full(nyp, mat.mc_star), mesh.ay)
    kap_v = _transverse_modes(np.full(nyp, mat.mv_star), mesh.ay)
    tx_c = HB2M / (mat.mc_star * mesh.ax**2)
    tx_v = HB2M / (mat.mv_star * mesh.ax**2)
    w_c = np.sqrt(mat.mc_star * kt / (4.0 * np.pi * HB2M))
    w_v = np.sqrt(mat.mv_star * kt / (4.0 * np.pi * HB2M))
    theta = np.linspace(0.0, np.pi, 257)
    dth = theta[1] - theta[0]
    wq = np.full(theta.size, dth)
    wq[0] = wq[-1] = 0.5 * dth
    pref = 2.0 / (np.pi * nyp * mesh.ax * mesh.ay)

    def avg_density(zeta):
        # zeta = mu - Ec of the flat lead; mode bands are rigid in zeta
        n = 0.0
        for kap in kap_c:
            e_band = kap + 2.0 * tx_c * (1.0 - np.cos(theta))  # E - Ec
            n += pref * w_c * np.sum(wq * fd_half_neg((zeta - e_band) / kt))
        p = 0.0
        for kap in kap_v:
            # hole states sit at Ev - kap - 2t(1 - cos); measure from Ec
            e_band = -mat.eg - kap - 2.0 * tx_v * (1.0 - np.cos(theta))
            p += pref * w_v * np.sum(wq * fd_half_neg((e_band - zeta) / kt))
        return n - p

    def charge(zeta):
        return avg_density(zeta) - dop

    lo, hi = -mat.eg - 1.0, 1.0
    while charge(lo) > 0:
        lo -= 0.5
    while charge(hi) < 0:
        hi += 0.5
    return brentq(charge, lo, hi, xtol=1e-12)


# ---------------------------------------------------------------------------
# Energy grids
# ---------------------------------------------------------------------------

@dataclass
class EnergyGrid:
    """Quadrature nodes/weights for the in-plane energy integration."""

    e: np.ndarray
    w: np.ndarray

    def __post_init__(self):
        if np.any(self.w < 0):
            raise ValueError("quadrature weights must be positive")


def uniform_grid(e_lo: float, e_hi: float, de: float) -> EnergyGrid:
    """Uniform grid with trapezoid weights covering [e_lo, e_hi]."""
    n = max(2, int(np.ceil((e_hi - e_lo) / de)) + 1)
    e = np.linspace(e_lo, e_hi, n)
    w = np.full(n, e[1] - e[0])
    w[0] *= 0.5
    w[-1] *= 0.5
    return EnergyGrid(e=e, w=w)


def electron_grid(ec: FieldMap, mu_max: float, temperature: float,
                  per_kt: float = 5.0) -> EnergyGrid:
    """[min Ec - 10 kT, mu_max + 20 kT] at kT/per_kt spacing; the Fermi
    tail truncation error is below 1e-6 relative."""
    kt = KB_EV * temperature
    return uniform_grid(float(ec.values.min()) - 10.0 * kt,
                        mu_max + 20.0 * kt, kt / per_kt)


def hole_grid(ev: FieldMap, mu_min: float, temperature: float,
              per_kt: float = 5.0) -> EnergyGrid:
    kt = KB_EV * temperature
    return uniform_grid(mu_min - 20.0 * kt,
                        float(ev.values.max()) + 10.0 * kt, kt / per_kt)


# ---------------------------------------------------------------------------
# Simplified (single-integral) densities
# ---------------------------------------------------------------------------

def _transverse_weight(m_field: np.ndarray, temperature: float) -> np.ndarray:
    """sqrt(m kT / 2 pi hbar^2) per node, 1/nm."""
    kt = KB_EV * temperature
    return np.sqrt(m_field * kt / (4.0 * np.pi * HB2M))


def _check_nonnegative(dens_nm3: np.ndarray, what: str) -> np.ndarray:
    floor = -1e-12 * max(float(dens_nm3.max(initial=0.0)), 1.0)
    if dens_nm3.min() < floor:
        raise RuntimeError(f"{what} density went negative beyond tolerance "
                           f"({dens_nm3.min():.3e} nm^-3)")
    return np.maximum(dens_nm3, 0.0)


def electron_density(d2_spectrum: np.ndarray, grid: EnergyGrid, mu2: float,
                     mc: FieldMap, temperature: float) -> FieldMap:
    """n(node) = int D2(E) f_c(mu2, E) dE with
    f_c = sqrt(mc kT/2 pi hbar^2) F_(-1/2)((mu2 - E)/kT).

    `d2_spectrum` holds the drain-lead LDOS of the closed-window slice,
    shape (nE, nx+1, ny+1), units 1/(eV nm^2). Result in cm^-3.
    """
    kt = KB_EV * temperature
    fvals = fd_half_neg((mu2 - grid.e) / kt)
    n_nm3 = np.einsum("e,eij->ij", grid.w * fvals, d2_spectrum)
    n_nm3 *= _transverse_weight(mc.values, temperature)
    n_nm3 = _check_nonnegative(n_nm3, "electron")
    return FieldMap(mc.mesh, n_nm3 * NM3_TO_CM3, "n", "cm^-3")


def hole_density(d1_spectrum: np.ndarray, grid: EnergyGrid, mu1: float,
                 mv: FieldMap, temperature: float) -> FieldMap:
    """p(node) = int D1(E) f_v(mu1, E) dE with
    f_v = sqrt(mv kT/2 pi hbar^2) F_(-1/2)((E - mu1)/kT).

    `d1_spectrum` is the source-lead LDOS of the valence slice.
    """
    kt = KB_EV * temperature
    fvals = fd_half_neg((grid.e - mu1) / kt)
    p_nm3 = np.einsum("e,eij->ij", grid.w * fvals, d1_spectrum)
    p_nm3 *= _transverse_weight(mv.values, temperature)
    p_nm3 = _check_nonnegative(p_nm3, "hole")
    return FieldMap(mv.mesh, p_nm3 * NM3_TO_CM3, "p", "cm^-3")


# -- closed-window (k_z -> infinity limit) slice spectra --------------------

def conduction_slice_spectrum(ec: FieldMap, fields: DeviceFields,
                              grid: EnergyGrid, eta: float = negf.DEFAULT_ETA,
                              method: str = "rgf") -> np.ndarray:
    """Drain-lead LDOS of the single-band conduction problem per energy."""
    ham = assemble(ec.like(ec.values, tag="U"), fields.mc, fields.mesh)
    out = np.empty((grid.e.size,) + fields.mesh.shape)
    for i, e in enumerate(grid.e):
        sl = negf.solve_slice(ham, e, eta=eta, method=method, with_ldos=True)
        out[i] = sl.d2.values
    return out


def valence_slice_spectrum(ev: FieldMap, fields: DeviceFields,
                           grid: EnergyGrid, eta: float = negf.DEFAULT_ETA,
                           method: str = "rgf") -> np.ndarray:
    """Source-lead LDOS of the single-band valence problem per energy.

    The hole band is carried in the electron picture: U = 2E - Ev, m = mv,
    so the Hamiltonian is rebuilt per energy.
    """
    out = np.empty((grid.e.size,) + fields.mesh.shape)
    for i, e in enumerate(grid.e):
        u = ev.like(2.0 * e - ev.values, tag="U")
        ham = assemble(u, fields.mv, fields.mesh)
        sl = negf.solve_slice(ham, e, eta=eta, method=method, with_ldos=True)
        out[i] = sl.d1.values
    return out


def negf_density(ec: FieldMap, ev: FieldMap, fields: DeviceFields,
                 levels: FermiLevels, temperature: float,
                 eta: float = negf.DEFAULT_ETA, method: str = "rgf",
                 per_kt: float = 5.0) -> tuple[FieldMap, FieldMap]:
    """Open-boundary simplified densities (the loop's accurate backend)."""
    gc = electron_grid(ec, max(levels.mu1, levels.mu2), temperature, per_kt)
    gv = hole_grid(ev, min(levels.mu1, levels.mu2), temperature, per_kt)
    d2 = conduction_slice_spectrum(ec, fields, gc, eta=eta, method=method)
    d1 = valence_slice_spectrum(ev, fields, gv, eta=eta, method=method)
    n = electron_density(d2, gc, levels.mu2, fields.mc, temperature)
    p = hole_density(d1, gv, levels.mu1, fields.mv, temperature)
    return n, p


# ---------------------------------------------------------------------------
# Full double-integral oracle (small meshes; test/validation path)
# ---------------------------------------------------------------------------

def ldos_tensor(ec: FieldMap, ev: FieldMap, fields: DeviceFields,
                e_grid: EnergyGrid, kz_values: np.ndarray,
                eta: float = negf.DEFAULT_ETA,
                method: str = "dense") -> tuple[np.ndarray, np.ndarray]:
    """Dense (k_z, E) LDOS tensors from the full two-band slices."""
    from .bands import SubbandSlice

    shape = (kz_values.size, e_grid.e.size) + fields.mesh.shape
    d1 = np.empty(shape)
    d2 = np.empty(shape)
    for a, kz in enumerate(kz_values):
        sl = SubbandSlice.build(ec, ev, kz, fields)
        for b, e in enumerate(e_grid.e):
            eff = sl.fields_at(e)
            ham = assemble(eff.u, eff.m_star, fields.mesh)
            res = negf.solve_slice(ham, e, kz=kz, eta=eta, method=method,
                                   with_ldos=True)
            d1[a, b] = res.d1.values
            d2[a, b] = res.d2.values
    return d1, d2


def full_density_oracle(d1: np.ndarray, d2: np.ndarray, e_grid: EnergyGrid,
                        kz_grid: EnergyGrid, levels: FermiLevels,
                        temperature: float, mesh: Mesh2D
                        ) -> tuple[FieldMap, FieldMap]:
    """Direct double quadrature of the unsimplified density integrals:

    n = (1/pi) int dkz int dE [D1 f(mu1) + D2 f(mu2)]
    p = (1/pi) int dkz int dE [D1 (1 - f(mu1)) + D2 (1 - f(mu2))]

    The caller controls the (E, k_z) coverage; this is the validation
    oracle for the single-integral approximation on small meshes.
    """
    f1 = fermi(levels.mu1, e_grid.e, temperature)
    f2 = fermi(levels.mu2, e_grid.e, temperature)
    wk = kz_grid.w
    we = e_grid.w
    n_nm3 = (np.einsum("k,e,keij->ij", wk, we * f1, d1)
             + np.einsum("k,e,keij->ij", wk, we * f2, d2)) / np.pi
    p_nm3 = (np.einsum("k,e,keij->ij", wk, we * (1.0 - f1), d1)
             + np.einsum("k,e,keij->ij", wk, we * (1.0 - f2), d2)) / np.pi
    n = FieldMap(mesh, np.maximum(n_nm3, 0.0) * NM3_TO_CM3, "n", "cm^-3")
    p = FieldMap(mesh, np.maximum(p_nm3, 0.0) * NM3_TO_CM3, "p", "cm^-3")
    return n, p


# ---------------------------------------------------------------------------
# Closed-boundary fast backend
# ---------------------------------------------------------------------------

def _extend_x(values: np.ndarray, n_ext: int) -> np.ndarray:
    left = np.repeat(values[:1, :], n_ext, axis=0)
    right = np.repeat(values[-1:, :], n_ext, axis=0)
    return np.concatenate([left, values, right], axis=0)


def closed_boundary_density(ec: FieldMap, ev: FieldMap, fields: DeviceFields,
                            levels: FermiLevels, temperature: float,
                            extension_nm: float = 6.0
                            ) -> tuple[FieldMap, FieldMap]:
    """Densities from the closed (hard-wall) eigenproblem with the device
    extended beyond both leads by flat copies of the boundary columns.

    Each eigenstate is occupied with the Fermi level of the side holding
    more than half of its probability mass, using the same transverse
    statistics as the open-boundary path. Much faster inside the
    self-consistent loop than NEGF.
    """
    mesh = fields.mesh
    kt = KB_EV * temperature
    n_ext = max(1, int(round(extension_nm / mesh.ax)))
    m_min = min(float(fields.mc.values.min()), float(fields.mv.values.min()))
    decay = np.sqrt(HB2M / (m_min * kt))
    if n_ext * mesh.ax < 2.0 * decay:
        warnings.warn(
            f"lead extension {n_ext * mesh.ax:.2f} nm is shorter than two "
            f"thermal decay lengths ({2 * decay:.2f} nm); densities near the "
            "contacts may be biased", stacklevel=2)

    mesh_ext = Mesh2D(nx=mesh.nx + 2 * n_ext, ny=mesh.ny, ax=mesh.ax, ay=mesh.ay)
    half = (mesh_ext.nx + 1) / 2.0
    left_nodes = np.arange(mesh_ext.nx + 1) < half
    dev = slice(n_ext, n_ext + mesh.nx + 1)
    cell = mesh.ax * mesh.ay

    def solve_band(u_ext, m_ext):
        fm_u = FieldMap(mesh_ext, u_ext, "U", "eV")
        fm_m = FieldMap(mesh_ext, m_ext, "m", "m0")
        ham = assemble(fm_u, fm_m, mesh_ext)
        lam, vec = la.eigh(ham.matrix.toarray())
        psi2 = (vec * vec).T.reshape(-1, *mesh_ext.shape)  # states x nodes
        wl = psi2[:, left_nodes, :].sum(axis=(1, 2))
        mu_state = np.where(wl > 0.5, levels.mu1, levels.mu2)
        return lam, psi2, mu_state

    # spin degeneracy: the open-boundary path carries it inside the LDOS
    # normalization; the eigenstate sum needs it explicitly
    spin = 2.0

    # conduction band: E-independent single-band problem
    lam_c, psi2_c, mu_c = solve_band(_extend_x(ec.values, n_ext),
                                     _extend_x(fields.mc.values, n_ext))
    keep = lam_c <= max(levels.mu1, levels.mu2) + 30.0 * kt
    occ = fd_half_neg((mu_c[keep] - lam_c[keep]) / kt)
    n_nm3 = spin * np.einsum("s,sij->ij", occ, psi2_c[keep][:, dev, :]) / cell
    n_nm3 *= _transverse_weight(fields.mc.values, temperature)

    # valence band in the electron picture: H_h = kinetic(mv) - Ev, E = -lambda
    lam_h, psi2_h, mu_h = solve_band(_extend_x(-ev.values, n_ext),
                                     _extend_x(fields.mv.values, n_ext))
    e_par = -lam_h
    keep = e_par >= min(levels.mu1, levels.mu2) - 30.0 * kt
    occ = fd_half_neg((e_par[keep] - mu_h[keep]) / kt)
    p_nm3 = spin * np.einsum("s,sij->ij", occ, psi2_h[keep][:, dev, :]) / cell
    p_nm3 *= _transverse_weight(fields.mv.values, temperature)

    n = FieldMap(mesh, _check_nonnegative(n_nm3, "electron") * NM3_TO_CM3, "n", "cm^-3")
    p = FieldMap(mesh, _check_nonnegative(p_nm3, "hole") * NM3_TO_CM3, "p", "cm^-3")
    return n, p


# ---------------------------------------------------------------------------
# Potential pockets
# ---------------------------------------------------------------------------

def fill_pockets(profile: np.ndarray, kind: str = "conduction"
                 ) -> tuple[np.ndarray, list[dict]]:
    """Remove interior potential pockets from a 1D along-transport profile.

    A pocket is an interior dip below both flanking maxima (for the
    conduction kind; the dual for valence humps). The floor is raised flush
    to the lower flanking maximum: out = max(u, min(runmax_left,
    runmax_right)). Boundary-adjacent dips are untouched (leads are
    reservoirs), and the operation is idempotent.
    """
    u = np.asarray(profile, dtype=float)
    if kind == "valence":
        out, report = fill_pockets(-u, "conduction")
        return -out, report
    if kind != "conduction":
        raise ValueError(f"unknown pocket kind '{kind}'")

    ml = np.maximum.accumulate(u)
    mr = np.maximum.accumulate(u[::-1])[::-1]
    env = np.minimum(ml, mr)
    out = np.maximum(u, env)

    report = []
    raised = out > u + 1e-15
    if raised.any():
        idx = np.flatnonzero(raised)
        splits = np.flatnonzero(np.diff(idx) > 1)
        for chunk in np.split(idx, splits + 1):
            report.append({
                "start": int(chunk[0]),
                "stop": int(chunk[-1]),
                "depth": float((out - u)[chunk].max()),
            })
    return out, report
