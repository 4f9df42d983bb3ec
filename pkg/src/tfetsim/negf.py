"""NEGF core for one (E, k_z) slice: lead self-energies, retarded Green's
function, broadening/spectral functions, lead-resolved LDOS, transmission,
and the truncated (few-mode) spectral path.

The retarded resolvent is G = [(E + i eta) S - H - Sigma_1 - Sigma_2]^-1.
Self-energies are evaluated at real E with an explicit branch rule, so the
quadratic surface equation is satisfied to machine precision; the small
imaginary part eta enters only the resolvent.

Default solver is block-recursive over x columns, O(Nx Ny^3); a dense
inverse is retained behind method='dense' as the correctness reference.
"""

from __future__ import annotations

from contextlib import contextmanager
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .device import FieldMap, Mesh2D
from .hamiltonian import DeviceHamiltonian

DEFAULT_ETA = 1e-6   # eV added to E in the resolvent

_AUDIT: list | None = None


@contextmanager
def audit_self_energies():
    """Collect the surface-equation residual of every self-energy built
    inside the context (acceptance instrumentation)."""
    global _AUDIT
    prev = _AUDIT
    _AUDIT = [] if prev is None else prev
    try:
        yield _AUDIT
    finally:
        _AUDIT = prev


class SliceSingularError(RuntimeError):
    """Numerically singular resolvent at an isolated energy."""


@dataclass
class LeadSelfEnergy:
    """Boundary-block self-energy of one semi-infinite lead."""

    lead: str                 # 'source' or 'drain'
    energy: float             # eV
    t: float                  # lead internal hopping, eV
    coupling: float           # device-lead hopping, eV (normally == t)
    lam: np.ndarray           # transverse eigenvalues of H_1D, ascending
    q: np.ndarray             # eigenvectors (real orthogonal)
    g_modes: np.ndarray       # per-mode surface Green's function values
    sigma: np.ndarray = field(repr=False, default=None)  # dense block

    def surface_residual(self) -> float:
        """max_m | -t^2 g_m^2 + x_m g_m - 1 | with x = E - lambda."""
        x = self.energy - self.lam
        r = -self.t**2 * self.g_modes**2 + x * self.g_modes - 1.0
        return float(np.abs(r).max())

    def propagating(self) -> np.ndarray:
        """Boolean mask of propagating lead modes at this energy."""
        return np.abs(self.energy - self.lam) < 2.0 * self.t

    def mode_count(self) -> int:
        return int(self.propagating().sum())


def _surface_g(x: np.ndarray, t: float) -> np.ndarray:
    """Retarded surface Green's function roots of -t^2 g^2 + x g - 1 = 0.

    Propagating (|x| < 2t): g = (x - i sqrt(4t^2 - x^2)) / (2t^2), Im g < 0.
    Evanescent: the decaying root (x - sign(x) sqrt(x^2 - 4t^2)) / (2t^2).
    """
    g = np.empty(x.shape, dtype=complex)
    prop = np.abs(x) < 2.0 * t
    xp = x[prop]
    g[prop] = (xp - 1j * np.sqrt(4.0 * t * t - xp * xp)) / (2.0 * t * t)
    xe = x[~prop]
    g[~prop] = (xe - np.sign(xe) * np.sqrt(xe * xe - 4.0 * t * t)) / (2.0 * t * t)
    return g


def lead_self_energy(h_lead_column: np.ndarray, t_x: float, energy: float,
                     lead: str = "lead",
                     coupling: float | None = None) -> LeadSelfEnergy:
    """Self-energy of a semi-infinite lead repeating the boundary column.

    Diagonalizes X = E S - H_1D, solves the per-mode scalar quadratic with
    the retarded branch, and rotates back: Sigma = tau^2 Q diag(g') Q^T.
    `coupling` overrides the device-lead hopping (defaults to t_x) for
    weak-coupling studies.
    """
    h = np.asarray(h_lead_column)
    if not np.allclose(h, h.conj().T, atol=1e-12):
        raise ValueError("lead column Hamiltonian is not Hermitian")
    if t_x <= 0:
        raise ValueError("lead hopping must be positive")
    lam, q = la.eigh(h)
    g_modes = _surface_g(energy - lam, t_x)
    tau = t_x if coupling is None else coupling
    sigma = (q * (tau * tau * g_modes)) @ q.conj().T
    lse = LeadSelfEnergy(lead=lead, energy=energy, t=t_x, coupling=tau,
                         lam=lam, q=q, g_modes=g_modes, sigma=sigma)
    if _AUDIT is not None:
        _AUDIT.append(lse.surface_residual())
    return lse


def broadening(lse: LeadSelfEnergy) -> np.ndarray:
    """Gamma = i (Sigma - Sigma^dagger); Hermitian positive semidefinite."""
    s = lse.sigma
    return 1j * (s - s.conj().T)


def gamma_factor(lse: LeadSelfEnergy) -> np.ndarray:
    """Rank factor Y with Gamma = Y Y^dagger.

    In the transverse eigenbasis Gamma is diagonal with entries
    xi_m = -2 tau^2 Im g_m >= 0, nonzero only for propagating modes; the
    returned columns are Q_m sqrt(xi_m), ordered by ascending transverse
    energy (the natural truncation order).
    """
    xi = -2.0 * lse.coupling**2 * np.imag(lse.g_modes)
    sel = xi > 0.0
    return lse.q[:, sel] * np.sqrt(xi[sel])


class GreensFunctionHandle:
    """Implicit retarded Green's function for one slice.

    Materializes only the first/last block columns (everything transmission
    and lead-resolved LDOS need). method='dense' keeps the full inverse as
    the reference path.
    """

    def __init__(self, ham: DeviceHamiltonian, sig1: LeadSelfEnergy,
                 sig2: LeadSelfEnergy, energy: float,
                 eta: float = DEFAULT_ETA, method: str = "rgf"):
        if sig1.sigma.shape != (ham.nyp, ham.nyp) or sig2.sigma.shape != (ham.nyp, ham.nyp):
            raise ValueError("self-energy blocks do not conform to the lead blocks")
        self.ham = ham
        self.sig1 = sig1
        self.sig2 = sig2
        self.energy = energy
        self.eta = eta
        self.method = method
        self.nb = ham.mesh.nx + 1
        self.nyp = ham.nyp
        self._lu = None
        self._sparse_m = None
        try:
            if method == "dense":
                self._build_dense()
            elif method == "rgf":
                self._build_rgf()
            else:
                raise ValueError(f"unknown Green's function method '{method}'")
        except np.linalg.LinAlgError as exc:
            raise SliceSingularError(str(exc)) from None

    # -- assembly helpers ---------------------------------------------------

    def _m_block(self, i: int) -> np.ndarray:
        z = (self.energy + 1j * self.eta)
        m = z * np.eye(self.nyp) - self.ham.block(i).astype(complex)
        if i == 0:
            m -= self.sig1.sigma
        if i == self.nb - 1:
            m -= self.sig2.sigma
        return m

    def sparse_m(self) -> sp.csr_matrix:
        """Full sparse (E + i eta) S - H - Sigma1 - Sigma2."""
        if self._sparse_m is None:
            n, nyp = self.ham.n, self.nyp
            m = (self.energy + 1j * self.eta) * sp.identity(n, dtype=complex) \
                - self.ham.matrix.astype(complex)
            m = m.tolil()
            m[:nyp, :nyp] -= self.sig1.sigma
            m[n - nyp:, n - nyp:] -= self.sig2.sigma
            self._sparse_m = m.tocsr()
        return self._sparse_m

    def _build_dense(self):
        g = la.inv(self.sparse_m().toarray())
        self._g_dense = g
        nyp = self.nyp
        self._col0 = g[:, :nyp].reshape(self.nb, nyp, nyp)
        self._coln = g[:, -nyp:].reshape(self.nb, nyp, nyp)

    def _build_rgf(self):
        nb, nyp = self.nb, self.nyp
        ham = self.ham
        if nb == 1:
            g00 = la.inv(self._m_block(0))
            self._col0 = g00[None, :, :].copy()
            self._coln = g00[None, :, :].copy()
            return
        t = [ham.coupling(i) for i in range(nb - 1)]  # diag couplings, +t in M

        # left-connected sweep and the last block column
        gl = [None] * nb
        gl[0] = la.inv(self._m_block(0))
        for i in range(1, nb):
            w = self._m_block(i) - t[i - 1][:, None] * gl[i - 1] * t[i - 1][None, :]
            gl[i] = la.inv(w)
        coln = np.empty((nb, nyp, nyp), dtype=complex)
        coln[nb - 1] = gl[nb - 1]
        for i in range(nb - 2, -1, -1):
            coln[i] = -gl[i] @ (t[i][:, None] * coln[i + 1])

        # right-connected sweep and the first block column
        gr = [None] * nb
        gr[nb - 1] = la.inv(self._m_block(nb - 1))
        for i in range(nb - 2, -1, -1):
            w = self._m_block(i) - t[i][:, None] * gr[i + 1] * t[i][None, :]
            gr[i] = la.inv(w)
        col0 = np.empty((nb, nyp, nyp), dtype=complex)
        col0[0] = gr[0]
        for i in range(1, nb):
            col0[i] = -gr[i] @ (t[i - 1][:, None] * col0[i - 1])

        self._col0 = col0
        self._coln = coln

    # -- accessors ----------------------------------------------------------

    def block_column(self, which: str) -> np.ndarray:
        """(nb, nyp, nyp) stack of G blocks: column of lead 1 or lead 2."""
        if which in ("first", "source", "0"):
            return self._col0
        if which in ("last", "drain", "n"):
            return self._coln
        raise ValueError(f"unknown block column '{which}'")

    @property
    def g_1n(self) -> np.ndarray:
        """G block coupling lead-1 rows to lead-2 columns."""
        return self._coln[0]

    def solve(self, b: np.ndarray) -> np.ndarray:
        """G @ b for dense b with full row dimension."""
        if self.method == "dense":
            return self._g_dense @ b
        if self._lu is None:
            self._lu = spla.splu(self.sparse_m().tocsc())
        return self._lu.solve(b)

    def residual_max(self) -> float:
        """max over probed (boundary) block columns of ||M G_col - I_col||_inf."""
        m = self.sparse_m()
        n, nyp = self.ham.n, self.nyp
        worst = 0.0
        for col, offset in ((self._col0, 0), (self._coln, n - nyp)):
            g = col.reshape(n, nyp)
            r = m @ g
            r[offset:offset + nyp, :] -= np.eye(nyp)
            worst = max(worst, float(np.abs(r).max()))
        return worst


def greens_function(ham: DeviceHamiltonian, sig1: LeadSelfEnergy,
                    sig2: LeadSelfEnergy, energy: float,
                    eta: float = DEFAULT_ETA,
                    method: str = "rgf") -> GreensFunctionHandle:
    """Retarded Green's function handle; see GreensFunctionHandle."""
    return GreensFunctionHandle(ham, sig1, sig2, energy, eta=eta, method=method)


def transmission(handle: GreensFunctionHandle, gamma1: np.ndarray,
                 gamma2: np.ndarray) -> float:
    """Caroli transmission T = trace[Gamma1 G Gamma2 G^dagger]."""
    g = handle.g_1n
    t = np.trace(gamma1 @ g @ gamma2 @ g.conj().T)
    return float(t.real)


def spectral_and_ldos(handle: GreensFunctionHandle, gamma1: np.ndarray,
                      gamma2: np.ndarray, mesh: Mesh2D
                      ) -> tuple[FieldMap, FieldMap]:
    """Lead-resolved LDOS D_a[p] = A_a[p, p] / (pi a_x a_y), 1/(eV nm^2).

    A_a = G Gamma_a G^dagger; only the diagonal is materialized, block by
    block from the stored boundary columns.
    """
    norm = 1.0 / (np.pi * mesh.ax * mesh.ay)
    out = []
    for col, gam in ((handle.block_column("first"), gamma1),
                     (handle.block_column("last"), gamma2)):
        diag = np.einsum("iam,mn,ian->ia", col, gam, col.conj(), optimize=True).real
        out.append(diag.reshape(mesh.shape) * norm)
    d1 = FieldMap(mesh, out[0], "D1", "1/(eV*nm^2)")
    d2 = FieldMap(mesh, out[1], "D2", "1/(eV*nm^2)")
    return d1, d2


def truncated_spectral(handle: GreensFunctionHandle, lse: LeadSelfEnergy,
                       r: int) -> tuple[np.ndarray, np.ndarray]:
    """Few-mode spectral function: A ~= Ytilde Ytilde^dagger.

    Solves [E S - H - Sigma] Ytilde = Y on the r lowest-transverse-energy
    propagating mode columns of the Gamma factor. Returns (diag of A,
    Ytilde). r equal to the full propagating rank reproduces the exact
    spectral function.
    """
    y = gamma_factor(lse)
    r = min(r, y.shape[1])
    if r == 0:
        return np.zeros(handle.ham.n), np.zeros((handle.ham.n, 0), dtype=complex)
    b = np.zeros((handle.ham.n, r), dtype=complex)
    if lse.lead == "drain":
        b[-handle.nyp:, :] = y[:, :r]
    else:
        b[:handle.nyp, :] = y[:, :r]
    ytilde = handle.solve(b)
    a_diag = np.sum(np.abs(ytilde) ** 2, axis=1)
    return a_diag, ytilde


def truncated_transmission(handle: GreensFunctionHandle, lse_in: LeadSelfEnergy,
                           lse_out: LeadSelfEnergy, r: int) -> float:
    """Transmission through the r lowest outgoing-lead mode columns:
    T = || Y_in^dagger G Y_out ||_F^2."""
    _, ytilde = truncated_spectral(handle, lse_out, r)
    if ytilde.shape[1] == 0:
        return 0.0
    y_in = gamma_factor(lse_in)
    if lse_in.lead == "drain":
        rows = ytilde[-handle.nyp:, :]
    else:
        rows = ytilde[:handle.nyp, :]
    z = y_in.conj().T @ rows
    return float(np.sum(np.abs(z) ** 2))


@dataclass
class NegfSlice:
    """Per-(E, k_z) outputs: transmission and lead-resolved LDOS."""

    e: float
    kz: float
    t: float
    d1: FieldMap | None = None
    d2: FieldMap | None = None


def solve_slice(ham: DeviceHamiltonian, energy: float, kz: float = 0.0,
                eta: float = DEFAULT_ETA, method: str = "rgf",
                with_ldos: bool = True,
                coupling_scale: float | None = None) -> NegfSlice:
    """Full NEGF evaluation of one slice on an assembled Hamiltonian.

    A numerically singular resolvent (possible only at isolated energies)
    is retried once at E + 10 eta.
    """
    for attempt, e in enumerate((energy, energy + 10.0 * eta)):
        try:
            h1, t1 = ham.lead_block("source")
            h2, t2 = ham.lead_block("drain")
            c1 = None if coupling_scale is None else coupling_scale * t1
            c2 = None if coupling_scale is None else coupling_scale * t2
            lse1 = lead_self_energy(h1, t1, e, "source", coupling=c1)
            lse2 = lead_self_energy(h2, t2, e, "drain", coupling=c2)
            handle = greens_function(ham, lse1, lse2, e, eta=eta, method=method)
            g1 = broadening(lse1)
            g2 = broadening(lse2)
            t_val = transmission(handle, g1, g2)
            d1 = d2 = None
            if with_ldos:
                d1, d2 = spectral_and_ldos(handle, g1, g2, ham.mesh)
            return NegfSlice(e=energy, kz=kz, t=t_val, d1=d1, d2=d2)
        except SliceSingularError:
            if attempt == 1:
                raise
    raise SliceSingularError("unreachable")
