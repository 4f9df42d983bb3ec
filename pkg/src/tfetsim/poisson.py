"""2D Poisson solver: -div(eps grad V) = rho on the device mesh.

Five-point flux-conservative finite volumes on the uniform tensor mesh,
harmonic-mean permittivity at cell faces. Boundary conditions:

* Dirichlet at ohmic contacts (x = 0 and x = Lx), values from local charge
  neutrality at the contact doping (flat-band ohmic).
* Robin under gate segments: the oxide is not meshed; it enters as a series
  capacitance eps_ox/t_ox relating the surface potential to an effective
  gate potential V_eff = V_applied - (workfunction - chi_ref - Eg_ref/2),
  i.e. the potential zero is the reference material's midgap.
* Zero-normal-field Neumann on the remaining boundary.

Carrier fields are frozen during a solve (Gummel-style splitting), so the
system is linear. An optional screening diagonal d(rho)/dV*(V - V_ref) is
supported for the outer loop's predictor; it vanishes at the fixed point.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .carriers import lead_neutral_zeta
from .constants import CM3_TO_NM3, COUL_NM, Q_E
from .device import BiasPoint, DeviceFields, DeviceSpec, FieldMap, Mesh2D


class PoissonError(RuntimeError):
    pass


@dataclass
class PoissonBC:
    """Per-boundary-node condition: Dirichlet, Robin (gate) or Neumann.

    Robin data lives on the top/bottom boundary rows: c arrays hold the
    oxide capacitance factor eps_ox/t_ox (1/nm, relative-permittivity
    units) and v arrays the effective gate potential; c == 0 means Neumann.
    """

    mesh: Mesh2D
    dirichlet_mask: np.ndarray
    dirichlet_value: np.ndarray
    robin_c_top: np.ndarray
    robin_v_top: np.ndarray
    robin_c_bottom: np.ndarray
    robin_v_bottom: np.ndarray

    def __post_init__(self):
        shape = self.mesh.shape
        if self.dirichlet_mask.shape != shape or self.dirichlet_value.shape != shape:
            raise PoissonError("Dirichlet arrays do not match the mesh")
        nxp = shape[0]
        for arr in (self.robin_c_top, self.robin_v_top,
                    self.robin_c_bottom, self.robin_v_bottom):
            if arr.shape != (nxp,):
                raise PoissonError("Robin arrays must have one entry per x node")
        top_clash = self.dirichlet_mask[:, -1] & (self.robin_c_top > 0)
        bot_clash = self.dirichlet_mask[:, 0] & (self.robin_c_bottom > 0)
        if top_clash.any() or bot_clash.any():
            raise PoissonError("boundary node with both Dirichlet and Robin conditions")

    @property
    def anchored(self) -> bool:
        return bool(self.dirichlet_mask.any()
                    or (self.robin_c_top > 0).any()
                    or (self.robin_c_bottom > 0).any())


def all_dirichlet(mesh: Mesh2D, value) -> PoissonBC:
    """Fixed potential on the whole boundary (test/benchmark helper)."""
    mask = np.zeros(mesh.shape, dtype=bool)
    mask[0, :] = mask[-1, :] = True
    mask[:, 0] = mask[:, -1] = True
    val = np.zeros(mesh.shape)
    val[mask] = np.broadcast_to(value, mesh.shape)[mask] \
        if np.ndim(value) else value
    nxp = mesh.nx + 1
    z = np.zeros(nxp)
    return PoissonBC(mesh, mask, val, z.copy(), z.copy(), z.copy(), z.copy())


def contact_dirichlet(mesh: Mesh2D, v_left, v_right) -> PoissonBC:
    """Dirichlet at x = 0 / x = Lx, Neumann top and bottom."""
    mask = np.zeros(mesh.shape, dtype=bool)
    mask[0, :] = mask[-1, :] = True
    val = np.zeros(mesh.shape)
    val[0, :] = v_left
    val[-1, :] = v_right
    nxp = mesh.nx + 1
    z = np.zeros(nxp)
    return PoissonBC(mesh, mask, val, z.copy(), z.copy(), z.copy(), z.copy())


def band_reference(fields: DeviceFields) -> FieldMap:
    """Conduction edge at V = 0: midgap of the reference material sits at 0.

    ec0 = chi_ref + Eg_ref/2 - chi(x, y); the reference material is the one
    of the first-listed region.
    """
    chi_ref = fields.materials[0].chi
    eg_ref = fields.materials[0].eg
    ec0 = chi_ref + 0.5 * eg_ref - fields.chi.values
    return fields.chi.like(ec0, tag="Ec0", units="eV")


def gate_effective_potential(workfunction: float, fields: DeviceFields,
                             v_applied: float) -> float:
    """V_eff = V_applied - (workfunction - chi_ref - Eg_ref/2), volts."""
    chi_ref = fields.materials[0].chi
    eg_ref = fields.materials[0].eg
    return v_applied - (workfunction - chi_ref - 0.5 * eg_ref)


def device_bc(spec: DeviceSpec, mesh: Mesh2D, fields: DeviceFields,
              bias: BiasPoint) -> PoissonBC:
    """Boundary conditions for a bias point.

    Contact values come from charge neutrality of a flat quantized lead at
    the contact doping with the lead Fermi level mu = -V_applied (flat-band
    ohmic, consistent with the quantum carrier backends); gates become
    Robin conditions.
    """
    ec0 = band_reference(fields).values
    t = spec.temperature
    val = np.zeros(mesh.shape)
    mask = np.zeros(mesh.shape, dtype=bool)
    mask[0, :] = mask[-1, :] = True

    zeta_cache: dict[tuple, float] = {}
    for j in range(mesh.ny + 1):
        for i, mu in ((0, -bias.vs), (mesh.nx, -bias.vd)):
            mat = fields.materials[fields.mat_index[i, j]]
            key = (mat.name, fields.doping.values[i, j])
            if key not in zeta_cache:
                zeta_cache[key] = lead_neutral_zeta(
                    fields.doping.values[i, j], mat, t, mesh)
            val[i, j] = ec0[i, j] - mu + zeta_cache[key]

    nxp = mesh.nx + 1
    c_top = np.zeros(nxp)
    v_top = np.zeros(nxp)
    c_bot = np.zeros(nxp)
    v_bot = np.zeros(nxp)
    x = mesh.x
    tol = 1e-9 * max(spec.lx, spec.ly)
    for g in spec.gates:
        sel = (x >= g.x0 - tol) & (x <= g.x1 + tol)
        v_eff = gate_effective_potential(g.workfunction, fields, bias.vg)
        if g.side == "top":
            c_top[sel] = g.eps_ox / g.t_ox
            v_top[sel] = v_eff
        else:
            c_bot[sel] = g.eps_ox / g.t_ox
            v_bot[sel] = v_eff
    # a gate segment reaching a contact edge would double-book the corner
    for arr in (c_top, c_bot):
        arr[0] = arr[-1] = 0.0
    return PoissonBC(mesh, mask, val, c_top, v_top, c_bot, v_bot)


def assemble_charge(n: FieldMap, p: FieldMap, doping: FieldMap) -> FieldMap:
    """rho = e (p - n + Nd - Na) in C/cm^3 (full ionization)."""
    if n.mesh is not p.mesh and n.mesh != p.mesh:
        raise PoissonError("carrier fields on different meshes")
    if n.values.shape != doping.values.shape:
        raise PoissonError("doping field on a different mesh")
    rho = Q_E * (p.values - n.values + doping.values)
    return FieldMap(n.mesh, rho, tag="rho", units="C/cm^3")


def solve_poisson(rho: FieldMap, eps: FieldMap, bc: PoissonBC,
                  tol: float = 1e-10,
                  screening: np.ndarray | None = None,
                  v_ref: np.ndarray | None = None) -> FieldMap:
    """Solve -div(eps grad V) = rho with the given boundary conditions.

    `screening`, if given, is the frozen-carrier response d(n+p)/dV per
    node (cm^-3 per volt); it adds the Gummel predictor diagonal
    e*screening*(V - v_ref). The converged fixed point of the outer loop
    is unchanged by it (the term vanishes when V == v_ref).

    Raises PoissonError for an all-Neumann (floating) system or if the
    relative residual of the discrete system exceeds `tol`.
    """
    mesh = bc.mesh
    if rho.values.shape != mesh.shape or eps.values.shape != mesh.shape:
        raise PoissonError("rho/eps fields do not match the BC mesh")
    if not bc.anchored:
        raise PoissonError(
            "singular Poisson system: no Dirichlet or Robin anchor on the boundary")

    nxp, nyp = mesh.shape
    ax, ay = mesh.ax, mesh.ay
    e = eps.values
    rho_e_nm3 = rho.values / Q_E * CM3_TO_NM3   # e/nm^3

    # node control-cell extents (half cells on the boundary)
    wx = np.full(nxp, ax); wx[0] = wx[-1] = 0.5 * ax
    wy = np.full(nyp, ay); wy[0] = wy[-1] = 0.5 * ay
    cell = np.outer(wx, wy)

    def harm(a, b):
        return 2.0 * a * b / (a + b)

    idx = np.arange(nxp * nyp).reshape(nxp, nyp)
    rows, cols, vals = [], [], []
    diag = np.zeros((nxp, nyp))
    rhs = COUL_NM * rho_e_nm3 * cell

    # x faces between (i, j) and (i+1, j): conductance eps_f * wy_j / ax
    gx = harm(e[:-1, :], e[1:, :]) * wy[None, :] / ax
    # y faces between (i, j) and (i, j+1)
    gy = harm(e[:, :-1], e[:, 1:]) * wx[:, None] / ay

    for arr_g, pa, pb in ((gx, idx[:-1, :], idx[1:, :]),
                          (gy, idx[:, :-1], idx[:, 1:])):
        g = arr_g.ravel()
        a = pa.ravel()
        b = pb.ravel()
        rows.extend((a, b))
        cols.extend((b, a))
        vals.extend((-g, -g))
        np.add.at(diag.reshape(-1), a, g)
        np.add.at(diag.reshape(-1), b, g)

    # Robin gate faces (top j = ny, bottom j = 0)
    for j_bnd, c_arr, v_arr in ((nyp - 1, bc.robin_c_top, bc.robin_v_top),
                                (0, bc.robin_c_bottom, bc.robin_v_bottom)):
        sel = c_arr > 0
        if sel.any():
            g = c_arr[sel] * wx[sel]
            diag[sel, j_bnd] += g
            rhs[sel, j_bnd] += g * v_arr[sel]

    if screening is not None:
        if v_ref is None:
            raise PoissonError("screening requires v_ref")
        s = COUL_NM * np.maximum(screening, 0.0) * CM3_TO_NM3 * cell
        diag += s
        rhs += s * v_ref

    rows.append(idx.ravel())
    cols.append(idx.ravel())
    vals.append(diag.ravel())
    a_full = sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(nxp * nyp, nxp * nyp))

    # eliminate Dirichlet nodes; the reduced system stays symmetric
    fixed = bc.dirichlet_mask.ravel()
    free = ~fixed
    v = np.zeros(nxp * nyp)
    v[fixed] = bc.dirichlet_value.ravel()[fixed]
    b = rhs.ravel() - a_full[:, fixed] @ v[fixed]
    a_red = a_full[free][:, free].tocsc()
    v[free] = spla.spsolve(a_red, b[free])

    res = np.linalg.norm(a_red @ v[free] - b[free])
    scale = max(np.linalg.norm(b[free]), np.linalg.norm(a_red @ v[free]), 1e-300)
    if res / scale > tol:
        raise PoissonError(f"Poisson residual {res / scale:.3e} exceeds {tol:.3e}")

    return FieldMap(mesh, v.reshape(nxp, nyp), tag="V", units="V")


def bands_from_potential(v: FieldMap, fields: DeviceFields) -> tuple[FieldMap, FieldMap]:
    """Ec = Ec0 - V and Ev = Ec - Eg (eV; V in volts, unit charge)."""
    if v.values.shape != fields.mesh.shape:
        raise PoissonError("potential field on a different mesh")
    ec0 = band_reference(fields).values
    ec = ec0 - v.values
    ev = ec - fields.eg.values
    return (FieldMap(v.mesh, ec, "Ec", "eV"), FieldMap(v.mesh, ev, "Ev", "eV"))
