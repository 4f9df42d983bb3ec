"""Pentadiagonal 2D finite-difference Hamiltonian with variable mass.

Central differences in flux (BenDaniel-Duke) form: the kinetic hopping over
an edge uses the harmonic mean of the two node masses, which keeps the
probability current continuous across mass steps. States are ordered
column-major, y index fastest, so the source/drain lead blocks are the
first/last (Ny+1) x (Ny+1) blocks.

Hoppings at the domain boundary are mirrored onto the diagonal (ghost edges
copy the adjacent interior edge), which is a hard wall one ghost node
outside the domain on the closed sides and, on the lead sides, makes the
boundary column's diagonal match a uniform semi-infinite extension.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .constants import HB2M
from .device import FieldMap, Mesh2D


def half_node_mass(m_a: float | np.ndarray, m_b: float | np.ndarray):
    """Edge mass between two adjacent nodes: harmonic mean (flux form)."""
    return 2.0 * m_a * m_b / (m_a + m_b)


@dataclass
class DeviceHamiltonian:
    """Assembled H = H0 + diag(U) plus its hopping tables.

    tx[i, j] is the hopping over the x edge between nodes (i-1, j) and
    (i, j) for 1 <= i <= nx, with mirrored ghosts at i = 0 and i = nx+1;
    ty is analogous in y. All hoppings are positive; H is real symmetric
    with exactly five nonzero diagonals.
    """

    mesh: Mesh2D
    tx: np.ndarray      # (nx+2, ny+1), eV
    ty: np.ndarray      # (nx+1, ny+2), eV
    diag: np.ndarray    # (nx+1, ny+1), eV; onsite eps + U
    matrix: sp.csr_matrix = field(repr=False, default=None)

    @property
    def n(self) -> int:
        return self.mesh.n_nodes

    @property
    def nyp(self) -> int:
        return self.mesh.ny + 1

    def block(self, i: int) -> np.ndarray:
        """Dense (ny+1)^2 diagonal block of column i (onsite + y hops)."""
        nyp = self.nyp
        b = np.zeros((nyp, nyp))
        b[np.arange(nyp), np.arange(nyp)] = self.diag[i, :]
        if nyp > 1:
            hop = self.ty[i, 1:self.mesh.ny + 1]
            b[np.arange(nyp - 1), np.arange(1, nyp)] = -hop
            b[np.arange(1, nyp), np.arange(nyp - 1)] = -hop
        return b

    def coupling(self, i: int) -> np.ndarray:
        """Hopping vector between columns i and i+1 (H carries -tx)."""
        return self.tx[i + 1, :]

    def lead_block(self, side: str) -> tuple[np.ndarray, float]:
        """Transverse lead Hamiltonian H_1D and scalar lead hopping t_x.

        The lead repeats the boundary column with its potential frozen.
        The inter-column hopping must be a scalar for the per-mode surface
        solve; the row mean of the mirrored edge hoppings is used (contacts
        sit in uniform regions, so the spread is normally zero).
        """
        if side == "source":
            return self.block(0), float(self.tx[0, :].mean())
        if side == "drain":
            return self.block(self.mesh.nx), float(self.tx[self.mesh.nx + 1, :].mean())
        raise ValueError(f"unknown lead side '{side}'")


def assemble(u: FieldMap, m_star: FieldMap, mesh: Mesh2D) -> DeviceHamiltonian:
    """Build the device Hamiltonian for one (E, k_z) slice.

    Cost and allocations are linear in the node count; the slice loop calls
    this once per (E, k_z).
    """
    if u.values.shape != mesh.shape or m_star.values.shape != mesh.shape:
        raise ValueError("U/m fields do not match the mesh")
    m = m_star.values
    if np.any(m <= 0):
        raise ValueError("non-positive effective mass")

    nx, ny = mesh.nx, mesh.ny
    nxp, nyp = mesh.shape

    tx = np.empty((nx + 2, nyp))
    tx[1:nx + 1, :] = HB2M / (half_node_mass(m[:-1, :], m[1:, :]) * mesh.ax**2) \
        if nx >= 1 else HB2M / (m * mesh.ax**2)
    if nx >= 1:
        tx[0, :] = tx[1, :]
        tx[nx + 1, :] = tx[nx, :]
    else:
        tx[0, :] = tx[1, :] = HB2M / (m[0, :] * mesh.ax**2)

    ty = np.empty((nxp, ny + 2))
    if ny >= 1:
        ty[:, 1:ny + 1] = HB2M / (half_node_mass(m[:, :-1], m[:, 1:]) * mesh.ay**2)
        ty[:, 0] = ty[:, 1]
        ty[:, ny + 1] = ty[:, ny]
    else:
        # single-row mesh: ghost edges take the node's own mass
        ty[:, 0] = ty[:, 1] = HB2M / (m[:, 0] * mesh.ay**2)

    eps = tx[:-1, :] + tx[1:, :] + ty[:, :-1] + ty[:, 1:]
    diag = eps + u.values

    n = nxp * nyp
    diagonals = [diag.ravel()]
    offsets = [0]
    if ny >= 1:
        # y hops: offset +-1 with zeros at column ends (no wraparound)
        off_y = np.zeros((nxp, nyp))
        off_y[:, :ny] = -ty[:, 1:ny + 1]
        off_y_flat = off_y.ravel()[:-1]
        diagonals += [off_y_flat, off_y_flat]
        offsets += [1, -1]
    if nx >= 1:
        off_x_flat = (-tx[1:nx + 1, :]).ravel()
        diagonals += [off_x_flat, off_x_flat]
        offsets += [nyp, -nyp]
    matrix = sp.diags(diagonals, offsets, shape=(n, n), format="csr")

    return DeviceHamiltonian(mesh=mesh, tx=tx, ty=ty, diag=diag, matrix=matrix)
