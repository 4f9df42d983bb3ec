import numpy as np
import pytest
import scipy.linalg as la

import tfetsim as tf
from tfetsim import negf
from tfetsim.constants import HB2M
from tfetsim.device import FieldMap, Mesh2D
from tfetsim.hamiltonian import assemble, half_node_mass

from conftest import uniform_strip
from oracles import closed_box_eigenvalues, two_mass_step_transmission


def test_half_node_mass_harmonic():
    assert half_node_mass(0.3, 0.3) == pytest.approx(0.3)
    assert half_node_mass(1.0, 3.0) == pytest.approx(1.5)


def test_pentadiagonal_pattern_no_wraparound():
    mesh, u, m = uniform_strip(6, 3, 0.5, 0.5)
    ham = assemble(u, m, mesh)
    a = ham.matrix.toarray()
    nyp = mesh.ny + 1
    n = mesh.n_nodes
    allowed = np.zeros((n, n), dtype=bool)
    for p in range(n):
        allowed[p, p] = True
        if (p + 1) % nyp != 0 and p + 1 < n:
            allowed[p, p + 1] = allowed[p + 1, p] = True
        if p + nyp < n:
            allowed[p, p + nyp] = allowed[p + nyp, p] = True
    assert np.all(a[~allowed] == 0.0)
    # column ends never couple across rows
    for i in range(mesh.nx):
        p = i * nyp + (nyp - 1)
        assert a[p, p + 1] == 0.0


def test_hermitian_and_positive_hoppings():
    rng = np.random.default_rng(7)
    mesh = Mesh2D(nx=7, ny=4, ax=0.4, ay=0.6)
    u = FieldMap(mesh, rng.normal(size=mesh.shape), "U", "eV")
    m = FieldMap(mesh, 0.1 + rng.random(mesh.shape), "m", "m0")
    ham = assemble(u, m, mesh)
    a = ham.matrix.toarray()
    assert np.allclose(a, a.T)
    assert np.all(ham.tx > 0) and np.all(ham.ty > 0)


def test_closed_box_eigenvalues_match_analytic():
    mesh, u, m = uniform_strip(9, 5, 0.5, 0.5, m_star=0.3)
    ham = assemble(u, m, mesh)
    vals = np.sort(la.eigvalsh(ham.matrix.toarray()))[:6]
    ref = closed_box_eigenvalues(mesh.nx, mesh.ny, mesh.ax, mesh.ay, 0.3, 6)
    assert np.allclose(vals, ref, rtol=1e-12)


def test_constant_potential_shifts_spectrum():
    mesh, u, m = uniform_strip(8, 3, 0.5, 0.5)
    h0 = assemble(u, m, mesh)
    u_c = u.like(u.values + 0.37)
    h1 = assemble(u_c, m, mesh)
    e0 = np.sort(la.eigvalsh(h0.matrix.toarray()))
    e1 = np.sort(la.eigvalsh(h1.matrix.toarray()))
    assert np.allclose(e1, e0 + 0.37, atol=1e-12)


def test_assembly_linear_in_potential():
    rng = np.random.default_rng(11)
    mesh = Mesh2D(nx=5, ny=4, ax=0.5, ay=0.5)
    m = FieldMap(mesh, 0.2 + rng.random(mesh.shape), "m", "m0")
    u1 = FieldMap(mesh, rng.normal(size=mesh.shape), "U", "eV")
    u2 = FieldMap(mesh, rng.normal(size=mesh.shape), "U", "eV")
    h12 = assemble(u1.like(u1.values + u2.values), m, mesh).matrix.toarray()
    h1 = assemble(u1, m, mesh).matrix.toarray()
    diff = h12 - h1
    assert np.allclose(diff, np.diag(u2.values.ravel()), atol=1e-14)


def test_eigenvalues_bounded_below_by_potential_floor():
    rng = np.random.default_rng(13)
    mesh = Mesh2D(nx=6, ny=5, ax=0.5, ay=0.5)
    u = FieldMap(mesh, rng.uniform(-0.4, 0.6, mesh.shape), "U", "eV")
    m = FieldMap(mesh, 0.1 + rng.random(mesh.shape), "m", "m0")
    ham = assemble(u, m, mesh)
    vals = la.eigvalsh(ham.matrix.toarray())
    assert vals.min() >= u.values.min() - 1e-12


def test_nonpositive_mass_rejected():
    mesh, u, m = uniform_strip(4, 2, 0.5, 0.5)
    m.values[2, 1] = 0.0
    with pytest.raises(ValueError, match="mass"):
        assemble(u, m, mesh)


def test_mass_step_transmission_flux_form():
    """Harmonic half-node mass reproduces the BenDaniel-Duke step result."""
    a = 0.005
    nx = 1200
    mesh = Mesh2D(nx=nx, ny=0, ax=a, ay=1e4)
    m1, m2 = 0.1, 0.3
    mvals = np.where(mesh.x < mesh.lx / 2, m1, m2)[:, None]
    u = FieldMap(mesh, np.zeros(mesh.shape), "U", "eV")
    m = FieldMap(mesh, mvals, "m", "m0")
    ham = assemble(u, m, mesh)
    e = 0.15
    shift = 2 * HB2M / (m1 * mesh.ay**2)  # tiny ghost-t_y offset
    t = negf.solve_slice(ham, e + shift, with_ldos=False).t
    # flux-normalized two-mass step; velocity mismatch sets the reflection
    t_ref = two_mass_step_transmission(e, m1, m2)
    assert t == pytest.approx(t_ref, rel=1e-3)
    # the wrong (velocity-ignoring) formula is far off, so the check bites
    k1 = np.sqrt(m1 * e / HB2M)
    k2 = np.sqrt(m2 * e / HB2M)
    t_wrong = 4 * k1 * k2 / (k1 + k2) ** 2
    assert abs(t - t_wrong) > 20 * abs(t - t_ref)


def test_lead_block_matches_boundary_column():
    mesh, u, m = uniform_strip(6, 3, 0.5, 0.5)
    u.values[0, :] = 0.2
    ham = assemble(u, m, mesh)
    h1d, t = ham.lead_block("source")
    assert np.allclose(h1d, h1d.T)
    assert t == pytest.approx(ham.tx[1, 0])
    assert h1d[0, 0] == pytest.approx(ham.diag[0, 0])
