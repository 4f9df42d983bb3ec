import numpy as np
import pytest

import tfetsim as tf
from tfetsim.bands import (CONDUCTION, GAP, VALENCE, SubbandSlice,
                           effective_fields, subbands, tunnel_window,
                           tunneling_mass, two_band_kxy_sq)
from tfetsim.constants import HB2M
from tfetsim.device import FieldMap, Mesh2D


def make_fields(nx=20, ny=4, junction=True):
    """Small silicon slab with a linear band ramp for slice tests."""
    spec = tf.DeviceSpec(
        lx=float(nx), ly=float(ny), lz=1e3, temperature=300.0,
        regions=(tf.Region("all", 0, float(nx), 0, float(ny), "silicon", 1e17),),
        gates=())
    mesh = tf.build_mesh(spec, 1.0)
    fields = tf.sample_fields(spec, mesh)
    x = mesh.x[:, None] * np.ones((1, mesh.ny + 1))
    drop = 1.5 * x / mesh.lx if junction else np.zeros_like(x)
    ec = FieldMap(mesh, 0.8 - drop, "Ec", "eV")
    ev = FieldMap(mesh, 0.8 - fields.eg.values - drop, "Ev", "eV")
    return fields, ec, ev


def test_subbands_at_zero_kz_equal_band_edges():
    fields, ec, ev = make_fields()
    ec_s, ev_s = subbands(ec, ev, 0.0, fields)
    assert np.array_equal(ec_s.values, ec.values)
    assert np.array_equal(ev_s.values, ev.values)


def test_subbands_gap_widening_exact():
    fields, ec, ev = make_fields()
    kz = 0.8
    ec_s, ev_s = subbands(ec, ev, kz, fields)
    widening = HB2M * kz**2 * (1.0 / fields.mc.values + 1.0 / fields.mv.values)
    gap0 = ec.values - ev.values
    assert np.allclose((ec_s.values - ev_s.values) - gap0, widening, rtol=1e-14)


def test_subband_ordering_with_kz():
    fields, ec, ev = make_fields()
    prev_c, prev_v = ec.values.copy(), ev.values.copy()
    for kz in (0.3, 0.6, 1.2):
        ec_s, ev_s = subbands(ec, ev, kz, fields)
        assert np.all(ec_s.values > prev_c)   # conduction sub-bands rise
        assert np.all(ev_s.values < prev_v)   # valence sub-bands fall
        prev_c, prev_v = ec_s.values, ev_s.values


def test_kxy_symmetric_point():
    # equal evanescent branches: harmonic mean halves the magnitude
    mc = np.array([0.3])
    mv = np.array([0.3])
    ec_s = np.array([0.5])
    ev_s = np.array([-0.5])
    k2 = two_band_kxy_sq(0.0, ec_s, ev_s, mc, mv)
    kc2 = (0.0 - ec_s) * mc / HB2M
    assert k2[0] == pytest.approx(kc2[0] / 2.0)
    assert k2[0] < 0.0


def test_kxy_electron_like_limit():
    mc = np.array([0.25])
    mv = np.array([0.4])
    ec_s = np.array([0.56])
    ev_s = np.array([-0.56])
    e = 0.5599  # just below the conduction sub-band
    k2 = two_band_kxy_sq(e, ec_s, ev_s, mc, mv)
    kc2 = (e - ec_s) * mc / HB2M
    assert k2[0] == pytest.approx(kc2[0], rel=2e-4)


def test_kxy_outside_gap_rejected():
    with pytest.raises(ValueError):
        two_band_kxy_sq(1.0, np.array([0.5]), np.array([-0.5]),
                        np.array([0.3]), np.array([0.3]))


def test_kxy_harmonic_mean_bound():
    rng = np.random.default_rng(3)
    mc = 0.1 + rng.random(200)
    mv = 0.1 + rng.random(200)
    ec_s = 0.3 + rng.random(200)
    ev_s = -0.3 - rng.random(200)
    k2 = two_band_kxy_sq(0.05, ec_s, ev_s, mc, mv)
    kc2 = (0.05 - ec_s) * mc / HB2M
    kv2 = (ev_s - 0.05) * mv / HB2M
    assert np.all(np.abs(k2) <= np.minimum(np.abs(kc2), np.abs(kv2)) + 1e-15)


def test_tunneling_mass_endpoints_and_midpoint():
    mc = np.array([0.26])
    mv = np.array([0.38])
    ev_s = np.array([-0.5])
    ec_s = np.array([0.5])
    assert tunneling_mass(-0.5, ev_s, ec_s, mc, mv)[0] == pytest.approx(0.38)
    assert tunneling_mass(0.5, ev_s, ec_s, mc, mv)[0] == pytest.approx(0.26)
    assert tunneling_mass(0.0, ev_s, ec_s, mc, mv)[0] == pytest.approx(0.32)


def test_tunneling_mass_flat_derivative_at_edges():
    mc = np.array([0.26])
    mv = np.array([0.38])
    ev_s = np.array([-0.5])
    ec_s = np.array([0.5])
    h = 1e-5
    for edge in (-0.5, 0.5):
        sign = 1.0 if edge < 0 else -1.0
        d = (tunneling_mass(edge + sign * h, ev_s, ec_s, mc, mv)[0]
             - tunneling_mass(edge, ev_s, ec_s, mc, mv)[0]) / (sign * h)
        assert abs(d) < 1e-6  # C1 continuation into the bands


def test_effective_fields_regions_and_masses():
    fields, ec, ev = make_fields()
    e = 0.1
    slc = SubbandSlice.build(ec, ev, 0.0, fields)
    eff = slc.fields_at(e)
    val = eff.region == VALENCE
    con = eff.region == CONDUCTION
    gap = eff.region == GAP
    assert val.any() and con.any() and gap.any()
    assert np.allclose(eff.u.values[val], 2 * e - ev.values[val])
    assert np.allclose(eff.m_star.values[val], fields.mv.values[val])
    assert np.allclose(eff.u.values[con], ec.values[con])
    assert np.all(eff.u.values[gap] > e)   # barrier above E in the gap


def test_effective_potential_continuity_at_branch_edges():
    """Gap and band branch formulas agree approaching both edge energies."""
    mc = np.array([0.26])
    mv = np.array([0.38])
    ec_s = np.array([0.6])
    ev_s = np.array([-0.52])

    def u_gap(e):
        mt = tunneling_mass(e, ev_s, ec_s, mc, mv)
        k2 = two_band_kxy_sq(e, ec_s, ev_s, mc, mv)
        return e - HB2M * k2[0] / mt[0]

    eps = 1e-6
    # valence edge: gap branch vs U_v = 2E - Ev_sub
    e_in = ev_s[0] + eps
    assert abs(u_gap(e_in) - (2 * e_in - ev_s[0])) < 1e-10
    # conduction edge: gap branch vs U_c = Ec_sub
    e_in = ec_s[0] - eps
    assert abs(u_gap(e_in) - ec_s[0]) < 1e-10


def test_barrier_grows_with_kz():
    fields, ec, ev = make_fields()
    e = 0.1
    prev_max = -np.inf
    for kz in (0.0, 0.4, 0.8, 1.2):
        slc = SubbandSlice.build(ec, ev, kz, fields)
        eff = slc.fields_at(e)
        gap = eff.region == GAP
        assert gap.any()
        peak = eff.u.values[gap].max()
        assert peak >= prev_max - 1e-12
        prev_max = peak


def test_tunnel_window_values():
    fields, ec, ev = make_fields()
    w = tunnel_window(ec, ev, fields)
    assert w.e_min == pytest.approx(ec.values.min())
    assert w.e_max == pytest.approx(ev.values.max())
    mr = 0.26 * 0.38 / (0.26 + 0.38)
    assert w.m_reduced == pytest.approx(mr)
    assert w.kz_max == pytest.approx(np.sqrt((w.e_max - w.e_min) * mr / HB2M))


def test_tunnel_window_degenerate_and_empty():
    fields, ec, ev = make_fields(junction=False)
    w = tunnel_window(ec, ev, fields)   # flat bands never overlap
    assert w.empty and w.kz_max == 0.0


def test_equal_masses_reduced_mass():
    mesh = Mesh2D(nx=4, ny=2, ax=1.0, ay=1.0)
    m = FieldMap(mesh, np.full(mesh.shape, 0.3), "m", "m0")
    fields = tf.sample_fields(
        tf.DeviceSpec(lx=4.0, ly=2.0, lz=1e3, temperature=300.0,
                      regions=(tf.Region("a", 0, 4, 0, 2, "silicon", 0.0),),
                      gates=()), mesh)
    fields.mc.values[:] = 0.3
    fields.mv.values[:] = 0.3
    ec = FieldMap(mesh, np.linspace(0.5, -0.5, 5)[:, None] * np.ones((1, 3)), "Ec", "eV")
    ev = ec.like(ec.values - 1.0, tag="Ev")
    w = tunnel_window(ec, ev, fields)
    assert w.m_reduced == pytest.approx(0.15)
