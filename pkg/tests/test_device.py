import numpy as np
import pytest

import tfetsim as tf
from tfetsim.config import ConfigError
from tfetsim.device import DeviceError


def test_reference_config_loads(reference_config_text):
    spec = tf.load_device(reference_config_text)
    assert spec.lx == 50.0 and spec.ly == 10.0
    assert [r.name for r in spec.regions] == ["source", "channel", "drain"]
    assert spec.regions[0].doping == -1e20
    assert spec.gates[0].workfunction == 4.5
    assert spec.gates[0].t_ox == 1.0


def test_empty_region_list_rejected():
    cfg = "[device]\nlx_nm = 10\nly_nm = 5\n"
    with pytest.raises(ConfigError, match="no regions"):
        tf.load_device(cfg)


def test_overlapping_regions_named():
    cfg = """
[device]
lx_nm = 20
ly_nm = 5
[regions]
left  = x0=0 x1=11 y0=0 y1=5 material=silicon doping_cm3=1e17
right = x0=10 x1=20 y0=0 y1=5 material=silicon doping_cm3=1e17
"""
    with pytest.raises(ConfigError) as err:
        tf.load_device(cfg)
    assert "left" in str(err.value) and "right" in str(err.value)


def test_unknown_key_diagnostic():
    cfg = "[device]\nlx_nm = 10\nly_nm = 5\nfoo = 3\n"
    with pytest.raises(ConfigError, match="foo"):
        tf.load_device(cfg)


def test_echo_round_trip_bit_identical(reference_config_text):
    cfg = tf.parse_config(reference_config_text)
    echo = tf.render_config(cfg)
    cfg2 = tf.parse_config(echo)
    assert cfg2.device == cfg.device
    assert tf.render_config(cfg2) == echo


def test_mesh_spacing_exact_division(reference_spec):
    spec40 = tf.DeviceSpec(
        lx=40.0, ly=10.0, lz=1e3, temperature=300.0,
        regions=(tf.Region("all", 0, 40, 0, 10, "silicon", 1e17),),
        gates=())
    mesh = tf.build_mesh(spec40, 0.5)
    assert (mesh.nx, mesh.ny) == (80, 20)
    assert mesh.ax == pytest.approx(0.5) and mesh.ay == pytest.approx(0.5)


def test_mesh_spacing_snaps_to_boundaries():
    spec40 = tf.DeviceSpec(
        lx=40.0, ly=10.0, lz=1e3, temperature=300.0,
        regions=(tf.Region("all", 0, 40, 0, 10, "silicon", 1e17),),
        gates=())
    mesh = tf.build_mesh(spec40, 0.3)
    # oracle: smallest count with spacing <= target that hits every boundary
    def smallest(length, target, bounds):
        n = int(np.ceil(length / target))
        while True:
            a = length / n
            if all(abs(b / a - round(b / a)) < 1e-9 for b in bounds):
                return n
            n += 1
    assert mesh.nx == smallest(40.0, 0.3, [])
    assert mesh.nx == 134
    assert mesh.ax == pytest.approx(40.0 / 134)

    # with an internal boundary the count must also align with it
    spec_b = tf.DeviceSpec(
        lx=40.0, ly=10.0, lz=1e3, temperature=300.0,
        regions=(tf.Region("a", 0, 10, 0, 10, "silicon", 1e17),
                 tf.Region("b", 10, 40, 0, 10, "silicon", 1e17)),
        gates=())
    mesh_b = tf.build_mesh(spec_b, 0.3)
    assert mesh_b.nx == smallest(40.0, 0.3, [10.0])
    for b in (10.0,):
        assert np.isclose(b / mesh_b.ax, round(b / mesh_b.ax))


def test_degenerate_thickness_rejected():
    with pytest.raises(DeviceError, match="thickness must be positive"):
        tf.DeviceSpec(lx=10.0, ly=0.0, lz=1e3, temperature=300.0,
                      regions=(tf.Region("a", 0, 10, 0, 1, "silicon", 0.0),),
                      gates=())


def test_mesh_contains_all_region_boundaries(reference_spec):
    mesh = tf.build_mesh(reference_spec, 0.7)
    xs = set(np.round(mesh.x, 9))
    for b in reference_spec.x_boundaries():
        assert round(float(b), 9) in xs


def test_sample_fields_values(reference_device):
    spec, mesh, fields = reference_device
    assert fields.doping.values[0, 0] == -1e20          # p+ source, signed
    i_mid = int(round(25 / mesh.ax))
    assert fields.doping.values[i_mid, 3] == 1e17       # channel
    assert fields.doping.values[-1, -1] == 1e20         # n+ drain
    si = spec.materials["silicon"]
    assert np.all(fields.eps.values == si.eps_r)
    assert np.all(fields.eg.values == si.eg)


def test_sample_fields_deterministic(reference_device):
    spec, mesh, _ = reference_device
    a = tf.sample_fields(spec, mesh)
    b = tf.sample_fields(spec, mesh)
    assert np.array_equal(a.doping.values, b.doping.values)
    assert np.array_equal(a.mat_index, b.mat_index)


def test_boundary_tie_break_first_listed():
    spec = tf.DeviceSpec(
        lx=20.0, ly=4.0, lz=1e3, temperature=300.0,
        regions=(tf.Region("left", 0, 10, 0, 4, "silicon", -3e18),
                 tf.Region("right", 10, 20, 0, 4, "silicon", 7e18)),
        gates=())
    mesh = tf.build_mesh(spec, 1.0)
    fields = tf.sample_fields(spec, mesh)
    i_b = int(round(10 / mesh.ax))
    assert fields.doping.values[i_b, 0] == -3e18


def test_material_invariants():
    with pytest.raises(DeviceError):
        tf.MaterialParams("bad", eg=-1.0, mc_star=0.2, mv_star=0.3,
                          eps_r=10.0, chi=4.0)
    with pytest.raises(DeviceError):
        tf.MaterialParams("bad", eg=1.0, mc_star=0.2, mv_star=0.3,
                          eps_r=0.5, chi=4.0)


def test_config_material_override():
    cfg = """
[device]
lx_nm = 10
ly_nm = 5
[regions]
all = x0=0 x1=10 y0=0 y1=5 material=mymat doping_cm3=1e17
[materials]
mymat = eg=0.8 mc_star=0.1 mv_star=0.2 eps_r=13 chi=4.2
"""
    spec = tf.load_device(cfg)
    assert spec.materials["mymat"].eg == 0.8
    assert spec.regions[0].material == "mymat"
