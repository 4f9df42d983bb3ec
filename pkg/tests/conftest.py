import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

import tfetsim as tf

REFERENCE_CONFIG = """\
[device]
lx_nm = 50
ly_nm = 10
lz_nm = 1000
temperature_k = 300

[regions]
source  = x0=0 x1=15 y0=0 y1=10 material=silicon doping_cm3=-1e20
channel = x0=15 x1=35 y0=0 y1=10 material=silicon doping_cm3=1e17
drain   = x0=35 x1=50 y0=0 y1=10 material=silicon doping_cm3=1e20

[gates]
top    = side=top    x0=15 x1=35 workfunction_ev=4.5 t_ox_nm=1 eps_ox=3.9
bottom = side=bottom x0=15 x1=35 workfunction_ev=4.5 t_ox_nm=1 eps_ox=3.9

[solver]
mesh_spacing_nm = 1.0

[sweep]
vg_v = 0.0 0.5 1.0
vd_v = 0.1
"""


@pytest.fixture(scope="session")
def reference_config_text():
    return REFERENCE_CONFIG


@pytest.fixture(scope="session")
def reference_spec():
    return tf.load_device(REFERENCE_CONFIG)


@pytest.fixture(scope="session")
def reference_device(reference_spec):
    mesh = tf.build_mesh(reference_spec, 1.0)
    fields = tf.sample_fields(reference_spec, mesh)
    return reference_spec, mesh, fields


def uniform_strip(nx, ny, ax, ay, m_star=0.2, u=0.0):
    """Small synthetic strip: mesh plus constant U and mass fields."""
    mesh = tf.Mesh2D(nx=nx, ny=ny, ax=ax, ay=ay)
    u_fm = tf.FieldMap(mesh, np.full(mesh.shape, float(u)), "U", "eV")
    m_fm = tf.FieldMap(mesh, np.full(mesh.shape, float(m_star)), "m", "m0")
    return mesh, u_fm, m_fm


@pytest.fixture(scope="session")
def converged_reference_bias(reference_device):
    """One converged self-consistent solve, shared by the slower tests."""
    spec, mesh, fields = reference_device
    res = tf.run_loop(spec, mesh, fields, tf.BiasPoint(vg=1.0, vd=0.1),
                      tf.LoopConfig(max_iter=200))
    assert res.trace.status == "converged"
    return spec, mesh, fields, res
