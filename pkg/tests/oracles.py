"""Independent reference computations used by the test suite.

Everything here is deliberately dumb: closed forms, brute-force
quadrature, or dense eigen-decompositions that do not share code with the
paths they check.
"""

import numpy as np
from scipy.integrate import quad
from scipy.special import gamma as gamma_fn

from tfetsim.constants import HB2M


def rect_barrier_transmission(e, u0, length, m_star):
    """Exact continuum transmission through a rectangular barrier (E < U0)."""
    if not 0.0 < e < u0:
        raise ValueError("oracle covers 0 < E < U0 only")
    k = np.sqrt(m_star * e / HB2M)
    kap = np.sqrt(m_star * (u0 - e) / HB2M)
    pref = (k * k + kap * kap) ** 2 / (4.0 * k * k * kap * kap)
    return 1.0 / (1.0 + pref * np.sinh(kap * length) ** 2)


def two_mass_step_transmission(e, m1, m2):
    """Flux-normalized transmission over a mass step at zero potential."""
    k1 = np.sqrt(m1 * e / HB2M)
    k2 = np.sqrt(m2 * e / HB2M)
    v1 = k1 / m1
    v2 = k2 / m2
    return 4.0 * v1 * v2 / (v1 + v2) ** 2


def fd_integral_quad(x, k=-0.5):
    """Adaptive-quadrature Fermi-Dirac integral with relative accuracy.

    The Boltzmann factor is pulled out for x <= 0 so the result keeps full
    relative precision down to e^-40 scales.
    """
    if x <= 0:
        f = lambda t: t**k * np.exp(-t) / (1.0 + np.exp(x - t))
        val, _ = quad(f, 0.0, 60.0, epsabs=0.0, epsrel=1e-12, limit=400)
        return float(np.exp(x) * val / gamma_fn(k + 1.0))
    f = lambda t: t**k / (np.exp(np.clip(t - x, -700, 700)) + 1.0)
    v1, _ = quad(f, 0.0, x, epsabs=0.0, epsrel=1e-12, limit=400)
    v2, _ = quad(f, x, x + 60.0, epsabs=1e-300, epsrel=1e-12, limit=400)
    return float((v1 + v2) / gamma_fn(k + 1.0))


def closed_box_eigenvalues(nx, ny, ax, ay, m_star, n_levels=6):
    """Lowest analytic eigenvalues of the hard-wall discrete Laplacian.

    The mirrored-edge assembly is a wall one ghost node outside the
    domain, so modes are sin(n pi (i+1)/(N+2)).
    """
    tx = HB2M / (m_star * ax * ax)
    ty = HB2M / (m_star * ay * ay)
    vals = []
    for mx in range(1, nx + 2):
        for my in range(1, ny + 2):
            vals.append(2 * tx * (1 - np.cos(mx * np.pi / (nx + 2)))
                        + 2 * ty * (1 - np.cos(my * np.pi / (ny + 2))))
    return np.sort(np.array(vals))[:n_levels]


def chain_dos(e, onsite, hopping):
    """Per-site density of states of the infinite uniform 1D chain."""
    x = e - onsite
    inside = np.abs(x) < 2.0 * hopping
    out = np.zeros(np.shape(x))
    out[inside] = 1.0 / (np.pi * np.sqrt(4.0 * hopping**2 - np.asarray(x)[inside] ** 2))
    return out
