"""Physical constants in the repo-wide unit system (eV, nm, m0, K, V).

Everything is derived from scipy's CODATA table at import time; no constant
is hardcoded from memory.
"""

from scipy import constants as _codata

#: Reduced Planck constant, eV*s.
HBAR_EVS = _codata.hbar / _codata.e

#: hbar^2 / (2 m0) in eV*nm^2. Kinetic prefactor for masses given in units
#: of the free-electron mass: hbar^2 k^2 / (2 m* m0) = HB2M * k^2 / m*.
HB2M = _codata.hbar**2 / (2.0 * _codata.m_e) / _codata.e * 1e18

#: Boltzmann constant, eV/K.
KB_EV = _codata.k / _codata.e

#: Elementary charge, C.
Q_E = _codata.e

#: e / eps0 in V*nm. With lengths in nm and net charge in e/nm^3, Poisson
#: reads -div(eps_r grad V) = COUL_NM * (p - n + Nd - Na).
COUL_NM = _codata.e / _codata.epsilon_0 * 1e9

#: Free electron mass, kg (for effective density-of-states prefactors).
M0_KG = _codata.m_e

#: Effective DOS prefactor: Nc = NC_PREF * (m* T/300)^(3/2) would hide the
#: temperature, so expose the raw form instead. nc_edos() lives in carriers.

CM3_TO_NM3 = 1e-21
NM3_TO_CM3 = 1e21
CM_TO_NM = 1e7
