"""Two-band tunneling fields: sub-bands, in-gap dispersion, effective mass
and effective potential per (E, k_z), and the tunneling window.

Transport is carried by electrons throughout. For a fixed transverse
momentum k_z the device splits pointwise into three regions:

* valence  (E <= Ev_sub): effective potential 2E - Ev_sub, mass mv*
  (the sign flip of the hole mass is absorbed into the potential),
* gap      (Ev_sub < E < Ec_sub): the two single-band evanescent branches
  are joined by a harmonic mean of the squared wave vectors, giving a
  barrier U = E - hbar^2 k_xy^2 / (2 m_t) that lies above E,
* conduction (E >= Ec_sub): potential Ec_sub, mass mc*.

The in-gap mass m_t(E) is the C1 cubic blend between mv* and mc*. Nodes
where E equals a sub-band edge are assigned to the adjacent band region;
both branch formulas agree there, so U is continuous.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .constants import HB2M
from .device import DeviceFields, FieldMap

#: gap widths below this (eV) short-circuit the mass blend to f = 0.5
_DEGENERATE_GAP = 1e-9

VALENCE, GAP, CONDUCTION = 0, 1, 2


def subbands(ec: FieldMap, ev: FieldMap, kz: float,
             fields: DeviceFields) -> tuple[FieldMap, FieldMap]:
    """Sub-band edges for transverse momentum kz (1/nm).

    Ev_sub = Ev - hbar^2 kz^2/(2 mv*), Ec_sub = Ec + hbar^2 kz^2/(2 mc*):
    the gap widens with kz from both sides.
    """
    if kz < 0:
        raise ValueError("kz must be non-negative")
    shift_c = HB2M * kz * kz / fields.mc.values
    shift_v = HB2M * kz * kz / fields.mv.values
    ec_sub = ec.like(ec.values + shift_c, tag="Ec_sub")
    ev_sub = ev.like(ev.values - shift_v, tag="Ev_sub")
    return ec_sub, ev_sub


def two_band_kxy_sq(e: float, ec_sub: np.ndarray, ev_sub: np.ndarray,
                    mc: np.ndarray, mv: np.ndarray) -> np.ndarray:
    """Signed k_xy^2 (1/nm^2) from the harmonic mean of the single-band
    squared wave vectors; negative (evanescent) inside the gap.

    Caller guarantees Ev_sub < E < Ec_sub on the evaluated nodes.
    """
    kc2 = (e - ec_sub) * mc / HB2M   # < 0 in the gap
    kv2 = (ev_sub - e) * mv / HB2M   # < 0 in the gap
    if np.any(kc2 >= 0) or np.any(kv2 >= 0):
        raise ValueError("two_band_kxy_sq called outside the gap region")
    return kc2 * kv2 / (kc2 + kv2)


def tunneling_mass(e: float, ev_sub: np.ndarray, ec_sub: np.ndarray,
                   mc: np.ndarray, mv: np.ndarray) -> np.ndarray:
    """Energy-dependent in-gap mass (m0): cubic C1 blend mv* -> mc*.

    m_t = mv + (mc - mv)(3 f^2 - 2 f^3) with f the fractional position of E
    in the local gap; the derivative vanishes at both edges.
    """
    gap = ec_sub - ev_sub
    f = np.where(gap > _DEGENERATE_GAP, (e - ev_sub) / np.where(gap > 0, gap, 1.0), 0.5)
    f = np.clip(f, 0.0, 1.0)
    return mv + (mc - mv) * (3.0 * f * f - 2.0 * f ** 3)


@dataclass
class EffectiveFields:
    """Per-node effective potential/mass for one (E, k_z) slice."""

    u: FieldMap        # eV
    m_star: FieldMap   # m0
    region: np.ndarray  # VALENCE / GAP / CONDUCTION per node


def effective_fields(e: float, ec_sub: FieldMap, ev_sub: FieldMap,
                     fields: DeviceFields) -> EffectiveFields:
    """Piecewise effective potential and mass at total in-plane energy E."""
    ecs = ec_sub.values
    evs = ev_sub.values
    mc = fields.mc.values
    mv = fields.mv.values

    region = np.full(ecs.shape, GAP, dtype=np.int8)
    region[e <= evs] = VALENCE
    region[e >= ecs] = CONDUCTION

    u = np.empty(ecs.shape)
    m = np.empty(ecs.shape)

    val = region == VALENCE
    u[val] = 2.0 * e - evs[val]
    m[val] = mv[val]

    con = region == CONDUCTION
    u[con] = ecs[con]
    m[con] = mc[con]

    gap = region == GAP
    if gap.any():
        mt = tunneling_mass(e, evs[gap], ecs[gap], mc[gap], mv[gap])
        kxy2 = two_band_kxy_sq(e, ecs[gap], evs[gap], mc[gap], mv[gap])
        u[gap] = e - HB2M * kxy2 / mt   # kxy2 < 0, so the barrier sits above E
        m[gap] = mt

    return EffectiveFields(
        u=FieldMap(ec_sub.mesh, u, "U_eff", "eV"),
        m_star=FieldMap(ec_sub.mesh, m, "m_eff", "m0"),
        region=region,
    )


@dataclass
class SubbandSlice:
    """Sub-band edges for one k_z plus the E-dependent effective fields."""

    kz: float
    ec_sub: FieldMap
    ev_sub: FieldMap
    fields: DeviceFields

    @classmethod
    def build(cls, ec: FieldMap, ev: FieldMap, kz: float,
              fields: DeviceFields) -> "SubbandSlice":
        ec_sub, ev_sub = subbands(ec, ev, kz, fields)
        return cls(kz=kz, ec_sub=ec_sub, ev_sub=ev_sub, fields=fields)

    def fields_at(self, e: float) -> EffectiveFields:
        return effective_fields(e, self.ec_sub, self.ev_sub, self.fields)


@dataclass(frozen=True)
class TunnelWindow:
    """Energy/momentum ranges over which band-to-band tunneling can occur."""

    e_min: float    # min over the device of Ec_sub at kz = 0, eV
    e_max: float    # max of Ev_sub at kz = 0, eV
    kz_max: float   # 1/nm
    m_reduced: float  # m0

    @property
    def empty(self) -> bool:
        return self.e_max <= self.e_min


def tunnel_window(ec_sub_k0: FieldMap, ev_sub_k0: FieldMap,
                  fields: DeviceFields) -> TunnelWindow:
    """Tunneling window from the kz = 0 sub-bands.

    E in (min Ec, max Ev); kz up to sqrt(2 m_r (E_max - E_min))/hbar with the
    reduced mass m_r = mc mv/(mc + mv). On multi-material meshes the largest
    per-node reduced mass is used, so the window is never underestimated.
    """
    e_min = float(ec_sub_k0.values.min())
    e_max = float(ev_sub_k0.values.max())
    mr = fields.mc.values * fields.mv.values / (fields.mc.values + fields.mv.values)
    m_reduced = float(mr.max())
    if e_max > e_min:
        kz_max = float(np.sqrt((e_max - e_min) * m_reduced / HB2M))
    else:
        kz_max = 0.0
    return TunnelWindow(e_min=e_min, e_max=e_max, kz_max=kz_max, m_reduced=m_reduced)
