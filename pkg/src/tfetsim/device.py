"""Device description: materials, geometry regions, mesh, and nodal fields.

The device is a rectangular semiconductor body tiled by rectangular regions
(piecewise-constant material and net doping). Gates act on segments of the
top/bottom boundary and enter only through the Poisson boundary condition;
the oxide is never meshed. Ohmic contacts span the x = 0 and x = Lx edges.

Units: nm, eV, K; doping in cm^-3 (signed net Nd - Na); masses in m0.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

logger = logging.getLogger(__name__)

_GEOM_RTOL = 1e-9


class DeviceError(ValueError):
    """Invalid device description (schema or geometry)."""


@dataclass(frozen=True)
class MaterialParams:
    """Bulk band parameters of one material."""

    name: str
    eg: float        # bandgap, eV
    mc_star: float   # electron effective mass, m0
    mv_star: float   # hole effective mass, m0
    eps_r: float     # relative permittivity
    chi: float       # electron affinity, eV

    def __post_init__(self):
        if self.eg <= 0:
            raise DeviceError(f"material '{self.name}': eg must be > 0")
        if self.mc_star <= 0 or self.mv_star <= 0:
            raise DeviceError(f"material '{self.name}': effective masses must be > 0")
        if self.eps_r < 1:
            raise DeviceError(f"material '{self.name}': eps_r must be >= 1")


def builtin_materials() -> dict[str, MaterialParams]:
    """Shipped material table (see README for the data sources)."""
    text = resources.files("tfetsim.data").joinpath("materials.json").read_text()
    table = {}
    for name, p in json.loads(text).items():
        table[name] = MaterialParams(name=name, **p)
    return table


@dataclass(frozen=True)
class Region:
    """Axis-aligned rectangle with one material and a constant net doping."""

    name: str
    x0: float
    x1: float
    y0: float
    y1: float
    material: str
    doping: float    # net Nd - Na, cm^-3 (negative for p-type)

    def __post_init__(self):
        if not (self.x1 > self.x0 and self.y1 > self.y0):
            raise DeviceError(f"region '{self.name}': empty or inverted rectangle")

    def contains(self, x: float, y: float, tol: float) -> bool:
        return (self.x0 - tol <= x <= self.x1 + tol
                and self.y0 - tol <= y <= self.y1 + tol)

    def overlaps(self, other: "Region", tol: float) -> bool:
        dx = min(self.x1, other.x1) - max(self.x0, other.x0)
        dy = min(self.y1, other.y1) - max(self.y0, other.y0)
        return dx > tol and dy > tol


@dataclass(frozen=True)
class GateSpec:
    """Metal gate over an oxide layer on a segment of the top/bottom edge."""

    name: str
    side: str          # 'top' (y = Ly) or 'bottom' (y = 0)
    x0: float
    x1: float
    workfunction: float  # eV
    t_ox: float          # nm
    eps_ox: float        # relative permittivity of the oxide

    def __post_init__(self):
        if self.side not in ("top", "bottom"):
            raise DeviceError(f"gate '{self.name}': side must be 'top' or 'bottom'")
        if self.t_ox <= 0:
            raise DeviceError(f"gate '{self.name}': t_ox must be positive")
        if self.x1 <= self.x0:
            raise DeviceError(f"gate '{self.name}': empty segment")


@dataclass(frozen=True)
class DeviceSpec:
    """Validated device: geometry, doping, materials, gate stack, contacts.

    Contacts are implicit: ohmic source at x = 0 and ohmic drain at x = Lx,
    both spanning the full thickness. Lz is only a width normalization;
    current is reported per unit width.
    """

    lx: float
    ly: float
    lz: float
    temperature: float
    regions: tuple[Region, ...]
    gates: tuple[GateSpec, ...]
    materials: dict[str, MaterialParams] = field(default_factory=builtin_materials)

    def __post_init__(self):
        if self.ly <= 0:
            raise DeviceError("thickness must be positive")
        if self.lx <= 0:
            raise DeviceError("length must be positive")
        if self.temperature <= 0:
            raise DeviceError("temperature must be positive")
        if not self.regions:
            raise DeviceError("no regions")
        tol = _GEOM_RTOL * max(self.lx, self.ly)
        for r in self.regions:
            if r.material not in self.materials:
                raise DeviceError(f"region '{r.name}': unknown material '{r.material}'")
            if r.x0 < -tol or r.x1 > self.lx + tol or r.y0 < -tol or r.y1 > self.ly + tol:
                raise DeviceError(f"region '{r.name}': extends outside the body")
        for i, a in enumerate(self.regions):
            for b in self.regions[i + 1:]:
                if a.overlaps(b, tol):
                    raise DeviceError(
                        f"regions '{a.name}' and '{b.name}' overlap")
        area = sum((r.x1 - r.x0) * (r.y1 - r.y0) for r in self.regions)
        if abs(area - self.lx * self.ly) > 1e-6 * self.lx * self.ly:
            raise DeviceError("regions do not tile the body")
        for g in self.gates:
            if g.x0 < -tol or g.x1 > self.lx + tol:
                raise DeviceError(f"gate '{g.name}': segment outside the body")
        src = [r for r in self.regions if abs(r.x0) <= tol]
        drn = [r for r in self.regions if abs(r.x1 - self.lx) <= tol]
        if not src or not drn:
            raise DeviceError("source/drain regions must touch their contacts")

    def region_at(self, x: float, y: float) -> Region:
        """First-listed region containing (x, y); ties go to the earlier region."""
        tol = _GEOM_RTOL * max(self.lx, self.ly)
        for r in self.regions:
            if r.contains(x, y, tol):
                return r
        raise RuntimeError(f"node ({x}, {y}) outside all regions; tiling invariant broken")

    def x_boundaries(self) -> np.ndarray:
        b = {0.0, self.lx}
        for r in self.regions:
            b.update((r.x0, r.x1))
        for g in self.gates:
            b.update((g.x0, g.x1))
        return np.array(sorted(b))

    def y_boundaries(self) -> np.ndarray:
        b = {0.0, self.ly}
        for r in self.regions:
            b.update((r.y0, r.y1))
        return np.array(sorted(b))


@dataclass(frozen=True)
class BiasPoint:
    """Applied terminal voltages (V). All gates share vg; source is vs."""

    vg: float = 0.0
    vd: float = 0.0
    vs: float = 0.0


@dataclass(frozen=True)
class Mesh2D:
    """Uniform rectangular tensor mesh with (nx+1) x (ny+1) nodes."""

    nx: int
    ny: int
    ax: float   # spacing along x, nm
    ay: float   # spacing along y, nm

    def __post_init__(self):
        if self.ax <= 0 or self.ay <= 0:
            raise DeviceError("mesh spacing must be positive")

    @property
    def lx(self) -> float:
        return self.nx * self.ax

    @property
    def ly(self) -> float:
        return self.ny * self.ay

    @property
    def shape(self) -> tuple[int, int]:
        return (self.nx + 1, self.ny + 1)

    @property
    def n_nodes(self) -> int:
        return (self.nx + 1) * (self.ny + 1)

    @property
    def x(self) -> np.ndarray:
        return np.arange(self.nx + 1) * self.ax

    @property
    def y(self) -> np.ndarray:
        return np.arange(self.ny + 1) * self.ay


@dataclass
class FieldMap:
    """One real value per mesh node, tagged with a quantity and units.

    values[i, j] belongs to node (x_i, y_j); flattening in C order matches
    the column-major (y fastest) state ordering used by the Hamiltonian.
    """

    mesh: Mesh2D
    values: np.ndarray
    tag: str = ""
    units: str = ""

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != self.mesh.shape:
            raise DeviceError(
                f"field '{self.tag}': shape {self.values.shape} does not match "
                f"mesh {self.mesh.shape}")
        if not np.all(np.isfinite(self.values)):
            raise DeviceError(f"field '{self.tag}': non-finite values")

    def like(self, values: np.ndarray, tag: str = "", units: str = "") -> "FieldMap":
        return FieldMap(self.mesh, values, tag or self.tag, units or self.units)

    def flat(self) -> np.ndarray:
        return self.values.reshape(-1)


def _snap_axis(length: float, boundaries: np.ndarray, target: float,
               axis: str, max_sections: int = 200000) -> int:
    """Smallest section count with spacing <= target and nodes on every boundary."""
    n0 = max(1, int(np.ceil(length / target - 1e-12)))
    interior = [b for b in boundaries if 0 < b < length]
    for n in range(n0, max_sections + 1):
        a = length / n
        if all(abs(b / a - round(b / a)) < 1e-6 for b in interior):
            if n != n0 or abs(a - target) > 1e-12 * target:
                logger.info("mesh %s spacing adjusted to %.9g nm (%d sections) "
                            "to honor target %.9g nm and region boundaries",
                            axis, a, n, target)
            return n
    raise DeviceError(
        f"cannot align a uniform {axis} mesh of spacing <= {target} nm with the "
        f"region boundaries {interior}")


def build_mesh(spec: DeviceSpec, target_spacing: float,
               target_spacing_y: float | None = None) -> Mesh2D:
    """Uniform mesh with per-axis spacing <= target, nodes on region boundaries.

    When the target does not divide the geometry the spacing is snapped to the
    next finer aligned value and the adjustment is logged, never silent.
    """
    if target_spacing <= 0 or (target_spacing_y is not None and target_spacing_y <= 0):
        raise DeviceError("target spacing must be positive")
    ty = target_spacing if target_spacing_y is None else target_spacing_y
    nx = _snap_axis(spec.lx, spec.x_boundaries(), target_spacing, "x")
    ny = _snap_axis(spec.ly, spec.y_boundaries(), ty, "y")
    return Mesh2D(nx=nx, ny=ny, ax=spec.lx / nx, ay=spec.ly / ny)


@dataclass
class DeviceFields:
    """Nodal samples of the device description on one mesh."""

    mesh: Mesh2D
    doping: FieldMap       # net Nd - Na, cm^-3
    eps: FieldMap          # relative permittivity
    mat_index: np.ndarray  # int index into `materials`
    materials: tuple[MaterialParams, ...]
    eg: FieldMap           # bandgap, eV
    mc: FieldMap           # electron mass, m0
    mv: FieldMap           # hole mass, m0
    chi: FieldMap          # affinity, eV


def sample_fields(spec: DeviceSpec, mesh: Mesh2D) -> DeviceFields:
    """Evaluate doping, permittivity and material parameters per node.

    Nodes exactly on a shared region boundary take the first-listed region
    (regions are ordered in the config). Full dopant ionization is assumed.
    """
    shape = mesh.shape
    mat_names = []
    mat_of_region = {}
    for r in spec.regions:
        if r.material not in mat_names:
            mat_names.append(r.material)
        mat_of_region[r.name] = mat_names.index(r.material)
    materials = tuple(spec.materials[m] for m in mat_names)

    doping = np.empty(shape)
    idx = np.empty(shape, dtype=int)
    for i, x in enumerate(mesh.x):
        for j, y in enumerate(mesh.y):
            r = spec.region_at(x, y)
            doping[i, j] = r.doping
            idx[i, j] = mat_of_region[r.name]

    def per_node(attr):
        lut = np.array([getattr(m, attr) for m in materials])
        return lut[idx]

    mk = lambda v, tag, units: FieldMap(mesh, v, tag, units)
    return DeviceFields(
        mesh=mesh,
        doping=mk(doping, "doping", "cm^-3"),
        eps=mk(per_node("eps_r"), "eps_r", "1"),
        mat_index=idx,
        materials=materials,
        eg=mk(per_node("eg"), "Eg", "eV"),
        mc=mk(per_node("mc_star"), "mc", "m0"),
        mv=mk(per_node("mv_star"), "mv", "m0"),
        chi=mk(per_node("chi"), "chi", "eV"),
    )
