"""2D ballistic quantum-transport simulator for tunnel FETs.

Band-to-band tunneling is carried by a two-band effective-potential model
inside a 2D NEGF solver, self-consistently coupled to a finite-difference
Poisson solver. Importable as a library; `tfetsim` is the batch CLI.
"""

__version__ = "0.1.0"

from .bands import (SubbandSlice, TunnelWindow, effective_fields, subbands,
                    tunnel_window, tunneling_mass, two_band_kxy_sq)
from .carriers import (EnergyGrid, FermiLevels, closed_boundary_density,
                       electron_density, fd_half, fd_half_neg, fermi,
                       fill_pockets, full_density_oracle, hole_density,
                       negf_density, neutral_level)
from .config import ConfigError, SimConfig, config_hash, load_device, \
    parse_config, render_config
from .device import (BiasPoint, DeviceError, DeviceSpec, FieldMap, GateSpec,
                     MaterialParams, Mesh2D, Region, build_mesh,
                     builtin_materials, sample_fields)
from .hamiltonian import DeviceHamiltonian, assemble, half_node_mass
from .negf import (LeadSelfEnergy, NegfSlice, audit_self_energies, broadening,
                   gamma_factor, greens_function, lead_self_energy,
                   solve_slice, spectral_and_ldos, transmission,
                   truncated_spectral, truncated_transmission)
from .poisson import (PoissonBC, PoissonError, all_dirichlet, assemble_charge,
                      bands_from_potential, contact_dirichlet, device_bc,
                      solve_poisson)
from .scloop import (ConvergenceTrace, LoopConfig, LoopResult, initial_guess,
                     relax, run_loop)
from .transport import (CurrentResult, integrate_current, kane_generation,
                        partial_current, subthreshold_swing,
                        transmission_spectrum, wkb_current_references,
                        wkb_transmission)
