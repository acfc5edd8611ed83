"""Many-body density of states of Bose-Hubbard lattices.

Three estimates of the fixed-N level density: exact diagonalization, a
smooth phase-space average, and a sum over pseudo-periodic mean-field
orbits.  Non-interacting lattices are handled in closed form.
"""

from .grids import DensityGrid, central_window, windowed_rel_l2
from .model import (
    BasisSizeError,
    BoseHubbardModel,
    FockBasis,
    Spectrum,
    build_basis,
    build_hamiltonian,
    exact_spectrum,
    sector_dimension,
    smoothed_dos,
)
from .meanfield import (
    Diagnostics,
    FixedPoint,
    IntegrationError,
    eom_rhs,
    find_fixed_points,
    integrate,
    integrate_with_tangent,
    mf_hamiltonian,
)
from .orbits import (
    OrbitSearchError,
    PseudoPeriodicOrbit,
    continue_family,
    find_orbit,
    maslov_index,
    orbit_action,
    primitive_decomposition,
    reduced_monodromy,
)
from .semiclassics import (
    OrbitFamily,
    WeylEstimate,
    oscillatory_dos,
    time_spectrum,
    total_dos,
    weyl_dos,
)
from .freefield import (
    FreeFieldData,
    ebk_levels,
    enumerate_orbits,
    enumerate_orbits_at_energy,
    free_levels,
    freefield_osc_dos,
    maslov_free,
    residue_identity_check,
    stability_factor,
)

__version__ = "0.1.0"
