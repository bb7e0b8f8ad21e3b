"""Kibble-Zurek quench simulator for the 1+1d quartic-oscillator chain.

Truncated-local-basis matrix-product-state dynamics (DMRG ground states,
fourth-order Suzuki-Trotter gate evolution, quasi-unitary basis changes)
plus the scaling bookkeeping that locates the classical-to-quantum
crossover of the defect power laws.
"""

__version__ = "0.1.0"

from .local_solver import (
    BasisChangeMatrix,
    LocalEigensystem,
    LocalHamiltonianSpec,
    SiteOperators,
    basis_change_matrix,
    site_operators,
    solve_local,
)
from .model import (
    LatticeHamiltonian,
    LatticeSpec,
    ModelParams,
    QuenchSchedule,
    assemble,
    bond_split,
    coupling_ion_chain,
    schedule,
)

__all__ = [
    "__version__",
    "BasisChangeMatrix",
    "LocalEigensystem",
    "LocalHamiltonianSpec",
    "SiteOperators",
    "basis_change_matrix",
    "site_operators",
    "solve_local",
    "LatticeHamiltonian",
    "LatticeSpec",
    "ModelParams",
    "QuenchSchedule",
    "assemble",
    "bond_split",
    "coupling_ion_chain",
    "schedule",
]
