"""Gaussian fermionic tensor network states with isometric constraints.

A small numpy/scipy library for variational ground-state search of 2D
free-fermion lattice models using translation-invariant Gaussian fermionic
tensor network states (GfTNS), with configurable isometric arrow layouts
(none, uniform, alternating per column, or custom), plus diagnostics
(momentum occupation, real-space correlators, real-space Chern number),
a sequential-circuit scheduler, and a quantum-double isometry checker.
"""

__version__ = "0.1.0"

from .models import (
    MomentumGrid,
    ModelSpec,
    BlochHamiltonian,
    DegenerateSpectrumError,
    build_grid,
    bloch_hamiltonian,
    bdg_spectrum,
    exact_ground_energy,
    exact_covariance,
)
from .gaussian import (
    LocalTensorCovariance,
    VirtualCovariance,
    ContractionResult,
    virtual_covariance,
    contract_physical,
    reorder_legs,
    bond_dimension,
)
from .isoparam import (
    ArrowPattern,
    IsoParams,
    UnconstrainedParams,
    uniform_pattern,
    alternating_pattern,
    unconstrained_pattern,
    custom_pattern,
    build_local_covariance,
    build_local_covariance_unconstrained,
    random_init,
    manifold_dimensions,
    bond_dimension_ratio,
    save_checkpoint,
    load_checkpoint,
)
from .optimize import (
    OptimConfig,
    OptimReport,
    expectation_energy,
    riemannian_gradient,
    minimize,
    covariance_field,
)
from .observables import (
    RegionPartition,
    RealSpaceCovariance,
    occupation,
    realspace_covariance,
    realspace_correlator,
    realspace_chern,
    make_partition,
)
from .circuits import CircuitSchedule, schedule_circuit
from .quantum_double import (
    GroupTable,
    cyclic_group,
    symmetric_group,
    quantum_double_tensor,
    isometry_check,
)

__all__ = [name for name in dir() if not name.startswith("_")]
