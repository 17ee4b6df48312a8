"""Hybridizable DG solver for the Ostrovsky equation in one space dimension."""

__version__ = "0.1.0"

from .errors import (
    ConfigurationError,
    UsageError,
    SolverError,
    SingularMatrixError,
    SingularBlockError,
    CondensationError,
    NewtonError,
    StepFailure,
    IterationDivergence,
)
from .mesh_basis import (
    Mesh,
    QuadRule,
    BasisSpec,
    build_mesh,
    mesh_from_nodes,
    gauss_legendre_rule,
    legendre_eval,
    make_basis,
    l2_project,
    eval_field,
    l2_error,
    l2_norm,
    integrate_field,
)
from .linalg import (
    LUFactorization,
    BlockTridiagonalSystem,
    lu_factor,
    lu_solve,
    block_tridiag_solve,
    fft_forward,
    fft_inverse,
)

from .hdg_operator import (
    BoundaryData,
    ProblemConfig,
    StabParams,
    FieldState,
    TraceState,
    SpatialParts,
    Discretization,
    CondensedBlocks,
    tilde_tau,
    resolve_tau_f,
    condense,
    recover_local,
    split_local,
    local_residual,
    local_jacobian,
    init_aux_fields,
)
from .profiles import (
    ManufacturedCase,
    PetviashviliConfig,
    SolitaryProfile,
    manufactured_source,
    linear_symbol,
    petviashvili_solve,
    evaluate_profile,
    profile_to_initial,
    traveling_reference,
    write_profile_csv,
    peakon_u0,
    peakon_v0,
    peakon_q0,
    oh_exact,
)
from .time_stepper import (
    ThetaConfig,
    DiagnosticsRecord,
    SimulationResult,
    theta_step,
    run_simulation,
    discrete_energy,
    conserved_quantities,
)

__all__ = [name for name in dir() if not name.startswith("_")]
