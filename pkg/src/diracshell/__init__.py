"""Boundary-integral spectral solver for Dirac operators with electrostatic delta-shell interactions."""

from .errors import (
    AssemblyIntegrityError,
    BranchPointError,
    ConfigError,
    DomainError,
    ExcludedCouplingError,
    IllConditionedError,
    MeshError,
    NearSingularError,
    SingularityError,
    SolverError,
)
from .kernels import DiracAlgebra, PhysParams, green_kernel, green_kernel_dlambda
from .operators import (
    AssembledOperator,
    SurfaceDensity,
    apply_gamma,
    apply_gamma_star,
    assemble_dM,
    assemble_M,
    assemble_M_schrodinger,
    assemble_M_shifted,
)
from .radial import RadialChannel, sphere_bound_states_radial
from .resolvent import (
    ResolventRequest,
    dirac_resolvent_apply,
    free_resolvent_apply,
    nonrel_limit_experiment,
    schrodinger_resolvent_apply,
)
from .schur import certify_gamma0, certify_M0, certify_operator_norm, certify_R0, surface_constant, volume_constant
from .spectral import (
    eig_M,
    eigenvalue_count_experiment,
    estimate_M0,
    find_bound_states,
    pairing_check,
    scan_curves,
    trace_formula_check,
)
from .surface import Surface, load_mesh, make_sphere
from .volume import VolumeGrid

__version__ = "0.1.0"
