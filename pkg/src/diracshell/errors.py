"""Exception hierarchy shared by all modules."""


class SolverError(Exception):
    """Base class for solver failures."""


class DomainError(SolverError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class SingularityError(DomainError):
    """A kernel was evaluated at zero displacement."""


class BranchPointError(DomainError):
    """A derivative was requested at a square-root branch point."""


class ExcludedCouplingError(DomainError):
    """The coupling equals +-2c, where the shell operator is not self-adjoint."""


class NearSingularError(SolverError):
    """A target point is too close to a singular point of the quadrature."""


class IllConditionedError(SolverError, ArithmeticError):
    """A linear system is too ill-conditioned to be solved reliably."""


class AssemblyIntegrityError(SolverError, ArithmeticError):
    """An assembled operator violates a structural invariant."""


class MeshError(SolverError, ValueError):
    """A mesh file could not be parsed or is geometrically invalid."""


class ConfigError(SolverError, ValueError):
    """A run configuration is malformed."""
