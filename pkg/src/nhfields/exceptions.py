"""Exception hierarchy shared across the library."""


class NhfieldsError(Exception):
    """Base class for all library errors."""


class DimensionMismatchError(NhfieldsError, ValueError):
    """Covector/vector/array shapes do not match the declared layout."""


class InvalidArgumentError(NhfieldsError, ValueError):
    """Argument violates a documented precondition."""


class EvaluationError(NhfieldsError):
    """A model evaluation produced a non-finite result."""


class RegularityError(NhfieldsError):
    """The Lagrangian Hessian is singular where an inverse is required."""


class OffConstraintError(NhfieldsError):
    """A point expected on the constraint set has |phi| above tolerance."""


class ConstraintRankError(NhfieldsError):
    """The constraint jet-derivative matrix is rank deficient."""


class CompatibilityError(NhfieldsError):
    """The compatibility matrix zeta_alpha(phi_beta) is (near) singular."""


class InternalConsistencyError(NhfieldsError):
    """A verified postcondition failed; indicates a bug, not bad input."""


class DdwSolveError(NhfieldsError):
    """The linear system for the connection coefficients has no solution."""


class DriftError(NhfieldsError):
    """Constraint drift exceeded the configured ceiling during evolution."""


class IntegrationError(NhfieldsError):
    """Time integration produced NaN/Inf or otherwise blew up."""


class ConfigError(NhfieldsError, ValueError):
    """Scenario configuration failed to parse or validate."""
