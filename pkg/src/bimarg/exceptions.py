"""Exception types shared across the package."""


class GraphError(ValueError):
    """Malformed bi-directed graph input (duplicate vertex, self-loop, ...)."""


class SchemeError(ValueError):
    """The marginal scheme cannot be built for the requested graph."""


class OrderDecomposabilityError(SchemeError):
    """The marginal ordering is not order decomposable."""


class NonpositiveProbabilityError(ValueError):
    """A probability fell at or below the floor where a log is required."""


class NonConvergenceError(RuntimeError):
    """The interaction-to-probability inversion did not converge."""


class SingularJacobianError(RuntimeError):
    """The change-of-variables Jacobian is numerically singular."""


class StageExhaustedError(RuntimeError):
    """A staged sampler ran out of first-stage proposals."""
