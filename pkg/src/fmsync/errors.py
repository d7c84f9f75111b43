"""Exception hierarchy shared across the package."""


class FmsyncError(Exception):
    """Base class for all package errors."""


class InvalidAdjacencyError(FmsyncError):
    """Adjacency matrix is not square, has negative entries, or a nonzero diagonal."""


class DecompositionError(FmsyncError):
    """Laplacian decomposition undefined (no spanning tree) or ill-conditioned."""


class NoStableSolutionError(FmsyncError):
    """Lyapunov equation has no positive definite solution (A not Hurwitz)."""


class ConditioningError(FmsyncError):
    """A linear system involved in a solve is numerically singular."""


class SynthesisInfeasibleError(FmsyncError):
    """Gain synthesis cannot proceed (non-stabilizable pair, unbounded search, ...)."""


class ConvergenceError(FmsyncError):
    """An iterative solve failed to converge; carries the iterate log."""

    def __init__(self, message, iterates=None):
        super().__init__(message)
        self.iterates = iterates or []


class UnobservableDirectionError(SynthesisInfeasibleError):
    """E B = 0: the closed-form observer gain is undefined."""


class CertificateInfeasibleError(FmsyncError):
    """No positive slack exists for a certificate inequality at sampling resolution."""


class CarrierDegenerateError(FmsyncError):
    """The carrier vector field vanishes inside the sampled operating shell."""


class ObserverSingularityError(FmsyncError):
    """||f(x_hat)|| fell below the configured floor while evaluating the observer gain."""


class IntegrationFailureError(FmsyncError):
    """Non-finite derivative or state encountered during integration."""

    def __init__(self, message, t=None):
        super().__init__(message)
        self.t = t


class ConfigError(FmsyncError):
    """Simulation / synthesis configuration is inconsistent or unparsable."""
