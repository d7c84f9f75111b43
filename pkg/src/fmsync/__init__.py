"""Frequency-modulated multi-agent synchronization toolkit.

Agents exchange only a nonlinear carrier signal; each receiving edge runs a
frequency observer, and a consensus controller drives the modulating states
together.  Submodules: netgraph (topology), linsolve (Lyapunov/Riccati),
gains (synthesis and certificate), plant (carriers and agent dynamics),
fmobserver / fmcontrol (reference laws), simkit (simulation), fmcli (CLI).
"""

from .errors import (
    CarrierDegenerateError,
    CertificateInfeasibleError,
    ConditioningError,
    ConfigError,
    ConvergenceError,
    DecompositionError,
    FmsyncError,
    IntegrationFailureError,
    InvalidAdjacencyError,
    NoStableSolutionError,
    ObserverSingularityError,
    SynthesisInfeasibleError,
    UnobservableDirectionError,
)
from .netgraph import (
    LaplacianDecomposition,
    NetworkTopology,
    build_topology,
    decompose,
    default_topology_6,
    has_spanning_tree,
)
from .plant import AgentParams, Carrier, get_carrier, hindmarsh_rose_carrier, register_carrier, rotational_carrier
from .simkit import SimConfig, Trajectory, simulate, sync_metrics

__version__ = "0.1.0"

__all__ = [
    "AgentParams",
    "Carrier",
    "CarrierDegenerateError",
    "CertificateInfeasibleError",
    "ConditioningError",
    "ConfigError",
    "ConvergenceError",
    "DecompositionError",
    "FmsyncError",
    "IntegrationFailureError",
    "InvalidAdjacencyError",
    "LaplacianDecomposition",
    "NetworkTopology",
    "NoStableSolutionError",
    "ObserverSingularityError",
    "SimConfig",
    "SynthesisInfeasibleError",
    "Trajectory",
    "UnobservableDirectionError",
    "build_topology",
    "decompose",
    "default_topology_6",
    "get_carrier",
    "has_spanning_tree",
    "hindmarsh_rose_carrier",
    "register_carrier",
    "rotational_carrier",
    "simulate",
    "sync_metrics",
    "__version__",
]
