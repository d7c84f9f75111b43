"""Agent dynamics: the sigma/omega subsystem and pluggable nonlinear carriers.

A carrier is the nonlinear x-dynamics  x' = f(x) omega + f_o(x)  whose
oscillation rate encodes the transmitted information.  Two carriers ship
built in: a planar rotational oscillator and the Hindmarsh-Rose bursting
neuron; custom carriers can be registered programmatically.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import ConfigError


@dataclass(frozen=True)
class Carrier:
    name: str
    dim: int
    f: Callable[[np.ndarray], np.ndarray]
    f_o: Callable[[np.ndarray], np.ndarray]
    jac_f: Callable[[np.ndarray], np.ndarray]
    alpha_lo: Optional[float] = None
    alpha_hi: Optional[float] = None


@dataclass(frozen=True)
class AgentParams:
    """(S, B, E, omega_c) defining the modulating subsystem.

    sigma' = S sigma + B chi,  omega = E sigma + omega_c.
    """

    S: np.ndarray
    B: np.ndarray
    E: np.ndarray
    omega_c: float

    def __post_init__(self):
        S = np.atleast_2d(np.asarray(self.S, dtype=float))
        p = S.shape[0]
        B = np.asarray(self.B, dtype=float).reshape(p)
        E = np.asarray(self.E, dtype=float).reshape(p)
        if S.shape != (p, p):
            raise ConfigError(f"S must be square, got {S.shape}")
        if self.omega_c <= 0:
            raise ConfigError("omega_c must be positive")
        object.__setattr__(self, "S", S)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "E", E)

    @property
    def p(self) -> int:
        return self.S.shape[0]

    def omega(self, sigma: np.ndarray) -> float:
        return float(self.E @ sigma + self.omega_c)


@dataclass(frozen=True)
class AgentState:
    sigma: np.ndarray
    x: np.ndarray


def agent_derivative(state: AgentState, chi: float, params: AgentParams,
                     carrier: Carrier) -> AgentState:
    """Right-hand side of the agent dynamics for a scalar control input."""
    sigma = np.asarray(state.sigma, dtype=float)
    x = np.asarray(state.x, dtype=float)
    if sigma.shape != (params.p,):
        raise ConfigError(f"sigma has shape {sigma.shape}, expected ({params.p},)")
    if x.shape != (carrier.dim,):
        raise ConfigError(f"x has shape {x.shape}, expected ({carrier.dim},)")
    omega = params.omega(sigma)
    return AgentState(
        sigma=params.S @ sigma + params.B * float(chi),
        x=carrier.f(x) * omega + carrier.f_o(x),
    )


_ROT_J = np.array([[0.0, 1.0], [-1.0, 0.0]])


def rotational_carrier() -> Carrier:
    """Planar skew-rotational carrier: f(x) = [[0,1],[-1,0]] x, f_o = 0.

    ||f(x)|| = ||x||, so the norm of the state is conserved for any frequency
    profile.
    """
    return Carrier(
        name="rotational",
        dim=2,
        f=lambda x: _ROT_J @ x,
        f_o=lambda x: np.zeros(2),
        jac_f=lambda x: _ROT_J.copy(),
    )


def _hr_f(x: np.ndarray) -> np.ndarray:
    v, w, _ = x
    return np.array([2.0, -5.0 * v * v - w + 1.0, 0.0])


def _hr_fo(x: np.ndarray) -> np.ndarray:
    v, w, z = x
    return np.array([3.0 * v * v - v ** 3 + w - z, 0.0, 0.005 * (4.0 * (v + 1.5) - z)])


def _hr_jac_f(x: np.ndarray) -> np.ndarray:
    v = x[0]
    return np.array([
        [0.0, 0.0, 0.0],
        [-10.0 * v, -1.0, 0.0],
        [0.0, 0.0, 0.0],
    ])


def hindmarsh_rose_carrier() -> Carrier:
    """Hindmarsh-Rose bursting neuron carrier (membrane potential v, spiking
    variable w, adaptation current z).

    The first component of f is the constant 2, so ||f|| >= 2 everywhere and
    the observer gain function is well defined on the whole state space.
    """
    return Carrier(
        name="hindmarsh_rose",
        dim=3,
        f=_hr_f,
        f_o=_hr_fo,
        jac_f=_hr_jac_f,
    )


_REGISTRY: dict = {}


def register_carrier(carrier: Carrier) -> None:
    _REGISTRY[carrier.name] = carrier


def get_carrier(name: str) -> Carrier:
    try:
        return _REGISTRY[name]
    except KeyError:
        raise ConfigError(
            f"unknown carrier {name!r}; available: {sorted(_REGISTRY)}") from None


register_carrier(rotational_carrier())
register_carrier(hindmarsh_rose_carrier())
