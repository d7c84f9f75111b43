"""Per-edge nonlinear frequency observer.

An observer instance reconstructs the modulating state sigma_j (and hence the
frequency omega_j) of one neighbor from that neighbor's transmitted carrier
signal x_j alone.  The gain function K(x_hat) and the correction terms kappa
and mu below are the reference (pure numpy) implementations; the compiled
simulation kernel mirrors them and is tested against this module.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ObserverSingularityError
from .plant import AgentParams, Carrier

F_FLOOR_DEFAULT = 1e-9


@dataclass(frozen=True)
class ObserverState:
    sigma_hat: np.ndarray
    x_hat: np.ndarray


@dataclass(frozen=True)
class ObserverParams:
    """Everything one edge observer needs: gain vector, damping, plant data."""

    K_o: np.ndarray
    beta: float
    agent: AgentParams
    carrier: Carrier
    f_floor: float = F_FLOOR_DEFAULT

    def __post_init__(self):
        K_o = np.asarray(self.K_o, dtype=float).reshape(self.agent.p)
        object.__setattr__(self, "K_o", K_o)
        if self.beta <= 0:
            raise ValueError("beta must be positive")

    @property
    def S_bar(self) -> np.ndarray:
        return self.agent.S - np.outer(self.K_o, self.agent.E)


def k_of(x_hat: np.ndarray, K_o: np.ndarray, carrier: Carrier,
         f_floor: float = F_FLOOR_DEFAULT) -> np.ndarray:
    """Gain function K(x_hat) = K_o f^T(x_hat) / ||f(x_hat)||^2 (p x q).

    Satisfies K(x_hat) f(x_hat) = K_o exactly up to rounding.
    """
    fh = carrier.f(np.asarray(x_hat, dtype=float))
    nf2 = float(fh @ fh)
    if nf2 <= f_floor * f_floor:
        raise ObserverSingularityError(
            f"||f(x_hat)|| = {np.sqrt(nf2):.3e} below floor {f_floor:.1e}")
    return np.outer(np.asarray(K_o, dtype=float), fh) / nf2


def kappa(x: np.ndarray, x_hat: np.ndarray, omega_hat: float,
          params: ObserverParams) -> np.ndarray:
    """Carrier-state correction:
    kappa = -beta x_tilde - f(x) E K(x_hat) x_tilde - [f(x_hat) - f(x)] omega_hat.
    """
    x = np.asarray(x, dtype=float)
    x_hat = np.asarray(x_hat, dtype=float)
    c = params.carrier
    x_tilde = x_hat - x
    K = k_of(x_hat, params.K_o, c, params.f_floor)
    fx = c.f(x)
    fh = c.f(x_hat)
    ek = float(params.agent.E @ (K @ x_tilde))
    return -params.beta * x_tilde - fx * ek - (fh - fx) * float(omega_hat)


def k_prime(x: np.ndarray, x_hat: np.ndarray, omega_hat: float,
            kappa_val: np.ndarray, K_o: np.ndarray, carrier: Carrier,
            f_floor: float = F_FLOOR_DEFAULT) -> np.ndarray:
    """Time derivative of K(x_hat) along the observer's x_hat-dynamics.

    K' = K_o ( [(||f||^2 I - 2 f f^T)/||f||^4] J_f(x_hat)
               (f(x_hat) omega_hat + f_o(x) + kappa) )^T
    which equals d/dt [K_o f^T(x_hat)/||f(x_hat)||^2] by the chain rule.
    """
    x_hat = np.asarray(x_hat, dtype=float)
    fh = carrier.f(x_hat)
    nf2 = float(fh @ fh)
    if nf2 <= f_floor * f_floor:
        raise ObserverSingularityError(
            f"||f(x_hat)|| = {np.sqrt(nf2):.3e} below floor {f_floor:.1e}")
    q = carrier.dim
    msym = (nf2 * np.eye(q) - 2.0 * np.outer(fh, fh)) / (nf2 * nf2)
    x_hat_dot = fh * float(omega_hat) + carrier.f_o(np.asarray(x, dtype=float)) + kappa_val
    inner = msym @ (carrier.jac_f(x_hat) @ x_hat_dot)
    return np.outer(np.asarray(K_o, dtype=float), inner)


def mu(x: np.ndarray, x_hat: np.ndarray, sigma_hat: np.ndarray,
       params: ObserverParams) -> np.ndarray:
    """Modulating-state correction:

    mu = K kappa + K [f(x_hat) - f(x)] omega_hat + K' x_tilde + mu_bar,
    mu_bar = -S_bar K x_tilde - K [f(x_hat) - f(x)] E K x_tilde.
    """
    x = np.asarray(x, dtype=float)
    x_hat = np.asarray(x_hat, dtype=float)
    sigma_hat = np.asarray(sigma_hat, dtype=float)
    c = params.carrier
    a = params.agent
    x_tilde = x_hat - x
    omega_hat = a.omega(sigma_hat)
    K = k_of(x_hat, params.K_o, c, params.f_floor)
    fx = c.f(x)
    fh = c.f(x_hat)
    df = fh - fx
    kap = kappa(x, x_hat, omega_hat, params)
    Kp = k_prime(x, x_hat, omega_hat, kap, params.K_o, c, params.f_floor)
    ek = float(a.E @ (K @ x_tilde))
    mu_bar = -params.S_bar @ (K @ x_tilde) - (K @ df) * ek
    return K @ kap + (K @ df) * omega_hat + Kp @ x_tilde + mu_bar


def observer_derivative(obs: ObserverState, x_j: np.ndarray,
                        params: ObserverParams) -> ObserverState:
    """Assembled observer dynamics driven by the received carrier signal x_j.

    sigma_hat' = S sigma_hat + mu(x_j, x_hat, sigma_hat)
    x_hat'     = f(x_hat) omega_hat + f_o(x_j) + kappa(x_j, x_hat)
    """
    x_j = np.asarray(x_j, dtype=float)
    sigma_hat = np.asarray(obs.sigma_hat, dtype=float)
    x_hat = np.asarray(obs.x_hat, dtype=float)
    a = params.agent
    c = params.carrier
    omega_hat = a.omega(sigma_hat)
    kap = kappa(x_j, x_hat, omega_hat, params)
    return ObserverState(
        sigma_hat=a.S @ sigma_hat + mu(x_j, x_hat, sigma_hat, params),
        x_hat=c.f(x_hat) * omega_hat + c.f_o(x_j) + kap,
    )
