"""Consensus control laws and the perturbation diagnostic.

The modulated controller only ever sees the agent's own state and its own
observer outputs; the ideal (unmodulated) baseline sees neighbor states
directly and exists for comparison experiments.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Optional

import numpy as np

from .errors import ConfigError


@dataclass(frozen=True)
class ControlInput:
    chi: float
    timestamp: float = 0.0


@dataclass(frozen=True)
class PerturbationDiag:
    phi_i: tuple
    phi: np.ndarray


def _as_row(M) -> np.ndarray:
    return np.asarray(M, dtype=float).reshape(1, -1)


def control_modulated(sigma_i: np.ndarray, estimates: Mapping[int, np.ndarray],
                      weights: Mapping[int, float], M, timestamp: float = 0.0) -> ControlInput:
    """chi_i = -M sum_{j in N_i} a_ij (sigma_i - sigma_hat_j^i)."""
    Mrow = _as_row(M)
    sigma_i = np.asarray(sigma_i, dtype=float)
    acc = np.zeros_like(sigma_i)
    for j, a_ij in weights.items():
        if j not in estimates:
            raise ConfigError(f"missing observer estimate for neighbor {j}")
        acc += a_ij * (sigma_i - np.asarray(estimates[j], dtype=float))
    return ControlInput(chi=float(-(Mrow @ acc)[0]), timestamp=timestamp)


def control_ideal(sigma_i: np.ndarray, neighbor_sigmas: Mapping[int, np.ndarray],
                  weights: Mapping[int, float], M,
                  noise: Optional[Mapping[int, np.ndarray]] = None,
                  timestamp: float = 0.0) -> ControlInput:
    """Unmodulated baseline chi_i = -M sum a_ij (sigma_i - sigma_j - n_j^i)."""
    Mrow = _as_row(M)
    sigma_i = np.asarray(sigma_i, dtype=float)
    acc = np.zeros_like(sigma_i)
    for j, a_ij in weights.items():
        term = sigma_i - np.asarray(neighbor_sigmas[j], dtype=float)
        if noise is not None and j in noise:
            term = term - np.asarray(noise[j], dtype=float)
        acc += a_ij * term
    return ControlInput(chi=float(-(Mrow @ acc)[0]), timestamp=timestamp)


def perturbation(estimates, true_sigmas, weights) -> PerturbationDiag:
    """phi_i = sum_{j in N_i} a_ij (sigma_hat_j^i - sigma_j), stacked over agents.

    `estimates` and `weights` are sequences of per-agent mappings j -> value.
    """
    phis = []
    for est_i, w_i in zip(estimates, weights):
        acc = None
        for j, a_ij in w_i.items():
            diff = np.asarray(est_i[j], dtype=float) - np.asarray(true_sigmas[j], dtype=float)
            acc = a_ij * diff if acc is None else acc + a_ij * diff
        if acc is None:
            p = np.asarray(true_sigmas[0], dtype=float).shape[0]
            acc = np.zeros(p)
        phis.append(acc)
    return PerturbationDiag(phi_i=tuple(phis), phi=np.concatenate(phis))
