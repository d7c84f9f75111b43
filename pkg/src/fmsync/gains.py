"""Observer/controller gain synthesis and the full synchronization certificate.

The synthesis chain runs in the order the closed-loop argument needs it:

1. controller gain M (Riccati, or user supplied) and the disagreement matrix
   A_zeta with its Lyapunov certificate Q;
2. the consensus gains gamma_zeta and gamma_chi;
3. the admissible observer gain budget gamma and gamma_o from the small-gain
   bound;
4. the observer gain K_o with its Lyapunov matrix P;
5. sampled Lipschitz constants (theta, alpha), the shell bounds (b_x, b_K),
   the control bound b_chi from the per-agent feasibility margins
   (pi_a, pi_b), and the observer damping beta.

Sampled suprema carry a multiplicative safety factor (default 1.25); selected
constants carry slack 1.1; the gain budget keeps margin 0.9.  All are
configurable.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.signal import place_poles
from scipy.stats import qmc

from .errors import (
    CarrierDegenerateError,
    CertificateInfeasibleError,
    SynthesisInfeasibleError,
    UnobservableDirectionError,
)
from .linsolve import SymmetricPD, is_hurwitz, solve_lyapunov, solve_riccati
from .netgraph import LaplacianDecomposition, NetworkTopology
from .plant import AgentParams, Carrier

SAFETY_FACTOR = 1.25
SLACK_FACTOR = 1.1
MARGIN_FACTOR = 0.9


@dataclass(frozen=True)
class ObserverGain:
    K_o: np.ndarray
    P: SymmetricPD
    rho: float
    gamma_o: float

    @property
    def pb_norm(self) -> float:
        # ||P B|| requires B; stored at construction time instead.
        return self._pb_norm

    _pb_norm: float = 0.0

    @property
    def gain_measure(self) -> float:
        """||PB|| sqrt(varpi(P)), the quantity bounded by gamma_o."""
        return self._pb_norm * np.sqrt(self.P.condition_ratio)


@dataclass(frozen=True)
class ControllerGain:
    M: np.ndarray
    G: Optional[SymmetricPD]
    lambda_star: float
    epsilon: float
    Q: SymmetricPD
    A_zeta: np.ndarray


@dataclass(frozen=True)
class CertificateReport:
    gamma: float
    gamma_o: float
    gamma_zeta: float
    gamma_chi: float
    gamma_sigma: float
    theta: float
    alpha: float
    alpha_lo: float
    alpha_hi: float
    b_x: float
    b_K: float
    b_o: float
    b_zeta: float
    b_chi: float
    b_sigma: float
    beta: float
    pi_a: np.ndarray
    pi_b: np.ndarray
    feasible: bool
    margins: dict
    notes: tuple = ()

    def to_dict(self) -> dict:
        d = {
            "gamma": self.gamma,
            "gamma_o": self.gamma_o,
            "gamma_zeta": self.gamma_zeta,
            "gamma_chi": self.gamma_chi,
            "gamma_sigma": self.gamma_sigma,
            "theta": self.theta,
            "alpha": self.alpha,
            "alpha_lo": self.alpha_lo,
            "alpha_hi": self.alpha_hi,
            "b_x": self.b_x,
            "b_K": self.b_K,
            "b_o": self.b_o,
            "b_zeta": self.b_zeta,
            "b_chi": self.b_chi,
            "b_sigma": self.b_sigma,
            "beta": self.beta,
            "pi_a": list(map(float, self.pi_a)),
            "pi_b": list(map(float, self.pi_b)),
            "feasible": bool(self.feasible),
            "margins": {k: float(v) for k, v in self.margins.items()},
            "notes": list(self.notes),
        }
        return d


def _skew_rho_bound(varsigma: float, gamma_o: float) -> float:
    return max(1.0, (2.0 + 2.0 * varsigma ** 2 + 2.0 * varsigma) / (gamma_o ** 2 * varsigma))


def _observer_from_rho(agent: AgentParams, rho: float) -> tuple:
    EB = float(agent.E @ agent.B)
    if abs(EB) < 1e-14:
        raise UnobservableDirectionError("E B = 0; closed-form observer gain undefined")
    K_o = (rho * agent.B + agent.S @ agent.B) / EB
    if (_is_skew_2x2(agent.S) and agent.B[0] == agent.B[1]
            and agent.E[1] == 0.0):
        # P (S - K_o E) + (.)^T P = -I has the exact solution below, which
        # stays accurate for the very deep rho the numeric solver cannot
        # certify to its residual contract
        varsigma = float(agent.S[0, 1])
        P = SymmetricPD.from_matrix(np.array(
            [[1.0, -1.0], [-1.0, (rho + 2.0 * varsigma) / rho]])
            / (2.0 * varsigma))
        return K_o, P
    S_bar = agent.S - np.outer(K_o, agent.E)
    P = solve_lyapunov(S_bar, np.eye(agent.p))
    return K_o, P


def _is_skew_2x2(S: np.ndarray) -> bool:
    return (S.shape == (2, 2) and S[0, 0] == 0.0 and S[1, 1] == 0.0
            and S[0, 1] == -S[1, 0] and S[0, 1] > 0.0)


def observer_gain(agent: AgentParams, gamma_o: float,
                  pole_locations=None, rho_max: float = 1e9) -> ObserverGain:
    """Find K_o and P with P(S - K_o E) + (.)^T P = -I and ||PB|| sqrt(varpi(P)) < gamma_o.

    For the 2x2 skew form the closed-form K_o = (rho B + S B)/(E B) is used,
    with rho started at its analytic bound and doubled until the gain measure
    clears gamma_o.  General (S, E, B) falls back to pole placement at
    `pole_locations` followed by the same check loop (poles are scaled deeper
    into the left half plane on failure).
    """
    if gamma_o <= 0:
        raise SynthesisInfeasibleError("gamma_o must be positive")
    if _is_skew_2x2(agent.S):
        varsigma = float(agent.S[0, 1])
        rho = _skew_rho_bound(varsigma, gamma_o)
        while rho <= rho_max:
            K_o, P = _observer_from_rho(agent, rho)
            pb = float(np.linalg.norm(P.matrix @ agent.B))
            if pb * np.sqrt(P.condition_ratio) < gamma_o:
                return ObserverGain(K_o=K_o, P=P, rho=rho, gamma_o=gamma_o, _pb_norm=pb)
            rho *= 2.0
        raise SynthesisInfeasibleError(
            f"rho search exceeded {rho_max:.1e} without meeting gamma_o={gamma_o:.3e}")

    if pole_locations is None:
        pole_locations = -(1.0 + np.arange(agent.p, dtype=float))
    poles = np.asarray(pole_locations, dtype=float)
    scale = 1.0
    while scale <= rho_max:
        placed = place_poles(agent.S.T, agent.E.reshape(agent.p, 1), scale * poles)
        K_o = placed.gain_matrix.reshape(agent.p)
        S_bar = agent.S - np.outer(K_o, agent.E)
        P = solve_lyapunov(S_bar, np.eye(agent.p))
        pb = float(np.linalg.norm(P.matrix @ agent.B))
        if pb * np.sqrt(P.condition_ratio) < gamma_o:
            return ObserverGain(K_o=K_o, P=P, rho=scale, gamma_o=gamma_o, _pb_norm=pb)
        scale *= 2.0
    raise SynthesisInfeasibleError(
        f"pole-placement search exceeded scale {rho_max:.1e} for gamma_o={gamma_o:.3e}")


def observer_gain_fixed(agent: AgentParams, K_o) -> ObserverGain:
    """Wrap a user-supplied K_o: solve for P and record the achieved gain measure.

    gamma_o is set just above the achieved ||PB|| sqrt(varpi(P)) so the
    recorded invariant holds by construction; certificate feasibility against
    the small-gain budget is judged separately.
    """
    K_o = np.asarray(K_o, dtype=float).reshape(agent.p)
    S_bar = agent.S - np.outer(K_o, agent.E)
    P = solve_lyapunov(S_bar, np.eye(agent.p))
    pb = float(np.linalg.norm(P.matrix @ agent.B))
    EB = float(agent.E @ agent.B)
    if abs(EB) > 1e-14:
        resid = K_o * EB - agent.S @ agent.B
        rho = float(agent.B @ resid / (agent.B @ agent.B))
    else:
        rho = float("nan")
    achieved = pb * np.sqrt(P.condition_ratio)
    return ObserverGain(K_o=K_o, P=P, rho=rho, gamma_o=achieved * (1.0 + 1e-9),
                        _pb_norm=pb)


def controller_gain(agent: AgentParams, H: np.ndarray, epsilon: float,
                    M=None) -> ControllerGain:
    """Controller gain M = B^T G / 2 from the Riccati equation, plus (A_zeta, Q).

    lambda_star is the smallest real part among the eigenvalues of H.  A user
    supplied M overrides the synthesis; A_zeta Hurwitzness is re-verified
    either way and Q solves Q A_zeta + A_zeta^T Q = -2 I.
    """
    H = np.atleast_2d(np.asarray(H, dtype=float))
    lambda_star = float(np.min(np.linalg.eigvals(H).real))
    if lambda_star <= 0:
        raise SynthesisInfeasibleError("H has an eigenvalue with nonpositive real part")
    if M is None:
        G = solve_riccati(agent.S, agent.B, lambda_star, epsilon)
        M_row = (agent.B @ G.matrix / 2.0).reshape(1, agent.p)
    else:
        G = None
        M_row = np.asarray(M, dtype=float).reshape(1, agent.p)
    nm1 = H.shape[0]
    BM = np.outer(agent.B, M_row[0])
    A_zeta = np.kron(np.eye(nm1), agent.S) - np.kron(H, BM)
    if not is_hurwitz(A_zeta):
        if M is not None:
            raise SynthesisInfeasibleError("supplied M does not make A_zeta Hurwitz")
        raise SynthesisInfeasibleError(
            "internal inconsistency: synthesized M failed the A_zeta check")
    Q = solve_lyapunov(A_zeta, 2.0 * np.eye(A_zeta.shape[0]))
    return ControllerGain(M=M_row, G=G, lambda_star=lambda_star,
                          epsilon=epsilon, Q=Q, A_zeta=A_zeta)


def gamma_zeta(Q: SymmetricPD, W: np.ndarray, B: np.ndarray, M: np.ndarray) -> float:
    """sqrt(varpi(Q)) ||Q (W (x) B M)||."""
    BM = np.outer(np.asarray(B, dtype=float).reshape(-1), np.asarray(M, dtype=float).reshape(-1))
    term = Q.matrix @ np.kron(W, BM)
    return float(np.sqrt(Q.condition_ratio) * np.linalg.norm(term, 2))


def gamma_chi(M: np.ndarray, L: np.ndarray, U: np.ndarray, gamma_zeta_val: float) -> float:
    """||M|| (||L U|| gamma_zeta + 1)."""
    return float(np.linalg.norm(np.atleast_2d(M), 2)
                 * (np.linalg.norm(L @ U, 2) * gamma_zeta_val + 1.0))


def gamma_bound(A: np.ndarray, M: np.ndarray, L: np.ndarray, U: np.ndarray,
                gamma_zeta_val: float, n: int,
                margin_factor: float = MARGIN_FACTOR) -> tuple:
    """(gamma, gamma_o): margin_factor times the small-gain upper bound, and
    gamma_o = min(gamma/8, gamma/sqrt(8 n))."""
    if not (0.0 < margin_factor < 1.0):
        raise SynthesisInfeasibleError("margin_factor must lie in (0, 1)")
    denom = np.linalg.norm(np.atleast_2d(A), 2) * gamma_chi(M, L, U, gamma_zeta_val)
    gamma = margin_factor / denom
    gamma_o = min(gamma / 8.0, gamma / np.sqrt(8.0 * n))
    return float(gamma), float(gamma_o)


def _shell_samples(carrier: Carrier, alpha_lo: float, alpha_hi: float,
                   samples: int, seed: int, tilde_cap: float):
    """Deterministic low-discrepancy (x, x_tilde) pairs over the operating shell."""
    q = carrier.dim
    sampler = qmc.Halton(d=2 * q + 2, seed=seed)
    u = sampler.random(samples)
    # direction from scaled-and-shifted coordinates; degenerate rows replaced
    dirs_x = u[:, :q] - 0.5
    dirs_t = u[:, q:2 * q] - 0.5
    norm_x = np.linalg.norm(dirs_x, axis=1)
    norm_t = np.linalg.norm(dirs_t, axis=1)
    norm_x[norm_x < 1e-12] = 1.0
    norm_t[norm_t < 1e-12] = 1.0
    rad_x = alpha_lo + (alpha_hi - alpha_lo) * u[:, -2]
    rad_t = tilde_cap * (1e-3 + (1.0 - 1e-3) * u[:, -1])
    xs = dirs_x / norm_x[:, None] * rad_x[:, None]
    ts = dirs_t / norm_t[:, None] * rad_t[:, None]
    return xs, ts


def lipschitz_estimate(carrier: Carrier, E, alpha_lo: float, alpha_hi: float,
                       samples: int = 4096, seed: int = 0,
                       safety_factor: float = SAFETY_FACTOR) -> tuple:
    """(theta, alpha) bounding the carrier increments on the operating shell:

    ||f(x + x_tilde) - f(x)|| ||E|| <= theta ||x_tilde||   and
    ||f(x)|| ||E|| <= theta alpha,
    for alpha_lo <= ||x|| <= alpha_hi, ||x_tilde|| <= alpha_lo / 2.
    """
    if not (0 < alpha_lo <= alpha_hi):
        raise CarrierDegenerateError("need 0 < alpha_lo <= alpha_hi")
    e_norm = float(np.linalg.norm(np.asarray(E, dtype=float).reshape(-1)))
    xs, ts = _shell_samples(carrier, alpha_lo, alpha_hi, samples, seed, alpha_lo / 2.0)
    theta_raw = 0.0
    fmax = 0.0
    for x, t in zip(xs, ts):
        fx = carrier.f(x)
        fmax = max(fmax, float(np.linalg.norm(fx)))
        diff = float(np.linalg.norm(carrier.f(x + t) - fx))
        theta_raw = max(theta_raw, diff * e_norm / float(np.linalg.norm(t)))
    if fmax * e_norm == 0.0:
        raise CarrierDegenerateError("f vanishes on the entire sampled shell")
    theta = safety_factor * theta_raw if theta_raw > 0.0 else 1.0
    alpha = safety_factor * fmax * e_norm / theta
    return float(theta), float(alpha)


def bx_bk(P: SymmetricPD, K_o, theta: float, carrier: Carrier,
          alpha_lo: float, alpha_hi: float, samples: int = 4096, seed: int = 1,
          safety_factor: float = SAFETY_FACTOR, bisect_steps: int = 60) -> tuple:
    """(b_x, b_K): the largest b <= alpha_lo/2 with
    8 theta ||P K(x + x_tilde)|| ||x_tilde|| <= 1 on the shell, and the
    (safety-factored) supremum of ||K(x + x_tilde)|| over that region.
    """
    K_o = np.asarray(K_o, dtype=float).reshape(-1)
    cap = alpha_lo / 2.0
    xs, ts = _shell_samples(carrier, alpha_lo, alpha_hi, samples, seed, 1.0)

    def worst(b: float) -> float:
        val = 0.0
        for x, t_unit in zip(xs, ts):
            t = t_unit * b
            fh = carrier.f(x + t)
            nf2 = float(fh @ fh)
            if nf2 < 1e-24:
                return np.inf
            K = np.outer(K_o, fh) / nf2
            val = max(val, 8.0 * theta * np.linalg.norm(P.matrix @ K, 2)
                      * float(np.linalg.norm(t)))
        return val

    if np.all(K_o == 0.0) or worst(cap) <= 1.0:
        b_x = cap
    else:
        lo, hi = 0.0, cap
        for _ in range(bisect_steps):
            mid = 0.5 * (lo + hi)
            if worst(mid) <= 1.0:
                lo = mid
            else:
                hi = mid
        b_x = lo
        if b_x <= 0.0:
            raise CertificateInfeasibleError(
                "no positive b satisfies the shell condition at sampling resolution")

    k_max = 0.0
    for x, t_unit in zip(xs, ts):
        fh = carrier.f(x + t_unit * b_x)
        nf2 = float(fh @ fh)
        if nf2 < 1e-24:
            raise CarrierDegenerateError("f vanishes inside the sampled shell")
        k_max = max(k_max, float(np.linalg.norm(np.outer(K_o, fh) / nf2, 2)))
    return float(b_x), float(safety_factor * k_max)


def beta_select(P: SymmetricPD, pb_norm: float, b_o: float, b_chi: float,
                b_x: float, b_K: float, theta: float, alpha: float,
                slack: float = SLACK_FACTOR) -> float:
    """Observer damping: slack times the max of the three lower bounds.

    The squared-gain coefficient in the first bound is read as ||PB||^2, the
    form the same expression takes in the closed-loop bound chain.
    """
    ta2 = theta * theta * alpha * alpha
    varpi = P.condition_ratio
    rhs1 = (varpi * b_o ** 2 + 8.0 * pb_norm ** 2 * b_chi ** 2 * varpi) / (4.0 * b_x ** 2) + ta2
    rhs2 = b_K ** 2 / 4.0 + ta2
    rhs3 = 1.0 / (4.0 * P.eig_min) + P.eig_min * ta2
    return float(slack * max(rhs1, rhs2, rhs3))


def small_gain_certificate(topology: NetworkTopology, decomp: LaplacianDecomposition,
                        agent: AgentParams, obs: ObserverGain, ctrl: ControllerGain,
                        theta: float, alpha: float, alpha_lo: float, alpha_hi: float,
                        b_x: float, b_K: float, b_o: float, b_zeta: float,
                        margin_factor: float = MARGIN_FACTOR,
                        slack: float = SLACK_FACTOR) -> CertificateReport:
    """Assemble every certificate quantity and the feasibility verdict."""
    A = topology.adjacency
    L = topology.laplacian
    U, W = decomp.U, decomp.W
    n = topology.n
    M = ctrl.M

    gz = gamma_zeta(ctrl.Q, W, agent.B, M)
    gc = gamma_chi(M, L, U, gz)
    gamma, gamma_o_budget = gamma_bound(A, M, L, U, gz, n, margin_factor)
    a_norm = float(np.linalg.norm(A, 2))
    gamma_sigma = gamma * a_norm
    small_gain = gamma * a_norm * gc

    m_norm = float(np.linalg.norm(M, 2))
    ones = np.ones(n)
    a_ones = float(np.linalg.norm(A @ ones))
    pbsp = obs._pb_norm * np.sqrt(obs.P.condition_ratio)

    pi_a = np.zeros(n)
    pi_b = np.zeros(n)
    sq_term = np.sqrt(obs.P.condition_ratio) * b_o + b_x * b_K
    for i in range(n):
        liu = float(np.linalg.norm(L[i] @ U))
        ai1 = float(abs(A[i] @ ones))
        coef = liu * m_norm * a_ones * gz + m_norm * ai1
        pi_a[i] = (liu * m_norm * np.sqrt(ctrl.Q.condition_ratio) * b_zeta
                   + coef * sq_term)
        pi_b[i] = 1.0 - coef * np.sqrt(8.0) * pbsp

    notes = [
        "gamma_sigma is recorded as gamma * ||A||, the observer-to-perturbation "
        "gain implied by the stacked error bound.",
        "the squared-gain coefficient in the first beta bound is ||PB||^2.",
    ]
    feasible = True
    violating = None
    if np.any(pi_b <= 0.0):
        feasible = False
        violating = int(np.argmin(pi_b))
        notes.append(f"pi_b[{violating}] <= 0: control-bound fixed point infeasible")
        b_chi = float("inf")
    else:
        b_chi = float(slack * np.max(pi_a / pi_b))
    if small_gain >= 1.0:
        feasible = False
        notes.append("small-gain product gamma ||A|| gamma_chi >= 1")
    obs_margin = obs.gamma_o - pbsp
    if pbsp >= gamma_o_budget:
        feasible = False
        notes.append("observer gain measure exceeds the small-gain budget gamma_o")

    if np.isfinite(b_chi):
        b_sigma = float(np.sqrt(obs.P.condition_ratio * b_o ** 2
                                + 8.0 * obs._pb_norm ** 2 * b_chi ** 2
                                * obs.P.condition_ratio) + b_x * b_K)
        beta = beta_select(obs.P, obs._pb_norm, b_o, b_chi, b_x, b_K, theta, alpha, slack)
    else:
        b_sigma = float("inf")
        beta = float("inf")

    ta2 = theta * theta * alpha * alpha
    margins = {
        "small_gain": 1.0 - small_gain,
        "observer_gain": obs_margin,
        "observer_budget": gamma_o_budget - pbsp,
        "pi_b_min": float(np.min(pi_b)),
        "b_chi": b_chi - (float(np.max(pi_a / pi_b)) if np.all(pi_b > 0) else float("inf")),
    }
    if np.isfinite(beta):
        varpi = obs.P.condition_ratio
        margins["beta_shell"] = beta - ((varpi * b_o ** 2 + 8.0 * obs._pb_norm ** 2
                                         * b_chi ** 2 * varpi) / (4.0 * b_x ** 2) + ta2)
        margins["beta_gain"] = beta - (b_K ** 2 / 4.0 + ta2)
        margins["beta_lyap"] = beta - (1.0 / (4.0 * obs.P.eig_min)
                                       + obs.P.eig_min * ta2)
    if feasible:
        feasible = all(v > 0.0 for v in margins.values())

    return CertificateReport(
        gamma=gamma, gamma_o=gamma_o_budget, gamma_zeta=gz, gamma_chi=gc,
        gamma_sigma=gamma_sigma, theta=theta, alpha=alpha,
        alpha_lo=alpha_lo, alpha_hi=alpha_hi, b_x=b_x, b_K=b_K,
        b_o=b_o, b_zeta=b_zeta, b_chi=b_chi, b_sigma=b_sigma, beta=beta,
        pi_a=pi_a, pi_b=pi_b, feasible=bool(feasible), margins=margins,
        notes=tuple(notes))
