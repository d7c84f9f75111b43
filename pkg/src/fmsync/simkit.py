"""Deterministic simulation of the coupled plant / observer / controller network.

Fixed-step RK4 on a single clock: all derivatives within a step are evaluated
on the pre-step state and committed synchronously.  Built-in carriers run
through the compiled kernel in `_kernel`; custom carriers take the generic
Python path (same math, same commit order, different speed).

Transmission noise is piecewise constant per integration step, each component
drawn uniformly from +-(percent/100)*||transmitted signal||, from a seeded
generator, so runs are bit-reproducible.
"""

from __future__ import annotations

import os
import tempfile
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from . import _kernel
from .errors import ConfigError, IntegrationFailureError, ObserverSingularityError
from .fmobserver import ObserverParams, ObserverState, observer_derivative
from .netgraph import NetworkTopology, has_spanning_tree
from .plant import AgentParams, Carrier

SCENARIOS = ("modulated", "ideal", "ideal_noisy", "modulated_noisy")
_SCEN_ID = {name: i for i, name in enumerate(SCENARIOS)}
_CARRIER_ID = {"rotational": _kernel.CARRIER_ROTATIONAL,
               "hindmarsh_rose": _kernel.CARRIER_HINDMARSH_ROSE}


@dataclass(frozen=True)
class SimConfig:
    topology: NetworkTopology
    agent: AgentParams
    carrier: Carrier
    K_o: np.ndarray
    M: np.ndarray
    beta: float
    sigma0: np.ndarray          # (n, p)
    x0: np.ndarray              # (n, q)
    dt: float = 1e-3
    horizon: float = 300.0
    record_stride: int = 100
    scenario: str = "modulated"
    noise_percent: float = 0.0
    noise_seed: int = 12345
    observer_sigma_init: str = "zero"   # "zero" | "truth"
    f_floor: float = 1e-9
    tail_fraction: float = 0.2
    bx_bound: float = 0.0               # 0 disables the monitor

    def __post_init__(self):
        if self.dt <= 0 or self.horizon < self.dt:
            raise ConfigError("need dt > 0 and horizon >= dt")
        if self.noise_percent < 0:
            raise ConfigError("noise percent must be nonnegative")
        if self.scenario not in SCENARIOS:
            raise ConfigError(f"unknown scenario {self.scenario!r}; one of {SCENARIOS}")
        if self.observer_sigma_init not in ("zero", "truth"):
            raise ConfigError("observer_sigma_init must be 'zero' or 'truth'")
        n, p, q = self.topology.n, self.agent.p, self.carrier.dim
        sigma0 = np.asarray(self.sigma0, dtype=float).reshape(n, p)
        x0 = np.asarray(self.x0, dtype=float).reshape(n, q)
        K_o = np.asarray(self.K_o, dtype=float).reshape(p)
        M = np.asarray(self.M, dtype=float).reshape(p)
        object.__setattr__(self, "sigma0", sigma0)
        object.__setattr__(self, "x0", x0)
        object.__setattr__(self, "K_o", K_o)
        object.__setattr__(self, "M", M)
        if self.scenario in ("modulated", "modulated_noisy") and self.topology.n > 1:
            if not has_spanning_tree(self.topology):
                raise ConfigError("consensus scenario requires a spanning tree")

    @property
    def edges(self) -> np.ndarray:
        """(ne, 2) array of (observer_agent, source_agent), fixed ordering."""
        pairs = []
        for i in range(self.topology.n):
            for j in sorted(self.topology.neighbor_sets[i]):
                pairs.append((i, j))
        return np.array(pairs, dtype=np.int64).reshape(-1, 2)

    @property
    def n_steps(self) -> int:
        return int(round(self.horizon / self.dt))


@dataclass(frozen=True)
class Trajectory:
    time: np.ndarray            # (R,)
    sigma: np.ndarray           # (R, n, p)
    x: np.ndarray               # (R, n, q)
    omega: np.ndarray           # (R, n)
    sigma_hat: np.ndarray       # (R, ne, p)
    x_hat: np.ndarray           # (R, ne, q)
    omega_hat: np.ndarray       # (R, ne)
    chi: np.ndarray             # (R, n)
    phi: np.ndarray             # (R, n, p)
    edges: np.ndarray           # (ne, 2)
    events: dict = field(default_factory=dict)


def rk4_step(state: np.ndarray, deriv: Callable[[np.ndarray], np.ndarray],
             dt: float) -> np.ndarray:
    """One classical Runge-Kutta step of an autonomous system."""
    if dt <= 0:
        raise ConfigError("dt must be positive")
    k1 = np.asarray(deriv(state), dtype=float)
    k2 = np.asarray(deriv(state + 0.5 * dt * k1), dtype=float)
    k3 = np.asarray(deriv(state + 0.5 * dt * k2), dtype=float)
    k4 = np.asarray(deriv(state + dt * k3), dtype=float)
    for k in (k1, k2, k3, k4):
        if not np.all(np.isfinite(k)):
            raise IntegrationFailureError("non-finite derivative in RK4 stage")
    return state + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def inject_noise(signal: np.ndarray, percent: float, rng: np.random.Generator) -> np.ndarray:
    """signal + n, each component of n uniform on +-(percent/100)*||signal||."""
    signal = np.asarray(signal, dtype=float)
    if percent == 0.0:
        return signal.copy()
    amp = percent / 100.0 * float(np.linalg.norm(signal))
    return signal + rng.uniform(-amp, amp, size=signal.shape)


def _phi_from_states(sigma, sigma_hat, edges, adjacency, n, p):
    phi = np.zeros((n, p))
    for e, (i, j) in enumerate(edges):
        phi[i] += adjacency[i, j] * (sigma_hat[e] - sigma[j])
    return phi


def simulate(config: SimConfig) -> Trajectory:
    """Integrate the configured scenario and return the recorded trajectory."""
    if config.carrier.name in _CARRIER_ID:
        return _simulate_fast(config)
    return _simulate_generic(config)


def _observer_inits(config: SimConfig):
    edges = config.edges
    ne = edges.shape[0]
    p, q = config.agent.p, config.carrier.dim
    xh0 = np.zeros((ne, q))
    sh0 = np.zeros((ne, p))
    for e, (i, j) in enumerate(edges):
        xh0[e] = config.x0[j]                       # mandated: x_hat(0) = x_j(0)
        if config.observer_sigma_init == "truth":
            sh0[e] = config.sigma0[j]
    return sh0, xh0


def _unpack(config: SimConfig, t_rec, y_rec, chi_rec):
    n, p, q = config.topology.n, config.agent.p, config.carrier.dim
    edges = config.edges
    ne = edges.shape[0]
    R = t_rec.shape[0]
    x_off = n * p
    sh_off = x_off + n * q
    xh_off = sh_off + ne * p
    sigma = y_rec[:, :x_off].reshape(R, n, p)
    x = y_rec[:, x_off:sh_off].reshape(R, n, q)
    sigma_hat = y_rec[:, sh_off:xh_off].reshape(R, ne, p)
    x_hat = y_rec[:, xh_off:].reshape(R, ne, q)
    omega = sigma @ config.agent.E + config.agent.omega_c
    omega_hat = sigma_hat @ config.agent.E + config.agent.omega_c
    phi = np.zeros((R, n, p))
    for e, (i, j) in enumerate(edges):
        phi[:, i, :] += config.topology.adjacency[i, j] * (sigma_hat[:, e, :] - sigma[:, j, :])
    return sigma, x, omega, sigma_hat, x_hat, omega_hat, phi


def _simulate_fast(config: SimConfig) -> Trajectory:
    sh0, xh0 = _observer_inits(config)
    t_rec, y_rec, chi_rec, status, fail_step, bx_count, bx_first_t = _kernel.run_network(
        _CARRIER_ID[config.carrier.name],
        config.agent.S, config.agent.B, config.agent.E, config.agent.omega_c,
        config.K_o, config.agent.S - np.outer(config.K_o, config.agent.E),
        config.beta, config.M, config.topology.adjacency, config.edges,
        config.sigma0, config.x0, sh0, xh0,
        config.dt, config.n_steps, config.record_stride,
        _SCEN_ID[config.scenario], config.noise_percent, config.noise_seed,
        config.f_floor, config.bx_bound,
    )
    if status == _kernel.STATUS_SINGULAR:
        raise ObserverSingularityError(
            f"||f(x_hat)|| hit the floor at step {fail_step} (t={fail_step * config.dt:.6g} s)")
    if status == _kernel.STATUS_NONFINITE:
        raise IntegrationFailureError(
            f"non-finite state at step {fail_step}", t=fail_step * config.dt)
    sigma, x, omega, sigma_hat, x_hat, omega_hat, phi = _unpack(config, t_rec, y_rec, chi_rec)
    events = {"bx_violations": int(bx_count)}
    if bx_first_t >= 0.0:
        events["bx_first_t"] = float(bx_first_t)
    return Trajectory(time=t_rec, sigma=sigma, x=x, omega=omega,
                      sigma_hat=sigma_hat, x_hat=x_hat, omega_hat=omega_hat,
                      chi=chi_rec, phi=phi, edges=config.edges, events=events)


def _simulate_generic(config: SimConfig) -> Trajectory:
    """Reference path: same dynamics via the pure-Python observer/plant modules."""
    n, p, q = config.topology.n, config.agent.p, config.carrier.dim
    edges = config.edges
    ne = edges.shape[0]
    A = config.topology.adjacency
    obs_params = ObserverParams(K_o=config.K_o, beta=config.beta,
                                agent=config.agent, carrier=config.carrier,
                                f_floor=config.f_floor)
    sh0, xh0 = _observer_inits(config)
    rng = np.random.default_rng(config.noise_seed)
    scen = config.scenario
    car = config.carrier
    ag = config.agent

    sigma = config.sigma0.copy()
    x = config.x0.copy()
    sh = sh0.copy()
    xh = xh0.copy()

    def chi_of(sigma_, sh_, noise_):
        chi = np.zeros(n)
        for e, (i, j) in enumerate(edges):
            if scen in ("modulated", "modulated_noisy"):
                diff = sigma_[i] - sh_[e]
            else:
                diff = sigma_[i] - sigma_[j]
                if scen == "ideal_noisy":
                    diff = diff - noise_[e][:p]
            chi[i] -= A[i, j] * float(config.M @ diff)
        return chi

    def deriv(state, noise_):
        sigma_, x_, sh_, xh_ = state
        chi = chi_of(sigma_, sh_, noise_)
        dsigma = sigma_ @ ag.S.T + np.outer(chi, ag.B)
        dx = np.zeros_like(x_)
        for i in range(n):
            om = ag.omega(sigma_[i])
            dx[i] = car.f(x_[i]) * om + car.f_o(x_[i])
        dsh = np.zeros_like(sh_)
        dxh = np.zeros_like(xh_)
        for e, (i, j) in enumerate(edges):
            y_src = x_[j] + noise_[e][:q] if scen == "modulated_noisy" else x_[j]
            d = observer_derivative(ObserverState(sigma_hat=sh_[e], x_hat=xh_[e]),
                                    y_src, obs_params)
            dsh[e] = d.sigma_hat
            dxh[e] = d.x_hat
        return dsigma, dx, dsh, dxh

    n_steps = config.n_steps
    stride = config.record_stride
    R = n_steps // stride + 1
    t_rec = np.zeros(R)
    sig_rec = np.zeros((R, n, p))
    x_rec = np.zeros((R, n, q))
    sh_rec = np.zeros((R, ne, p))
    xh_rec = np.zeros((R, ne, q))
    chi_rec = np.zeros((R, n))
    zero_noise = np.zeros((max(ne, 1), max(p, q)))

    def record(idx, t, noise_):
        t_rec[idx] = t
        sig_rec[idx] = sigma
        x_rec[idx] = x
        sh_rec[idx] = sh
        xh_rec[idx] = xh
        chi_rec[idx] = chi_of(sigma, sh, noise_)

    record(0, 0.0, zero_noise)
    rec = 1
    dt = config.dt
    for step in range(n_steps):
        if scen == "ideal_noisy" and config.noise_percent > 0:
            noise_ = np.zeros((max(ne, 1), max(p, q)))
            for e, (_, j) in enumerate(edges):
                amp = config.noise_percent / 100.0 * np.linalg.norm(sigma[j])
                noise_[e, :p] = rng.uniform(-amp, amp, p)
        elif scen == "modulated_noisy" and config.noise_percent > 0:
            noise_ = np.zeros((max(ne, 1), max(p, q)))
            for e, (_, j) in enumerate(edges):
                amp = config.noise_percent / 100.0 * np.linalg.norm(x[j])
                noise_[e, :q] = rng.uniform(-amp, amp, q)
        else:
            noise_ = zero_noise

        state = (sigma, x, sh, xh)
        k1 = deriv(state, noise_)
        s2 = tuple(a + 0.5 * dt * b for a, b in zip(state, k1))
        k2 = deriv(s2, noise_)
        s3 = tuple(a + 0.5 * dt * b for a, b in zip(state, k2))
        k3 = deriv(s3, noise_)
        s4 = tuple(a + dt * b for a, b in zip(state, k3))
        k4 = deriv(s4, noise_)
        sigma, x, sh, xh = tuple(
            a + dt / 6.0 * (b1 + 2 * b2 + 2 * b3 + b4)
            for a, b1, b2, b3, b4 in zip(state, k1, k2, k3, k4))
        if (step + 1) % stride == 0:
            if not (np.all(np.isfinite(sigma)) and np.all(np.isfinite(x))
                    and np.all(np.isfinite(sh)) and np.all(np.isfinite(xh))):
                raise IntegrationFailureError("non-finite state", t=(step + 1) * dt)
            record(rec, (step + 1) * dt, noise_)
            rec += 1

    omega = sig_rec @ ag.E + ag.omega_c
    omega_hat = sh_rec @ ag.E + ag.omega_c
    phi = np.zeros((R, n, p))
    for e, (i, j) in enumerate(edges):
        phi[:, i, :] += A[i, j] * (sh_rec[:, e, :] - sig_rec[:, j, :])
    return Trajectory(time=t_rec, sigma=sig_rec, x=x_rec, omega=omega,
                      sigma_hat=sh_rec, x_hat=xh_rec, omega_hat=omega_hat,
                      chi=chi_rec, phi=phi, edges=edges, events={})


def measure_envelope(config: SimConfig, pad: float = 0.10) -> tuple:
    """(alpha_lo, alpha_hi) of ||x(t)|| from an uncontrolled run, padded +-pad."""
    if config.carrier.name in _CARRIER_ID:
        lo, hi = _kernel.run_plant_only(
            _CARRIER_ID[config.carrier.name], config.agent.S, config.agent.E,
            config.agent.omega_c, config.sigma0, config.x0, config.dt,
            config.n_steps)
        lo, hi = float(np.min(lo)), float(np.max(hi))
    else:
        lo, hi = np.inf, 0.0
        for i in range(config.topology.n):
            sig = config.sigma0[i].copy()
            xx = config.x0[i].copy()
            p = config.agent.p

            def d(yv):
                om = config.agent.omega(yv[:p])
                return np.concatenate([config.agent.S @ yv[:p],
                                       config.carrier.f(yv[p:]) * om
                                       + config.carrier.f_o(yv[p:])])

            yv = np.concatenate([sig, xx])
            for _ in range(config.n_steps):
                yv = rk4_step(yv, d, config.dt)
                nrm = float(np.linalg.norm(yv[p:]))
                lo, hi = min(lo, nrm), max(hi, nrm)
    return max(lo * (1.0 - pad), 1e-12), hi * (1.0 + pad)


def sync_metrics(traj: Trajectory, tail_fraction: float = 0.2) -> dict:
    """Pairwise frequency spread, observer errors, and their tail suprema.

    The tail supremum over the last `tail_fraction` of the horizon is the
    finite-horizon surrogate for the asymptotic limsup.
    """
    if not (0.0 < tail_fraction <= 1.0):
        raise ConfigError("tail_fraction must lie in (0, 1]")
    omega = traj.omega
    R, n = omega.shape
    spread = np.zeros(R)
    for i in range(n):
        for j in range(i + 1, n):
            spread = np.maximum(spread, np.abs(omega[:, i] - omega[:, j]))
    obs_err = np.abs(traj.omega_hat - traj.omega[:, traj.edges[:, 1]]) \
        if traj.edges.size else np.zeros((R, 0))
    max_obs_err = obs_err.max(axis=1) if obs_err.shape[1] else np.zeros(R)
    phi_norm = np.linalg.norm(traj.phi.reshape(R, -1), axis=1)
    chi_norm = np.linalg.norm(traj.chi, axis=1)

    tail_start = int(np.floor(R * (1.0 - tail_fraction)))
    tail_start = min(max(tail_start, 0), R - 1)
    return {
        "sync_err": spread,
        "obs_err": obs_err,
        "max_obs_err": max_obs_err,
        "phi_norm": phi_norm,
        "chi_norm": chi_norm,
        "tail_start_index": tail_start,
        "tail_sync_err": float(spread[tail_start:].max()),
        "tail_max_obs_err": float(max_obs_err[tail_start:].max()) if R else 0.0,
        "tail_obs_err_per_edge": obs_err[tail_start:].max(axis=0) if obs_err.shape[1] else np.zeros(0),
        "tail_phi_norm": float(phi_norm[tail_start:].max()),
        "tail_chi_norm": float(chi_norm[tail_start:].max()),
    }


def _atomic_write(path: str, text: str) -> None:
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=d, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _fmt(v: float) -> str:
    return f"{v:.17e}"


def write_agent_csv(traj: Trajectory, path: str) -> None:
    p = traj.sigma.shape[2]
    q = traj.x.shape[2]
    header = (["t", "agent"] + [f"sigma_{k+1}" for k in range(p)]
              + [f"x_{k+1}" for k in range(q)] + ["omega"])
    lines = [",".join(header)]
    for r, t in enumerate(traj.time):
        for i in range(traj.sigma.shape[1]):
            row = [_fmt(t), str(i + 1)]
            row += [_fmt(v) for v in traj.sigma[r, i]]
            row += [_fmt(v) for v in traj.x[r, i]]
            row.append(_fmt(traj.omega[r, i]))
            lines.append(",".join(row))
    _atomic_write(path, "\n".join(lines) + "\n")


def write_edge_csv(traj: Trajectory, path: str) -> None:
    p = traj.sigma_hat.shape[2]
    q = traj.x_hat.shape[2]
    header = (["t", "observer_agent", "source_agent"]
              + [f"sigma_hat_{k+1}" for k in range(p)]
              + [f"x_hat_{k+1}" for k in range(q)] + ["omega_hat"])
    lines = [",".join(header)]
    for r, t in enumerate(traj.time):
        for e, (i, j) in enumerate(traj.edges):
            row = [_fmt(t), str(i + 1), str(j + 1)]
            row += [_fmt(v) for v in traj.sigma_hat[r, e]]
            row += [_fmt(v) for v in traj.x_hat[r, e]]
            row.append(_fmt(traj.omega_hat[r, e]))
            lines.append(",".join(row))
    _atomic_write(path, "\n".join(lines) + "\n")


def write_metrics_csv(traj: Trajectory, path: str, tail_fraction: float = 0.2) -> None:
    m = sync_metrics(traj, tail_fraction)
    lines = ["t,sync_err,max_obs_err,phi_norm,chi_norm"]
    for r, t in enumerate(traj.time):
        lines.append(",".join([_fmt(t), _fmt(m["sync_err"][r]), _fmt(m["max_obs_err"][r]),
                               _fmt(m["phi_norm"][r]), _fmt(m["chi_norm"][r])]))
    _atomic_write(path, "\n".join(lines) + "\n")
