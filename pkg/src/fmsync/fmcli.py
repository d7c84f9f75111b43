"""Command-line entry point.

Subcommands: design (gain synthesis + certificate), simulate (one scenario to
CSV), compare-noise (noise-free modulated vs noisy unmodulated vs noisy
modulated, same seed and initial conditions), verify (invariant suite with
JUnit XML output).  Configs are single JSON files, schema in docs/config.md.
All file writes are atomic (temp then rename).

Exit codes: 0 success, 2 config error, 3 synthesis infeasible,
4 simulation failure, 5 verification failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
import xml.etree.ElementTree as ET
from dataclasses import replace

import numpy as np

from . import __version__
from .errors import (
    ConfigError,
    FmsyncError,
    IntegrationFailureError,
    ObserverSingularityError,
    SynthesisInfeasibleError,
)
from . import gains as gainsmod
from .linsolve import is_hurwitz, solve_lyapunov
from .netgraph import build_topology, decompose, default_topology_6, has_spanning_tree
from .plant import AgentParams, get_carrier
from .simkit import (
    SCENARIOS,
    SimConfig,
    _atomic_write,
    measure_envelope,
    simulate,
    sync_metrics,
    write_agent_csv,
    write_edge_csv,
    write_metrics_csv,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SYNTHESIS = 3
EXIT_SIMULATION = 4
EXIT_VERIFY = 5


def _load_json(path: str) -> dict:
    try:
        with open(path) as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}")


def _require(cfg: dict, key: str):
    if key not in cfg:
        raise ConfigError(f"missing config key {key!r}")
    return cfg[key]


def _topology_from(cfg: dict):
    spec = cfg.get("topology", "default6")
    if spec == "default6":
        return default_topology_6()
    if isinstance(spec, dict) and "adjacency" in spec:
        return build_topology(np.asarray(spec["adjacency"], dtype=float))
    raise ConfigError("topology must be 'default6' or {'adjacency': [[...]]}")


def _agent_from(cfg: dict) -> AgentParams:
    a = _require(cfg, "agent")
    try:
        return AgentParams(S=np.asarray(a["S"], dtype=float),
                           B=np.asarray(a["B"], dtype=float),
                           E=np.asarray(a["E"], dtype=float),
                           omega_c=float(a["omega_c"]))
    except KeyError as exc:
        raise ConfigError(f"agent block missing field {exc}")
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad agent block: {exc}")


def resolve_initial(cfg: dict, n: int, p: int, q: int, agent: AgentParams,
                    carrier_name: str):
    """Explicit arrays, or a seeded default: distinct small sigma offsets with
    the requested initial frequency spread around a common mode, carrier states
    on the unit circle (rotational) or near the resting point (Hindmarsh-Rose).
    """
    init = cfg.get("initial", {})
    if not isinstance(init, dict):
        raise ConfigError("initial must be an object")
    if "sigma" in init or "x" in init:
        if "sigma" not in init or "x" not in init:
            raise ConfigError("explicit initial conditions need both sigma and x")
        sigma0 = np.asarray(init["sigma"], dtype=float)
        x0 = np.asarray(init["x"], dtype=float)
        if sigma0.shape != (n, p) or x0.shape != (n, q):
            raise ConfigError(
                f"initial arrays must have shapes ({n},{p}) and ({n},{q})")
        return sigma0, x0
    seed = int(init.get("seed", 0))
    common = np.asarray(init.get("sigma_common", np.zeros(p)), dtype=float).reshape(p)
    spread = float(init.get("omega_spread", 0.04))
    rng = np.random.default_rng(seed)
    offs = rng.standard_normal((n, p))
    offs -= offs.mean(axis=0)
    span = float(np.ptp(offs @ agent.E))
    if span > 0 and spread > 0:
        offs *= spread / span
    else:
        offs *= 0.0
    sigma0 = common + offs
    if carrier_name == "hindmarsh_rose":
        v = -1.6 + 0.1 * rng.standard_normal(n)
        x0 = np.stack([v, 1.0 - 5.0 * v ** 2, 4.0 * (v + 1.5)], axis=1)
    else:
        phases = 2.0 * np.pi * np.arange(n) / n + 0.1
        x0 = np.zeros((n, q))
        x0[:, 0] = np.cos(phases)
        x0[:, min(1, q - 1)] = np.sin(phases)
    return sigma0, x0


def _gains_from(cfg: dict, agent: AgentParams, topology, overrides: dict):
    g = cfg.get("gains", "synthesize")
    syn = cfg.get("synthesis", {})
    if g == "synthesize":
        dec = decompose(topology)
        ctrl = gainsmod.controller_gain(agent, dec.H, epsilon=float(syn.get("epsilon", 1.0)))
        gz = gainsmod.gamma_zeta(ctrl.Q, dec.W, agent.B, ctrl.M)
        _, gamma_o = gainsmod.gamma_bound(topology.adjacency, ctrl.M,
                                          topology.laplacian, dec.U, gz, topology.n)
        obs = gainsmod.observer_gain(agent, gamma_o)
        return {"K_o": obs.K_o, "M": ctrl.M, "beta": float(syn.get("beta", 10.0)),
                "synthesized": True}
    if not isinstance(g, dict):
        raise ConfigError("gains must be 'synthesize' or an object")
    try:
        out = {"K_o": np.asarray(g["K_o"], dtype=float).reshape(agent.p),
               "M": np.asarray(g["M"], dtype=float).reshape(agent.p),
               "beta": float(g["beta"]), "synthesized": False}
    except KeyError as exc:
        raise ConfigError(f"gains block missing field {exc}")
    if "K_o" in overrides:
        out["K_o"] = overrides["K_o"]
    return out


def build_sim_config(cfg: dict, overrides: dict) -> SimConfig:
    topology = _topology_from(cfg)
    agent = _agent_from(cfg)
    carrier = get_carrier(_require(cfg, "carrier"))
    sim = cfg.get("simulation", {})
    noise = cfg.get("noise", {})
    gains = _gains_from(cfg, agent, topology, {})
    sigma0, x0 = resolve_initial(cfg, topology.n, agent.p, carrier.dim, agent,
                                 carrier.name)
    try:
        return SimConfig(
            topology=topology, agent=agent, carrier=carrier,
            K_o=gains["K_o"], M=gains["M"], beta=gains["beta"],
            sigma0=sigma0, x0=x0,
            dt=float(overrides.get("dt", sim.get("dt", 1e-3))),
            horizon=float(overrides.get("horizon", sim.get("horizon", 300.0))),
            record_stride=int(sim.get("record_stride", 100)),
            scenario=str(overrides.get("scenario", sim.get("scenario", "modulated"))),
            noise_percent=float(noise.get("percent", 0.0)),
            noise_seed=int(overrides.get("seed", noise.get("seed", 12345))),
            observer_sigma_init=str(sim.get("observer_sigma_init", "zero")),
            tail_fraction=float(sim.get("tail_fraction", 0.2)),
            bx_bound=float(sim.get("bx_bound", 0.0)),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc))


def _config_echo(sc: SimConfig, name: str) -> dict:
    return {
        "name": name,
        "carrier": sc.carrier.name,
        "topology": {"adjacency": sc.topology.adjacency.tolist()},
        "agent": {"S": sc.agent.S.tolist(), "B": sc.agent.B.tolist(),
                  "E": sc.agent.E.tolist(), "omega_c": sc.agent.omega_c},
        "gains": {"K_o": sc.K_o.tolist(), "M": sc.M.tolist(), "beta": sc.beta},
        "initial": {"sigma": sc.sigma0.tolist(), "x": sc.x0.tolist()},
        "simulation": {"dt": sc.dt, "horizon": sc.horizon,
                       "record_stride": sc.record_stride, "scenario": sc.scenario,
                       "observer_sigma_init": sc.observer_sigma_init,
                       "tail_fraction": sc.tail_fraction, "bx_bound": sc.bx_bound},
        "noise": {"percent": sc.noise_percent, "seed": sc.noise_seed},
    }


def _out_dir(args) -> str:
    out = args.out or os.environ.get("FMSYNC_OUT_DIR") or "."
    os.makedirs(out, exist_ok=True)
    return out


def _write_json(path: str, payload: dict) -> None:
    _atomic_write(path, json.dumps(payload, indent=2, sort_keys=True) + "\n")


def cmd_design(args) -> int:
    cfg = _load_json(args.config)
    topology = _topology_from(cfg)
    agent = _agent_from(cfg)
    carrier = get_carrier(_require(cfg, "carrier"))
    if abs(float(agent.E @ agent.B)) < 1e-12:
        raise SynthesisInfeasibleError("EB = 0: frequency direction unreachable "
                                       "through the input channel")
    dec = decompose(topology)
    syn = cfg.get("synthesis", {})
    epsilon = float(syn.get("epsilon", 1.0))
    g = cfg.get("gains", "synthesize")
    fixed = isinstance(g, dict)
    m_override = (np.asarray(_require(g, "M"), dtype=float).reshape(agent.p)
                  if fixed else None)
    ctrl = gainsmod.controller_gain(agent, dec.H, epsilon=epsilon, M=m_override)
    gz = gainsmod.gamma_zeta(ctrl.Q, dec.W, agent.B, ctrl.M)
    gamma, gamma_o = gainsmod.gamma_bound(topology.adjacency, ctrl.M,
                                          topology.laplacian, dec.U, gz, topology.n)

    if fixed:
        K_o = np.asarray(_require(g, "K_o"), dtype=float).reshape(agent.p)
        obs = gainsmod.observer_gain_fixed(agent, K_o)
    else:
        obs = gainsmod.observer_gain(agent, gamma_o)
        K_o = obs.K_o

    alpha_lo, alpha_hi = carrier.alpha_lo, carrier.alpha_hi
    if alpha_lo is None or alpha_hi is None:
        # operating envelope measured from an uncontrolled run, 10% padding
        base = build_sim_config(cfg, {})
        alpha_lo, alpha_hi = measure_envelope(replace(base, scenario="ideal"))
    theta, alpha = gainsmod.lipschitz_estimate(carrier, agent.E, alpha_lo, alpha_hi)
    b_x, b_K = gainsmod.bx_bk(obs.P, K_o, theta, carrier, alpha_lo, alpha_hi)
    b_o = gamma_o  # observer error budget on the certificate scale
    cert = gainsmod.small_gain_certificate(topology, dec, agent, obs, ctrl,
                                        theta=theta, alpha=alpha,
                                        alpha_lo=alpha_lo, alpha_hi=alpha_hi,
                                        b_x=b_x, b_K=b_K, b_o=b_o,
                                        b_zeta=gz)

    out = _out_dir(args)
    gains_payload = {
        "K_o": K_o.tolist(),
        "M": ctrl.M.reshape(-1).tolist(),
        "beta": float(g["beta"]) if fixed else cert.beta,
        "certificate_beta": cert.beta,
        "rho": obs.rho,
        "P": obs.P.matrix.tolist(),
        "G": None if ctrl.G is None else ctrl.G.matrix.tolist(),
        "lambda_star": ctrl.lambda_star,
        "epsilon": epsilon,
        "gains_fixed_by_config": fixed,
    }
    _write_json(os.path.join(out, "gains.json"), gains_payload)
    _write_json(os.path.join(out, "certificate.json"), cert.to_dict())
    print(json.dumps({"gains": gains_payload,
                      "certificate_feasible": cert.feasible}, indent=2))
    if not cert.feasible and not fixed:
        raise SynthesisInfeasibleError(
            "certificate infeasible: " + "; ".join(cert.notes))
    return EXIT_OK


def cmd_simulate(args) -> int:
    cfg = _load_json(args.config)
    overrides = {k: v for k, v in
                 [("scenario", args.scenario), ("seed", args.seed),
                  ("dt", args.dt), ("horizon", args.horizon)] if v is not None}
    if "scenario" in overrides and overrides["scenario"] not in SCENARIOS:
        raise ConfigError(f"unknown scenario {overrides['scenario']!r}")
    sc = build_sim_config(cfg, overrides)
    out = _out_dir(args)
    t0 = time.time()
    traj = simulate(sc)
    m = sync_metrics(traj, sc.tail_fraction)
    name = cfg.get("name", os.path.splitext(os.path.basename(args.config))[0])
    paths = {
        "agents": os.path.join(out, f"{name}_{sc.scenario}_agents.csv"),
        "edges": os.path.join(out, f"{name}_{sc.scenario}_edges.csv"),
        "metrics": os.path.join(out, f"{name}_{sc.scenario}_metrics.csv"),
    }
    write_agent_csv(traj, paths["agents"])
    write_edge_csv(traj, paths["edges"])
    write_metrics_csv(traj, paths["metrics"], sc.tail_fraction)
    manifest = {
        "config": _config_echo(sc, name),
        "outputs": paths,
        "seed": sc.noise_seed,
        "tool_version": __version__,
        "wall_clock_s": time.time() - t0,
        "events": traj.events,
        "tail": {"sync_err": m["tail_sync_err"],
                 "max_obs_err": m["tail_max_obs_err"],
                 "phi_norm": m["tail_phi_norm"],
                 "chi_norm": m["tail_chi_norm"]},
    }
    _write_json(os.path.join(out, f"{name}_{sc.scenario}_manifest.json"), manifest)
    print(json.dumps(manifest["tail"], indent=2))
    return EXIT_OK


def cmd_compare_noise(args) -> int:
    cfg = _load_json(args.config)
    overrides = {k: v for k, v in
                 [("seed", args.seed), ("dt", args.dt), ("horizon", args.horizon)]
                 if v is not None}
    base = build_sim_config(cfg, overrides)
    name = cfg.get("name", os.path.splitext(os.path.basename(args.config))[0])
    out = _out_dir(args)
    t0 = time.time()
    tails = {}
    lines = ["scenario,tail_sync_err,tail_max_obs_err,tail_phi_norm,tail_chi_norm"]
    triple = [("modulated", 0.0), ("ideal_noisy", base.noise_percent),
              ("modulated_noisy", base.noise_percent)]
    for scen, pct in triple:
        sc = replace(base, scenario=scen, noise_percent=pct)
        traj = simulate(sc)
        m = sync_metrics(traj, sc.tail_fraction)
        tails[scen] = m["tail_sync_err"]
        lines.append(",".join([scen, f"{m['tail_sync_err']:.17e}",
                               f"{m['tail_max_obs_err']:.17e}",
                               f"{m['tail_phi_norm']:.17e}",
                               f"{m['tail_chi_norm']:.17e}"]))
        write_agent_csv(traj, os.path.join(out, f"{name}_{scen}_agents.csv"))
        write_metrics_csv(traj, os.path.join(out, f"{name}_{scen}_metrics.csv"),
                          sc.tail_fraction)
    _atomic_write(os.path.join(out, f"{name}_noise_comparison.csv"),
                  "\n".join(lines) + "\n")
    ratio = (tails["ideal_noisy"] / tails["modulated"]
             if tails["modulated"] > 0 else float("inf"))
    summary = {
        "config": _config_echo(base, name),
        "noise_percent": base.noise_percent,
        "seed": base.noise_seed,
        "tails": tails,
        "unmodulated_over_modulated_ratio": ratio,
        "modulated_noisy_tail": tails["modulated_noisy"],
        "tool_version": __version__,
        "wall_clock_s": time.time() - t0,
    }
    _write_json(os.path.join(out, f"{name}_noise_summary.json"), summary)
    print(json.dumps({"tails": tails, "ratio": ratio}, indent=2))
    return EXIT_OK


def _verify_checks(cfg: dict):
    """Yields (check_name, callable) pairs; callables raise on failure."""
    topology = _topology_from(cfg)
    agent = _agent_from(cfg)
    carrier = get_carrier(_require(cfg, "carrier"))

    def check_row_sums():
        rs = topology.laplacian @ np.ones(topology.n)
        assert np.all(rs == 0.0), f"Laplacian row sums {rs}"

    def check_spanning_tree():
        assert has_spanning_tree(topology), \
            "connectivity assumption violated: no directed spanning tree"

    def check_decomposition():
        dec = decompose(topology)
        lam = np.real(np.linalg.eigvals(dec.H))
        assert np.min(lam) > 0, f"H eigenvalues not in open right half plane: {lam}"

    def check_gain_identity():
        g = cfg.get("gains", None)
        if isinstance(g, dict):
            K_o = np.asarray(g["K_o"], dtype=float)
        else:
            K_o = np.ones(agent.p)
        rng = np.random.default_rng(5)
        from .fmobserver import k_of
        lo = carrier.alpha_lo if carrier.alpha_lo is not None else 0.5
        hi = carrier.alpha_hi if carrier.alpha_hi is not None else 2.0
        for _ in range(200):
            xh = rng.uniform(lo, hi) * _unit(rng, carrier.dim)
            K = k_of(xh, K_o, carrier)
            err = np.linalg.norm(K @ carrier.f(xh) - K_o)
            assert err < 1e-10, f"gain identity residual {err:.2e}"

    def check_controller_synthesis():
        if topology.n < 2:
            return
        dec = decompose(topology)
        ctrl = gainsmod.controller_gain(agent, dec.H, epsilon=1.0)
        assert is_hurwitz(ctrl.A_zeta), "A_zeta not Hurwitz"
        assert ctrl.Q.eig_min > 0, "Q not positive definite"

    def check_determinism():
        sc = build_sim_config(cfg, {"horizon": min(
            2.0, float(cfg.get("simulation", {}).get("horizon", 2.0)))})
        a = simulate(sc)
        b = simulate(sc)
        assert np.array_equal(a.sigma, b.sigma) and np.array_equal(a.x_hat, b.x_hat), \
            "repeated run differs"

    def check_m_nonzero():
        g = cfg.get("gains", None)
        if isinstance(g, dict) and not np.any(np.asarray(g["M"], dtype=float)):
            raise _SkipCheck("M = 0: small-gain trivially holds, "
                            "consensus checks skipped")

    yield "laplacian_row_sums", check_row_sums
    yield "spanning_tree_assumption", check_spanning_tree
    yield "disagreement_spectrum", check_decomposition
    yield "observer_gain_identity", check_gain_identity
    yield "controller_synthesis", check_controller_synthesis
    yield "consensus_gain_nontrivial", check_m_nonzero
    yield "simulation_determinism", check_determinism


class _SkipCheck(Exception):
    pass


def _unit(rng, d):
    v = rng.standard_normal(d)
    return v / np.linalg.norm(v)


def cmd_verify(args) -> int:
    cfg = _load_json(args.config)
    out = _out_dir(args)
    results = []
    t0 = time.time()
    for name, fn in _verify_checks(cfg):
        tc0 = time.time()
        try:
            fn()
            results.append((name, "pass", "", time.time() - tc0))
        except _SkipCheck as exc:
            results.append((name, "skip", str(exc), time.time() - tc0))
        except AssertionError as exc:
            results.append((name, "fail", str(exc), time.time() - tc0))
        except FmsyncError as exc:
            results.append((name, "fail", f"{type(exc).__name__}: {exc}",
                            time.time() - tc0))
    n_fail = sum(1 for r in results if r[1] == "fail")

    suite = ET.Element("testsuite", name="fmsync-verify",
                       tests=str(len(results)), failures=str(n_fail),
                       time=f"{time.time() - t0:.3f}")
    for name, status, msg, dur in results:
        case = ET.SubElement(suite, "testcase", name=name, time=f"{dur:.3f}")
        if status == "fail":
            ET.SubElement(case, "failure", message=msg)
        elif status == "skip":
            ET.SubElement(case, "skipped", message=msg)
    _atomic_write(os.path.join(out, "verify.xml"),
                  ET.tostring(suite, encoding="unicode"))
    _write_json(os.path.join(out, "verify.json"),
                {"results": [{"name": n, "status": s, "message": m}
                             for n, s, m, _ in results],
                 "failures": n_fail})
    for name, status, msg, _ in results:
        print(f"{status.upper():5s} {name}" + (f": {msg}" if msg else ""))
    return EXIT_OK if n_fail == 0 else EXIT_VERIFY


def make_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="fmsync",
        description="Frequency-modulated multi-agent synchronization toolkit")
    sub = ap.add_subparsers(dest="command", required=True)
    for name, fn in [("design", cmd_design), ("simulate", cmd_simulate),
                     ("compare-noise", cmd_compare_noise), ("verify", cmd_verify)]:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True)
        p.add_argument("--scenario", choices=SCENARIOS, default=None)
        p.add_argument("--out", default=None)
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--dt", type=float, default=None)
        p.add_argument("--horizon", type=float, default=None)
        p.set_defaults(fn=fn)
    return ap


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SynthesisInfeasibleError as exc:
        print(f"synthesis infeasible: {exc}", file=sys.stderr)
        return EXIT_SYNTHESIS
    except (IntegrationFailureError, ObserverSingularityError) as exc:
        print(f"simulation failure: {exc}", file=sys.stderr)
        return EXIT_SIMULATION
    except FmsyncError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SIMULATION


if __name__ == "__main__":
    sys.exit(main())
