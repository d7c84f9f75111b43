import numpy as np
import pytest
from scipy.linalg import expm

from fmsync import ConfigError, IntegrationFailureError, build_topology
from fmsync.plant import Carrier, rotational_carrier
from fmsync.simkit import (
    SimConfig,
    inject_noise,
    measure_envelope,
    rk4_step,
    simulate,
    sync_metrics,
    write_agent_csv,
    write_edge_csv,
    write_metrics_csv,
)

K_O = np.array([1.80, 1.7556])
M = np.array([0.01, 0.005])


def single_agent_config(example1_agent, **kw):
    defaults = dict(
        topology=build_topology(np.zeros((1, 1))),
        agent=example1_agent,
        carrier=rotational_carrier(),
        K_o=K_O, M=M, beta=10.0,
        sigma0=np.array([[0.0, 0.4]]),
        x0=np.array([[1.0, 0.0]]),
        dt=1e-3, horizon=10.0, record_stride=10,
    )
    defaults.update(kw)
    return SimConfig(**defaults)


def network_config(example1_agent, topology6, **kw):
    rng = np.random.default_rng(5)
    n = topology6.n
    defaults = dict(
        topology=topology6, agent=example1_agent,
        carrier=rotational_carrier(), K_o=K_O, M=M, beta=10.0,
        sigma0=np.column_stack([np.zeros(n), 0.2 + 0.05 * rng.standard_normal(n)]),
        x0=np.column_stack([np.cos(2 * np.pi * np.arange(n) / n),
                            np.sin(2 * np.pi * np.arange(n) / n)]),
        dt=1e-3, horizon=5.0, record_stride=10,
    )
    defaults.update(kw)
    return SimConfig(**defaults)


class TestRK4Step:
    def test_constant_state(self):
        y = rk4_step(np.array([1.0, -2.0]), lambda s: np.zeros(2), 0.1)
        assert np.all(y == [1.0, -2.0])

    def test_exponential_decay_oracle(self):
        y = rk4_step(np.array([1.0]), lambda s: -s, 0.1)
        assert y[0] == pytest.approx(0.90483750, abs=1e-7)
        assert abs(y[0] - np.exp(-0.1)) < 1e-7

    def test_rotation_norm_error_scales_like_dt5(self):
        J = np.array([[0.0, 1.0], [-1.0, 0.0]])
        errs = []
        for dt in (0.1, 0.05):
            y = rk4_step(np.array([1.0, 0.0]), lambda s: J @ s, dt)
            errs.append(abs(np.linalg.norm(y) - 1.0))
        assert errs[1] < errs[0] / 16.0

    def test_rejects_nonpositive_dt(self):
        with pytest.raises(ConfigError):
            rk4_step(np.zeros(1), lambda s: s, 0.0)

    def test_nonfinite_derivative_raises(self):
        with pytest.raises(IntegrationFailureError):
            rk4_step(np.array([1.0]), lambda s: np.array([np.nan]), 0.1)


class TestInjectNoise:
    def test_zero_percent_is_identity_copy(self):
        sig = np.array([1.0, 2.0])
        out = inject_noise(sig, 0.0, np.random.default_rng(0))
        assert np.all(out == sig)
        assert out is not sig

    def test_seed_determinism(self):
        sig = np.array([3.0, -4.0])
        a = inject_noise(sig, 1.0, np.random.default_rng(9))
        b = inject_noise(sig, 1.0, np.random.default_rng(9))
        assert np.all(a == b)

    def test_amplitude_bound(self):
        sig = np.array([3.0, -4.0])          # norm 5, 1% -> amp 0.05
        rng = np.random.default_rng(1)
        draws = np.array([inject_noise(sig, 1.0, rng) - sig for _ in range(100000)])
        assert np.max(np.abs(draws)) <= 0.05
        assert np.max(np.abs(draws)) > 0.049


class TestSimConfigValidation:
    def test_rejects_bad_dt(self, example1_agent):
        with pytest.raises(ConfigError):
            single_agent_config(example1_agent, dt=0.0)

    def test_rejects_horizon_below_dt(self, example1_agent):
        with pytest.raises(ConfigError):
            single_agent_config(example1_agent, horizon=1e-4)

    def test_rejects_unknown_scenario(self, example1_agent):
        with pytest.raises(ConfigError):
            single_agent_config(example1_agent, scenario="open-loop")

    def test_rejects_bad_observer_init(self, example1_agent):
        with pytest.raises(ConfigError):
            single_agent_config(example1_agent, observer_sigma_init="guess")

    def test_rejects_negative_noise(self, example1_agent):
        with pytest.raises(ConfigError):
            single_agent_config(example1_agent, noise_percent=-1.0)

    def test_consensus_requires_spanning_tree(self, example1_agent):
        topo = build_topology(np.zeros((3, 3)))
        with pytest.raises(ConfigError):
            SimConfig(topology=topo, agent=example1_agent,
                      carrier=rotational_carrier(), K_o=K_O, M=M, beta=10.0,
                      sigma0=np.zeros((3, 2)), x0=np.ones((3, 2)),
                      scenario="modulated")

    def test_edges_fixed_ordering(self, example1_agent, topology6):
        cfg = network_config(example1_agent, topology6)
        edges = [tuple(e) for e in cfg.edges]
        assert edges == sorted(edges)
        # one observer per directed edge of the default 6-node topology
        assert len(edges) == 7

    def test_n_steps_rounding(self, example1_agent):
        cfg = single_agent_config(example1_agent, dt=0.1, horizon=1.0)
        assert cfg.n_steps == 10


class TestSingleAgentDynamics:
    def test_sigma_follows_matrix_exponential(self, example1_agent):
        cfg = single_agent_config(example1_agent)
        traj = simulate(cfg)
        for r in (10, 100, len(traj.time) - 1):
            t = traj.time[r]
            want = expm(example1_agent.S * t) @ cfg.sigma0[0]
            assert np.linalg.norm(traj.sigma[r, 0] - want) < 1e-6

    def test_omega_readout_identity(self, example1_agent):
        traj = simulate(single_agent_config(example1_agent))
        want = traj.sigma @ example1_agent.E + example1_agent.omega_c
        assert np.all(traj.omega == want)

    def test_rotational_norm_preserved(self, example1_agent):
        traj = simulate(single_agent_config(example1_agent, horizon=100.0))
        norms = np.linalg.norm(traj.x[:, 0, :], axis=1)
        assert np.max(np.abs(norms - 1.0)) < 1e-6


class TestNetworkSymmetry:
    def test_identical_pair_stays_identical(self, example1_agent):
        A = np.array([[0.0, 1.0], [1.0, 0.0]])
        sigma0 = np.array([[0.0, 0.3], [0.0, 0.3]])
        x0 = np.array([[1.0, 0.0], [1.0, 0.0]])
        cfg = SimConfig(topology=build_topology(A), agent=example1_agent,
                        carrier=rotational_carrier(), K_o=K_O, M=M, beta=10.0,
                        sigma0=sigma0, x0=x0, dt=1e-3, horizon=5.0,
                        record_stride=10)
        traj = simulate(cfg)
        assert np.max(np.abs(traj.sigma[:, 0] - traj.sigma[:, 1])) < 1e-9
        assert np.max(np.abs(traj.x[:, 0] - traj.x[:, 1])) < 1e-9


class TestKernelMatchesReference:
    @pytest.mark.parametrize("scenario", ["modulated", "ideal"])
    def test_paths_agree(self, example1_agent, topology6, scenario):
        cfg = network_config(example1_agent, topology6, scenario=scenario,
                             horizon=2.0)
        fast = simulate(cfg)
        ref_carrier = Carrier(name="rotational-reference", dim=2,
                              f=rotational_carrier().f,
                              f_o=rotational_carrier().f_o,
                              jac_f=rotational_carrier().jac_f)
        slow = simulate(SimConfig(**{**cfg.__dict__, "carrier": ref_carrier}))
        for a, b in ((fast.sigma, slow.sigma), (fast.x, slow.x),
                     (fast.sigma_hat, slow.sigma_hat),
                     (fast.x_hat, slow.x_hat), (fast.chi, slow.chi)):
            assert np.max(np.abs(a - b)) < 1e-12


class TestDeterminism:
    @pytest.mark.parametrize("scenario", ["modulated_noisy", "ideal_noisy"])
    def test_repeat_runs_identical(self, example1_agent, topology6, scenario):
        cfg = network_config(example1_agent, topology6, scenario=scenario,
                             noise_percent=1.0, noise_seed=321, horizon=2.0)
        a = simulate(cfg)
        b = simulate(cfg)
        assert np.all(a.sigma == b.sigma)
        assert np.all(a.x_hat == b.x_hat)
        assert np.all(a.chi == b.chi)

    def test_seed_changes_noisy_run(self, example1_agent, topology6):
        cfg = network_config(example1_agent, topology6,
                             scenario="modulated_noisy", noise_percent=1.0,
                             noise_seed=1, horizon=2.0)
        other = SimConfig(**{**cfg.__dict__, "noise_seed": 2})
        assert np.any(simulate(cfg).sigma != simulate(other).sigma)


class TestMeasureEnvelope:
    def test_rotational_envelope_brackets_radius(self, example1_agent):
        cfg = single_agent_config(example1_agent, horizon=50.0)
        lo, hi = measure_envelope(cfg)
        assert lo == pytest.approx(0.9, rel=1e-3)
        assert hi == pytest.approx(1.1, rel=1e-3)
        assert lo < 1.0 < hi


class TestSyncMetrics:
    def test_recomputation_oracle(self, example1_agent, topology6):
        traj = simulate(network_config(example1_agent, topology6))
        m = sync_metrics(traj, tail_fraction=0.25)
        R, n = traj.omega.shape
        spread = np.array([
            max(abs(traj.omega[r, i] - traj.omega[r, j])
                for i in range(n) for j in range(n))
            for r in range(R)])
        assert np.all(m["sync_err"] == spread)
        obs = np.array([[abs(traj.omega_hat[r, e] - traj.omega[r, j])
                         for e, (_, j) in enumerate(traj.edges)]
                        for r in range(R)])
        assert np.all(m["obs_err"] == obs)
        t0 = m["tail_start_index"]
        assert m["tail_sync_err"] == spread[t0:].max()
        assert m["tail_max_obs_err"] == obs[t0:].max()

    def test_identical_agents_zero_spread(self, example1_agent):
        A = np.array([[0.0, 1.0], [1.0, 0.0]])
        cfg = SimConfig(topology=build_topology(A), agent=example1_agent,
                        carrier=rotational_carrier(), K_o=K_O, M=M, beta=10.0,
                        sigma0=np.tile([0.0, 0.3], (2, 1)),
                        x0=np.tile([1.0, 0.0], (2, 1)),
                        dt=1e-3, horizon=2.0, record_stride=10)
        m = sync_metrics(simulate(cfg))
        assert m["tail_sync_err"] < 1e-9

    def test_tail_fraction_validated(self, example1_agent, topology6):
        traj = simulate(network_config(example1_agent, topology6, horizon=1.0))
        with pytest.raises(ConfigError):
            sync_metrics(traj, tail_fraction=0.0)


@pytest.fixture(scope="module")
def traj(example1_agent, topology6):
    return simulate(network_config(example1_agent, topology6, horizon=1.0))


class TestCsvWriters:
    def test_agent_csv_round_trip(self, traj, tmp_path):
        path = tmp_path / "agents.csv"
        write_agent_csv(traj, str(path))
        with open(path) as fh:
            header = fh.readline().strip()
        assert header == "t,agent,sigma_1,sigma_2,x_1,x_2,omega"
        data = np.genfromtxt(path, delimiter=",", skip_header=1)
        R, n = traj.omega.shape
        assert data.shape == (R * n, 7)
        assert np.all(data[:n, 1] == np.arange(1, n + 1))
        got = data[:, 2:4].reshape(R, n, 2)
        assert np.max(np.abs(got - traj.sigma)) == 0.0

    def test_edge_csv_round_trip(self, traj, tmp_path):
        path = tmp_path / "edges.csv"
        write_edge_csv(traj, str(path))
        with open(path) as fh:
            header = fh.readline().strip()
        assert header == ("t,observer_agent,source_agent,"
                          "sigma_hat_1,sigma_hat_2,x_hat_1,x_hat_2,omega_hat")
        data = np.genfromtxt(path, delimiter=",", skip_header=1)
        R = traj.time.shape[0]
        ne = traj.edges.shape[0]
        assert data.shape == (R * ne, 8)
        assert np.all(data[:ne, 1:3] == traj.edges + 1)

    def test_metrics_csv_matches_sync_metrics(self, traj, tmp_path):
        path = tmp_path / "metrics.csv"
        write_metrics_csv(traj, str(path))
        data = np.genfromtxt(path, delimiter=",", skip_header=1, names=None)
        m = sync_metrics(traj)
        assert np.max(np.abs(data[:, 1] - m["sync_err"])) == 0.0
        assert np.max(np.abs(data[:, 4] - m["chi_norm"])) == 0.0

    def test_no_temp_files_left(self, traj, tmp_path):
        write_agent_csv(traj, str(tmp_path / "a.csv"))
        write_edge_csv(traj, str(tmp_path / "e.csv"))
        assert not list(tmp_path.glob("*.tmp"))
