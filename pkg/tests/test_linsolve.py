import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings
from hypothesis import strategies as st

from fmsync.errors import NoStableSolutionError, SynthesisInfeasibleError
from fmsync.linsolve import (
    SymmetricPD,
    condition_ratio,
    is_hurwitz,
    riccati_residual,
    solve_lyapunov,
    solve_riccati,
)


def random_hurwitz(rng, k):
    A = rng.standard_normal((k, k))
    shift = np.max(np.linalg.eigvals(A).real)
    return A - (shift + rng.uniform(0.5, 2.0)) * np.eye(k)


class TestSymmetricPD:
    def test_from_matrix(self):
        P = SymmetricPD.from_matrix(np.array([[2.0, 1.0], [1.0, 2.0]]))
        assert P.eig_min == pytest.approx(1.0)
        assert P.eig_max == pytest.approx(3.0)
        assert P.condition_ratio == pytest.approx(3.0)

    def test_rejects_indefinite(self):
        with pytest.raises(NoStableSolutionError):
            SymmetricPD.from_matrix(np.array([[1.0, 2.0], [2.0, 1.0]]))

    def test_condition_ratio_helper(self):
        assert condition_ratio(np.diag([1.0, 4.0])) == pytest.approx(4.0)


class TestIsHurwitz:
    def test_stable(self):
        assert is_hurwitz(-np.eye(3))

    def test_marginal_rotation_is_not(self):
        assert not is_hurwitz(np.array([[0.0, 1.0], [-1.0, 0.0]]))


class TestSolveLyapunov:
    def test_against_scipy_oracle(self):
        rng = np.random.default_rng(3)
        for k in (2, 3, 5, 8):
            A = random_hurwitz(rng, k)
            R = np.eye(k)
            P = solve_lyapunov(A, R).matrix
            # scipy solves A X + X A^H = Q; our equation transposed matches
            X = scipy.linalg.solve_lyapunov(A.T, -R)
            assert np.allclose(P, X, atol=1e-8)

    def test_residual_contract(self):
        rng = np.random.default_rng(5)
        A = random_hurwitz(rng, 4)
        R = np.eye(4)
        P = solve_lyapunov(A, R).matrix
        res = np.linalg.norm(P @ A + A.T @ P + R, "fro")
        assert res < 1e-9 * (1.0 + np.linalg.norm(R, "fro"))

    def test_unstable_raises(self):
        with pytest.raises(NoStableSolutionError):
            solve_lyapunov(np.eye(2), np.eye(2))

    @settings(max_examples=25, deadline=None)
    @given(st.integers(min_value=0, max_value=10_000))
    def test_positive_definite_for_any_hurwitz(self, seed):
        rng = np.random.default_rng(seed)
        k = int(rng.integers(2, 6))
        P = solve_lyapunov(random_hurwitz(rng, k), np.eye(k))
        assert P.eig_min > 0.0


class TestSolveRiccati:
    def test_example1_residual_and_stabilizing(self, example1_agent):
        S, B = example1_agent.S, example1_agent.B
        lam, eps = 1.0, 1.0
        G = solve_riccati(S, B, lam, eps)
        assert riccati_residual(S, B, lam, eps, G.matrix) < 1e-8
        Bc = B.reshape(-1, 1)
        closed = S - lam * Bc @ Bc.T @ G.matrix
        assert is_hurwitz(closed)
        assert G.eig_min > 0.0

    def test_scalar_closed_form(self):
        # s g + g s - lam g^2 b^2 + eps = 0 with S = [-1], B = [1]
        G = solve_riccati(np.array([[-1.0]]), np.array([1.0]), 2.0, 3.0)
        g = G.matrix[0, 0]
        expected = (-2.0 + np.sqrt(4.0 + 4.0 * 2.0 * 3.0)) / (2.0 * 2.0)
        assert g == pytest.approx(expected, abs=1e-10)

    def test_unstabilizable_raises(self):
        # B lies in the invariant subspace of the stable mode only.
        S = np.diag([1.0, -1.0])
        B = np.array([0.0, 1.0])
        with pytest.raises(SynthesisInfeasibleError):
            solve_riccati(S, B, 1.0, 1.0)

    def test_nonpositive_parameters_raise(self):
        with pytest.raises(SynthesisInfeasibleError):
            solve_riccati(-np.eye(2), np.ones(2), 0.0, 1.0)
